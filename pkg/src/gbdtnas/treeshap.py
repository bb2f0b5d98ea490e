"""Exact per-sample SHAP values and pairwise interaction values for tree ensembles.

The attribution game is the cover-weighted conditional expectation: walking a
tree, a split on a known feature follows the sample's branch, a split on an
unknown feature averages both children weighted by their training cover.  The
fast kernels compute exact Shapley values of that game in polynomial time per
tree by carrying, along each root-to-leaf path, the unique features met so far
together with a weight vector over subset sizes.  ``brute_force_shapley``
evaluates the same game by full subset enumeration and is the test oracle.

Interaction values for a pair (a, b) are half the difference of b's SHAP value
with feature a conditioned present versus absent (conditioning realized by
tree-path restriction); the diagonal is set so each row sums to the plain SHAP
value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .gbdt import GbdtModel


class ShapError(ValueError):
    """Malformed model (zero covers, bad dimensions) or oversized request."""


@dataclass
class ShapMatrix:
    """Per-sample, per-feature attributions.

    ``expected_value + values[i].sum()`` reproduces the model prediction for
    row i; that identity is asserted on construction when predictions are
    supplied.
    """

    values: np.ndarray
    expected_value: float
    predictions: np.ndarray | None = None

    def __post_init__(self):
        if self.predictions is not None:
            recon = self.expected_value + self.values.sum(axis=1)
            err = float(np.abs(recon - self.predictions).max()) if len(recon) else 0.0
            if err > 1e-9:
                raise ShapError(f"local accuracy violated: max |sum - prediction| = {err:.3e}")


@dataclass
class InteractionTensor:
    """Symmetric (n, D, D) pairwise attributions; diagonal holds main effects."""

    values: np.ndarray

    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=2)


# -- numba kernels ---------------------------------------------------------
#
# Path state lives in four flat buffers (feature id, zero fraction, one
# fraction, subset-size weights).  Each visited node copies its parent's path
# segment to a fresh offset, so a sibling processed later still sees the
# parent segment intact; offsets never exceed (md+2)(md+3)/2 for depth md.


@njit(cache=True)
def _extend(pd, pz, po, pw, off, ud, zero_fraction, one_fraction, feature_index):
    pd[off + ud] = feature_index
    pz[off + ud] = zero_fraction
    po[off + ud] = one_fraction
    pw[off + ud] = 1.0 if ud == 0 else 0.0
    for i in range(ud - 1, -1, -1):
        pw[off + i + 1] += one_fraction * pw[off + i] * (i + 1.0) / (ud + 1.0)
        pw[off + i] = zero_fraction * pw[off + i] * (ud - i) / (ud + 1.0)


@njit(cache=True)
def _unwind(pd, pz, po, pw, off, ud, k):
    one_fraction = po[off + k]
    zero_fraction = pz[off + k]
    nxt = pw[off + ud]
    for i in range(ud - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = pw[off + i]
            pw[off + i] = nxt * (ud + 1.0) / ((i + 1.0) * one_fraction)
            nxt = tmp - pw[off + i] * zero_fraction * (ud - i) / (ud + 1.0)
        else:
            pw[off + i] = pw[off + i] * (ud + 1.0) / (zero_fraction * (ud - i))
    for i in range(k, ud):
        pd[off + i] = pd[off + i + 1]
        pz[off + i] = pz[off + i + 1]
        po[off + i] = po[off + i + 1]


@njit(cache=True)
def _unwound_sum(pz, po, pw, off, ud, k):
    one_fraction = po[off + k]
    zero_fraction = pz[off + k]
    nxt = pw[off + ud]
    total = 0.0
    if one_fraction != 0.0:
        for i in range(ud - 1, -1, -1):
            tmp = nxt * (ud + 1.0) / ((i + 1.0) * one_fraction)
            total += tmp
            nxt = pw[off + i] - tmp * zero_fraction * (ud - i) / (ud + 1.0)
    else:
        for i in range(ud - 1, -1, -1):
            total += pw[off + i] * (ud + 1.0) / (zero_fraction * (ud - i))
    return total


@njit(cache=True)
def _tree_shap(
    cl, cr, sf, th, vl, cov, root, x, phi, condition, condition_feature,
    pd, pz, po, pw, st_node, st_ud, st_poff, st_pz, st_po, st_pf, st_cf,
):
    st_node[0] = root
    st_ud[0] = 0
    st_poff[0] = -1
    st_pz[0] = 1.0
    st_po[0] = 1.0
    st_pf[0] = -1
    st_cf[0] = 1.0
    top = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        ud = st_ud[top]
        poff = st_poff[top]
        pzf = st_pz[top]
        pof = st_po[top]
        pfi = st_pf[top]
        cf = st_cf[top]
        if cf == 0.0:
            continue
        moff = poff + ud + 1
        if poff >= 0:
            for i in range(ud + 1):
                pd[moff + i] = pd[poff + i]
                pz[moff + i] = pz[poff + i]
                po[moff + i] = po[poff + i]
                pw[moff + i] = pw[poff + i]
        if condition == 0 or condition_feature != pfi:
            _extend(pd, pz, po, pw, moff, ud, pzf, pof, pfi)
        if cl[node] < 0:
            for i in range(1, ud + 1):
                w = _unwound_sum(pz, po, pw, moff, ud, i)
                phi[pd[moff + i]] += w * (po[moff + i] - pz[moff + i]) * vl[node] * cf
        else:
            split = sf[node]
            if x[split] <= th[node]:
                hot, cold = cl[node], cr[node]
            else:
                hot, cold = cr[node], cl[node]
            hot_zero = cov[hot] / cov[node]
            cold_zero = cov[cold] / cov[node]
            iz = 1.0
            io = 1.0
            k = -1
            for i in range(ud + 1):
                if pd[moff + i] == split:
                    k = i
                    break
            if k >= 0:
                iz = pz[moff + k]
                io = po[moff + k]
                _unwind(pd, pz, po, pw, moff, ud, k)
                ud -= 1
            hot_cf = cf
            cold_cf = cf
            if condition > 0 and split == condition_feature:
                cold_cf = 0.0
                ud -= 1
            elif condition < 0 and split == condition_feature:
                hot_cf *= hot_zero
                cold_cf *= cold_zero
                ud -= 1
            st_node[top] = cold
            st_ud[top] = ud + 1
            st_poff[top] = moff
            st_pz[top] = iz * cold_zero
            st_po[top] = 0.0
            st_pf[top] = split
            st_cf[top] = cold_cf
            top += 1
            st_node[top] = hot
            st_ud[top] = ud + 1
            st_poff[top] = moff
            st_pz[top] = iz * hot_zero
            st_po[top] = io
            st_pf[top] = split
            st_cf[top] = hot_cf
            top += 1


@njit(cache=True)
def _shap_batch(cl, cr, sf, th, vl, cov, roots, X, out, max_depth):
    buf_len = (max_depth + 2) * (max_depth + 3) // 2 + 4
    pd = np.empty(buf_len, dtype=np.int64)
    pz = np.empty(buf_len, dtype=np.float64)
    po = np.empty(buf_len, dtype=np.float64)
    pw = np.empty(buf_len, dtype=np.float64)
    st = 2 * max_depth + 8
    st_node = np.empty(st, dtype=np.int64)
    st_ud = np.empty(st, dtype=np.int64)
    st_poff = np.empty(st, dtype=np.int64)
    st_pz = np.empty(st, dtype=np.float64)
    st_po = np.empty(st, dtype=np.float64)
    st_pf = np.empty(st, dtype=np.int64)
    st_cf = np.empty(st, dtype=np.float64)
    for s in range(X.shape[0]):
        for t in range(roots.size):
            _tree_shap(
                cl, cr, sf, th, vl, cov, roots[t], X[s], out[s], 0, -1,
                pd, pz, po, pw, st_node, st_ud, st_poff, st_pz, st_po, st_pf, st_cf,
            )


@njit(cache=True)
def _interaction_batch(cl, cr, sf, th, vl, cov, roots, feat_in_tree, X, phi_base, out, max_depth):
    n, D = X.shape
    buf_len = (max_depth + 2) * (max_depth + 3) // 2 + 4
    pd = np.empty(buf_len, dtype=np.int64)
    pz = np.empty(buf_len, dtype=np.float64)
    po = np.empty(buf_len, dtype=np.float64)
    pw = np.empty(buf_len, dtype=np.float64)
    st = 2 * max_depth + 8
    st_node = np.empty(st, dtype=np.int64)
    st_ud = np.empty(st, dtype=np.int64)
    st_poff = np.empty(st, dtype=np.int64)
    st_pz = np.empty(st, dtype=np.float64)
    st_po = np.empty(st, dtype=np.float64)
    st_pf = np.empty(st, dtype=np.int64)
    st_cf = np.empty(st, dtype=np.float64)
    phi_on = np.empty(D, dtype=np.float64)
    phi_off = np.empty(D, dtype=np.float64)
    for s in range(n):
        for a in range(D):
            used = False
            for t in range(roots.size):
                if feat_in_tree[t, a]:
                    used = True
                    break
            if not used:
                continue
            for j in range(D):
                phi_on[j] = 0.0
                phi_off[j] = 0.0
            for t in range(roots.size):
                if not feat_in_tree[t, a]:
                    continue
                _tree_shap(
                    cl, cr, sf, th, vl, cov, roots[t], X[s], phi_on, 1, a,
                    pd, pz, po, pw, st_node, st_ud, st_poff, st_pz, st_po, st_pf, st_cf,
                )
                _tree_shap(
                    cl, cr, sf, th, vl, cov, roots[t], X[s], phi_off, -1, a,
                    pd, pz, po, pw, st_node, st_ud, st_poff, st_pz, st_po, st_pf, st_cf,
                )
            for b in range(a + 1, D):
                v = 0.5 * (phi_on[b] - phi_off[b])
                out[s, a, b] = v
                out[s, b, a] = v
        for a in range(D):
            row = 0.0
            for b in range(D):
                if b != a:
                    row += out[s, a, b]
            out[s, a, a] = phi_base[s, a] - row


@njit(cache=True)
def _predict_batch(cl, cr, sf, th, vl, roots, X, out, base):
    for s in range(X.shape[0]):
        acc = base
        for t in range(roots.size):
            node = roots[t]
            while cl[node] >= 0:
                if X[s, sf[node]] <= th[node]:
                    node = cl[node]
                else:
                    node = cr[node]
            acc += vl[node]
        out[s] = acc


# -- public API ---------------------------------------------------------------


def _checked_pack(model: GbdtModel):
    cl, cr, sf, th, vl, cov, roots, max_depth = model.packed()
    if cov.size and cov.min() <= 0.0:
        raise ShapError("model has a node with zero cover")
    return cl, cr, sf, th, vl, cov, roots, max_depth


def _as_float_matrix(vectors, dim: int) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ShapError(f"expected vectors of length {dim}, got shape {X.shape}")
    return np.ascontiguousarray(X)


def predict_packed(model: GbdtModel, X) -> np.ndarray:
    cl, cr, sf, th, vl, cov, roots, _ = model.packed()
    Xf = _as_float_matrix(X, model.schema_dim)
    out = np.empty(Xf.shape[0], dtype=np.float64)
    _predict_batch(cl, cr, sf, th, vl, roots, Xf, out, model.base_score)
    return out


def shap_values(model: GbdtModel, pool_vectors) -> ShapMatrix:
    """Exact attributions for every vector; rows sum to prediction - expectation."""
    Xf = _as_float_matrix(pool_vectors, model.schema_dim)
    expected = model.expected_value()
    if not model.trees:
        zeros = np.zeros((Xf.shape[0], model.schema_dim), dtype=np.float64)
        return ShapMatrix(zeros, expected, np.full(Xf.shape[0], model.base_score))
    cl, cr, sf, th, vl, cov, roots, max_depth = _checked_pack(model)
    out = np.zeros((Xf.shape[0], model.schema_dim), dtype=np.float64)
    _shap_batch(cl, cr, sf, th, vl, cov, roots, Xf, out, max_depth)
    return ShapMatrix(out, expected, model.predict_batch(Xf))


def _features_in_trees(model: GbdtModel) -> np.ndarray:
    mask = np.zeros((len(model.trees), model.schema_dim), dtype=np.bool_)
    for t, tree in enumerate(model.trees):
        internal = tree.children_left >= 0
        mask[t, tree.feature[internal]] = True
    return mask


def interaction_values(model: GbdtModel, pool_vectors) -> InteractionTensor:
    """Pairwise attribution tensor; needs n * D * D floats of memory."""
    Xf = _as_float_matrix(pool_vectors, model.schema_dim)
    n, D = Xf.shape
    out = np.zeros((n, D, D), dtype=np.float64)
    if not model.trees:
        return InteractionTensor(out)
    cl, cr, sf, th, vl, cov, roots, max_depth = _checked_pack(model)
    phi_base = shap_values(model, Xf).values
    feat_in_tree = _features_in_trees(model)
    _interaction_batch(cl, cr, sf, th, vl, cov, roots, feat_in_tree, Xf, phi_base, out, max_depth)
    return InteractionTensor(out)


# -- subset-enumeration oracles -------------------------------------------------


def _tree_masked_expectation(tree, x: np.ndarray, known_mask: int) -> float:
    """Walk one tree, following x on known features and averaging by cover otherwise."""

    def go(node: int) -> float:
        left = tree.children_left[node]
        if left < 0:
            return float(tree.value[node])
        f = int(tree.feature[node])
        right = tree.children_right[node]
        if known_mask >> f & 1:
            child = left if x[f] <= tree.threshold[node] else right
            return go(child)
        wl = tree.cover[left] / tree.cover[node]
        wr = tree.cover[right] / tree.cover[node]
        return wl * go(left) + wr * go(right)

    return go(0)


def _game_table(model: GbdtModel, x: np.ndarray) -> np.ndarray:
    """Value of the conditional-expectation game for every feature subset.

    Features absent from a tree never change its walk, so each tree is
    tabulated over its own split features and looked up through a compressed
    mask.
    """
    D = model.schema_dim
    v = np.full(1 << D, model.base_score, dtype=np.float64)
    for tree in model.trees:
        present = sorted(set(int(f) for f in tree.feature[tree.children_left >= 0]))
        p = len(present)
        sub = np.empty(1 << p, dtype=np.float64)
        for m in range(1 << p):
            mask = 0
            for i, f in enumerate(present):
                if m >> i & 1:
                    mask |= 1 << f
            sub[m] = _tree_masked_expectation(tree, x, mask)
        for mask in range(1 << D):
            m = 0
            for i, f in enumerate(present):
                if mask >> f & 1:
                    m |= 1 << i
            v[mask] += sub[m]
    return v


def brute_force_shapley(model: GbdtModel, vec) -> np.ndarray:
    """Exact Shapley values of the cover-weighted conditional-expectation game.

    Enumerates all 2^D feature subsets; refuses D > 15.
    """
    D = model.schema_dim
    if D > 15:
        raise ShapError(f"subset enumeration refuses D={D} > 15")
    x = np.asarray(vec, dtype=np.float64)
    if x.shape != (D,):
        raise ShapError(f"expected one length-{D} vector")
    v = _game_table(model, x)
    fact = [math.factorial(k) for k in range(D + 1)]
    w = np.array([fact[k] * fact[D - k - 1] / fact[D] for k in range(D)], dtype=np.float64)
    phi = np.zeros(D, dtype=np.float64)
    sizes = np.array([bin(m).count("1") for m in range(1 << D)], dtype=np.int64)
    for i in range(D):
        bit = 1 << i
        for mask in range(1 << D):
            if mask & bit:
                continue
            phi[i] += w[sizes[mask]] * (v[mask | bit] - v[mask])
    return phi


def brute_force_interactions(model: GbdtModel, vec) -> np.ndarray:
    """Exact pairwise Shapley interaction index; diagonal completes row sums."""
    D = model.schema_dim
    if D > 15:
        raise ShapError(f"subset enumeration refuses D={D} > 15")
    x = np.asarray(vec, dtype=np.float64)
    v = _game_table(model, x)
    phi = brute_force_shapley(model, vec)
    fact = [math.factorial(k) for k in range(D + 1)]
    out = np.zeros((D, D), dtype=np.float64)
    sizes = np.array([bin(m).count("1") for m in range(1 << D)], dtype=np.int64)
    if D >= 2:
        w = np.array(
            [fact[k] * fact[D - k - 2] / (2.0 * fact[D - 1]) for k in range(D - 1)],
            dtype=np.float64,
        )
        for a in range(D):
            for b in range(a + 1, D):
                ba, bb = 1 << a, 1 << b
                acc = 0.0
                for mask in range(1 << D):
                    if mask & (ba | bb):
                        continue
                    delta = v[mask | ba | bb] - v[mask | ba] - v[mask | bb] + v[mask]
                    acc += w[sizes[mask]] * delta
                out[a, b] = acc
                out[b, a] = acc
    for a in range(D):
        out[a, a] = phi[a] - (out[a].sum() - out[a, a])
    return out
