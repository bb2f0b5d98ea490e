"""Gradient-boosted regression trees over binary features.

Trees are grown leaf-wise (best split gain first) with a leaf-count budget,
the squared-error objective, and unit hessians; every feature is 0/1 so the
only candidate threshold is 0.5.  Leaf values are stored pre-scaled by the
learning rate, so a model prediction is ``base_score`` plus a plain sum of
routed leaf values.
"""

from __future__ import annotations

import csv
import heapq
import json
from dataclasses import dataclass, field

import numpy as np

MINMAX = "minmax"
STANDARDIZE = "standardize"


class TrainingError(ValueError):
    """Invalid training inputs or configuration."""


class DegenerateTargetsError(TrainingError):
    """All targets identical: the normalizer has zero spread."""


@dataclass(frozen=True)
class Normalizer:
    """Maps raw accuracies to the training scale and back.

    ``params`` is (y_min, y_max) for min-max and (y_mean, y_std) for
    standardization (population std, no Bessel correction).
    """

    mode: str
    params: tuple[float, float]

    @classmethod
    def fit(cls, mode: str, y: np.ndarray) -> "Normalizer":
        y = np.asarray(y, dtype=np.float64)
        if mode == MINMAX:
            lo, hi = float(y.min()), float(y.max())
            if hi <= lo:
                raise DegenerateTargetsError("min-max normalization needs y_max > y_min")
            return cls(MINMAX, (lo, hi))
        if mode == STANDARDIZE:
            mu, sd = float(y.mean()), float(y.std())
            if sd <= 0.0:
                raise DegenerateTargetsError("standardization needs a nonzero target spread")
            return cls(STANDARDIZE, (mu, sd))
        raise TrainingError(f"unknown normalization mode {mode!r}")

    def normalize(self, y):
        y = np.asarray(y, dtype=np.float64)
        a, b = self.params
        if self.mode == MINMAX:
            return (y - a) / (b - a)
        return (y - a) / b

    def denormalize(self, y):
        y = np.asarray(y, dtype=np.float64)
        a, b = self.params
        if self.mode == MINMAX:
            return y * (b - a) + a
        return y * b + a


@dataclass(frozen=True)
class TrainConfig:
    num_trees: int = 100
    max_leaves: int = 31
    learning_rate: float = 0.1
    min_samples_per_leaf: int = 20
    l2_reg: float = 0.0
    min_gain: float = 0.0

    def __post_init__(self):
        if self.num_trees < 1 or self.max_leaves < 2 or self.min_samples_per_leaf < 1:
            raise TrainingError("num_trees, max_leaves and min_samples_per_leaf must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise TrainingError("learning_rate must lie in (0, 1]")
        if self.l2_reg < 0.0 or self.min_gain < 0.0:
            raise TrainingError("l2_reg and min_gain must be non-negative")


@dataclass
class ArchPool:
    """Evaluated architectures: a 0/1 matrix X and raw accuracies y."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.ascontiguousarray(np.asarray(self.X, dtype=np.uint8))
        self.y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise TrainingError("pool needs an (n, D) bit matrix and a length-n target vector")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def to_csv(self, path, feature_labels=None) -> None:
        labels = list(feature_labels) if feature_labels else [f"f{i}" for i in range(self.dim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(labels + ["accuracy"])
            for bits, acc in zip(self.X, self.y):
                w.writerow([int(b) for b in bits] + [repr(float(acc))])

    @classmethod
    def from_csv(cls, path) -> "ArchPool":
        rows, targets = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise TrainingError(f"{path}: empty pool file")
            if header[-1] != "accuracy":
                raise TrainingError(f"{path}: last column must be named 'accuracy'")
            dim = len(header) - 1
            for ln, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != dim + 1:
                    raise TrainingError(f"{path}:{ln}: expected {dim + 1} columns, got {len(row)}")
                try:
                    bits = [int(v) for v in row[:-1]]
                    acc = float(row[-1])
                except ValueError as exc:
                    raise TrainingError(f"{path}:{ln}: {exc}") from exc
                if any(b not in (0, 1) for b in bits):
                    raise TrainingError(f"{path}:{ln}: feature columns must be 0 or 1")
                rows.append(bits)
                targets.append(acc)
        if not rows:
            raise TrainingError(f"{path}: no data rows")
        return cls(np.array(rows, dtype=np.uint8), np.array(targets, dtype=np.float64))


@dataclass
class RegressionTree:
    """Flat node table; children of leaves are -1, split feature of leaves -1."""

    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    gain: np.ndarray
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return self.children_left.size

    @property
    def n_leaves(self) -> int:
        return int((self.children_left < 0).sum())

    def predict_one(self, bits: np.ndarray) -> float:
        node = 0
        while self.children_left[node] >= 0:
            if bits[self.feature[node]] <= self.threshold[node]:
                node = self.children_left[node]
            else:
                node = self.children_right[node]
        return float(self.value[node])

    def leaf_expectation(self) -> float:
        """Cover-weighted mean leaf value (the tree's output over training data)."""
        leaves = self.children_left < 0
        return float(np.dot(self.value[leaves], self.cover[leaves]) / self.cover[0])


@dataclass
class GbdtModel:
    trees: list[RegressionTree]
    base_score: float
    learning_rate: float
    normalizer: Normalizer
    schema_dim: int
    config: TrainConfig
    train_mse: tuple[float, ...] = ()
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    def predict(self, X) -> np.ndarray | float:
        """Normalized-scale prediction for one vector or a matrix of vectors."""
        arr = np.asarray(X)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.shape[1] != self.schema_dim:
            raise TrainingError(f"expected vectors of length {self.schema_dim}, got {arr.shape[1]}")
        out = self.predict_batch(arr)
        return float(out[0]) if single else out

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        from .treeshap import predict_packed  # deferred: numba import is lazy

        if not self.trees:
            return np.full(X.shape[0], self.base_score, dtype=np.float64)
        return predict_packed(self, np.asarray(X))

    def packed(self) -> tuple:
        """Concatenated node arrays with absolute child indices, for the kernels."""
        if self._packed is None:
            cl, cr, sf, th, vl, cv, roots = [], [], [], [], [], [], []
            offset = 0
            for t in self.trees:
                roots.append(offset)
                shift = np.where(t.children_left >= 0, offset, 0)
                cl.append(t.children_left + shift)
                cr.append(t.children_right + np.where(t.children_right >= 0, offset, 0))
                sf.append(t.feature)
                th.append(t.threshold)
                vl.append(t.value)
                cv.append(t.cover)
                offset += t.n_nodes
            self._packed = (
                np.ascontiguousarray(np.concatenate(cl), dtype=np.int64),
                np.ascontiguousarray(np.concatenate(cr), dtype=np.int64),
                np.ascontiguousarray(np.concatenate(sf), dtype=np.int64),
                np.ascontiguousarray(np.concatenate(th), dtype=np.float64),
                np.ascontiguousarray(np.concatenate(vl), dtype=np.float64),
                np.ascontiguousarray(np.concatenate(cv), dtype=np.float64),
                np.asarray(roots, dtype=np.int64),
                max((t.max_depth for t in self.trees), default=0),
            )
        return self._packed

    def expected_value(self) -> float:
        """Mean model output over the tree-encoded training distribution."""
        return self.base_score + sum(t.leaf_expectation() for t in self.trees)


def fit(pool: ArchPool, config: TrainConfig | None = None, normalization: str = STANDARDIZE) -> GbdtModel:
    """Train trees sequentially on residuals of the normalized targets."""
    config = config or TrainConfig()
    if pool.n == 0:
        raise TrainingError("cannot fit on an empty pool")
    normalizer = Normalizer.fit(normalization, pool.y)
    yn = normalizer.normalize(pool.y)
    base = float(yn.mean())
    pred = np.full(pool.n, base, dtype=np.float64)
    X = pool.X
    trees: list[RegressionTree] = []
    mse: list[float] = []
    for _ in range(config.num_trees):
        resid = yn - pred
        tree = _grow_tree(X, resid, config, pred)
        trees.append(tree)
        mse.append(float(np.mean((yn - pred) ** 2)))
    return GbdtModel(
        trees=trees,
        base_score=base,
        learning_rate=config.learning_rate,
        normalizer=normalizer,
        schema_dim=pool.dim,
        config=config,
        train_mse=tuple(mse),
    )


def _best_split(X: np.ndarray, resid: np.ndarray, idx: np.ndarray, cfg: TrainConfig):
    """Best (feature, gain) at a node, or None when no split clears the bar."""
    n = idx.size
    if n < 2 * cfg.min_samples_per_leaf:
        return None
    sub = X[idx]
    r = resid[idx]
    n1 = sub.sum(axis=0, dtype=np.int64)
    n0 = n - n1
    R = r.sum()
    R1 = r @ sub
    R0 = R - R1
    lam = cfg.l2_reg
    valid = (n1 >= cfg.min_samples_per_leaf) & (n0 >= cfg.min_samples_per_leaf)
    d0 = np.where(n0 + lam > 0, n0 + lam, 1.0)
    d1 = np.where(n1 + lam > 0, n1 + lam, 1.0)
    gains = R0**2 / d0 + R1**2 / d1 - R**2 / (n + lam)
    gains = np.where(valid, gains, -np.inf)
    j = int(np.argmax(gains))  # first max: lowest feature index wins ties
    if not np.isfinite(gains[j]) or gains[j] <= cfg.min_gain:
        return None
    return j, float(gains[j])


def _grow_tree(X: np.ndarray, resid: np.ndarray, cfg: TrainConfig, pred: np.ndarray) -> RegressionTree:
    """Leaf-wise growth; updates ``pred`` in place with the new tree's output."""
    cl: list[int] = [-1]
    cr: list[int] = [-1]
    feat: list[int] = [-1]
    gain: list[float] = [0.0]
    cover: list[float] = [float(X.shape[0])]
    depth: list[int] = [0]
    node_idx: dict[int, np.ndarray] = {0: np.arange(X.shape[0])}

    heap: list[tuple[float, int, int]] = []
    tie = 0

    def consider(node: int) -> None:
        nonlocal tie
        found = _best_split(X, resid, node_idx[node], cfg)
        if found is not None:
            j, g = found
            heapq.heappush(heap, (-g, tie, node, j))
            tie += 1

    consider(0)
    n_leaves = 1
    while heap and n_leaves < cfg.max_leaves:
        neg_g, _, node, j = heapq.heappop(heap)
        idx = node_idx.pop(node)
        mask = X[idx, j] == 1
        left_idx, right_idx = idx[~mask], idx[mask]
        left, right = len(cl), len(cl) + 1
        cl[node], cr[node] = left, right
        feat[node] = j
        gain[node] = -neg_g
        for child_idx in (left_idx, right_idx):
            cl.append(-1)
            cr.append(-1)
            feat.append(-1)
            gain.append(0.0)
            cover.append(float(child_idx.size))
            depth.append(depth[node] + 1)
        node_idx[left] = left_idx
        node_idx[right] = right_idx
        n_leaves += 1
        consider(left)
        consider(right)

    value = np.zeros(len(cl), dtype=np.float64)
    lam = cfg.l2_reg
    for node, idx in node_idx.items():
        value[node] = cfg.learning_rate * resid[idx].sum() / (idx.size + lam)
        pred[idx] += value[node]

    return RegressionTree(
        children_left=np.asarray(cl, dtype=np.int64),
        children_right=np.asarray(cr, dtype=np.int64),
        feature=np.asarray(feat, dtype=np.int64),
        threshold=np.full(len(cl), 0.5, dtype=np.float64),
        value=value,
        cover=np.asarray(cover, dtype=np.float64),
        gain=np.asarray(gain, dtype=np.float64),
        max_depth=max(depth),
    )


def feature_importance(model: GbdtModel) -> np.ndarray:
    """Mean split gain per feature over every split in the ensemble."""
    sums = np.zeros(model.schema_dim, dtype=np.float64)
    counts = np.zeros(model.schema_dim, dtype=np.int64)
    for t in model.trees:
        internal = t.children_left >= 0
        np.add.at(sums, t.feature[internal], t.gain[internal])
        np.add.at(counts, t.feature[internal], 1)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


# -- model files ---------------------------------------------------------------

_NODE_COLUMNS = ("id", "split_feature", "threshold", "left", "right", "leaf_value", "cover", "gain")


def model_to_dict(model: GbdtModel) -> dict:
    return {
        "config": {
            "num_trees": model.config.num_trees,
            "max_leaves": model.config.max_leaves,
            "learning_rate": model.config.learning_rate,
            "min_samples_per_leaf": model.config.min_samples_per_leaf,
            "l2_reg": model.config.l2_reg,
            "min_gain": model.config.min_gain,
        },
        "normalizer": {"mode": model.normalizer.mode, "params": list(model.normalizer.params)},
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "schema_dim": model.schema_dim,
        "node_columns": list(_NODE_COLUMNS),
        "trees": [
            {
                "nodes": [
                    [
                        i,
                        int(t.feature[i]),
                        float(t.threshold[i]),
                        int(t.children_left[i]),
                        int(t.children_right[i]),
                        float(t.value[i]),
                        float(t.cover[i]),
                        float(t.gain[i]),
                    ]
                    for i in range(t.n_nodes)
                ]
            }
            for t in model.trees
        ],
    }


def model_from_dict(data: dict) -> GbdtModel:
    cfg = TrainConfig(**data["config"])
    norm = Normalizer(data["normalizer"]["mode"], tuple(data["normalizer"]["params"]))
    trees = []
    for td in data["trees"]:
        nodes = td["nodes"]
        n = len(nodes)
        t = RegressionTree(
            children_left=np.array([r[3] for r in nodes], dtype=np.int64),
            children_right=np.array([r[4] for r in nodes], dtype=np.int64),
            feature=np.array([r[1] for r in nodes], dtype=np.int64),
            threshold=np.array([r[2] for r in nodes], dtype=np.float64),
            value=np.array([r[5] for r in nodes], dtype=np.float64),
            cover=np.array([r[6] for r in nodes], dtype=np.float64),
            gain=np.array([r[7] for r in nodes], dtype=np.float64),
            max_depth=_depth_of(nodes),
        )
        if t.n_nodes != n:
            raise TrainingError("inconsistent node table")
        trees.append(t)
    return GbdtModel(
        trees=trees,
        base_score=float(data["base_score"]),
        learning_rate=float(data["learning_rate"]),
        normalizer=norm,
        schema_dim=int(data["schema_dim"]),
        config=cfg,
    )


def _depth_of(nodes: list) -> int:
    depth = {0: 0}
    worst = 0
    for row in nodes:
        i, left, right = row[0], row[3], row[4]
        if left >= 0:
            depth[left] = depth[i] + 1
            depth[right] = depth[i] + 1
            worst = max(worst, depth[i] + 1)
    return worst


def save_model(model: GbdtModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path) -> GbdtModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
