"""Predictor-guided architecture search and baseline searchers.

The main loop alternates: fit the tree predictor on the evaluated pool,
optionally prune the space from attribution statistics, sample candidates
under the accumulated constraints, rank them by predicted accuracy, and spend
oracle budget on the top-ranked ones.  Every oracle call is logged so traces
expose best-so-far as a function of query count.
"""

from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import gbdt
from .gbdt import ArchPool, DegenerateTargetsError, TrainConfig
from .prune import PruneReport, prune_by_importance, prune_first_order, prune_second_order
from .space import (
    EMPTY_PRUNED_SET,
    Architecture,
    FeatureSchema,
    PrunedSet,
    SamplingError,
    enumerate_space,
)

log = logging.getLogger(__name__)

PRUNE_NONE = "none"
PRUNE_FIRST_ORDER = "first-order"
PRUNE_SECOND_ORDER = "second-order"
PRUNE_IMPORTANCE = "importance"
PRUNE_MODES = (PRUNE_NONE, PRUNE_FIRST_ORDER, PRUNE_SECOND_ORDER, PRUNE_IMPORTANCE)

ALL_CANDIDATES = "all"


class SearchError(RuntimeError):
    """Invalid search configuration or an unusable space."""


@dataclass(frozen=True)
class SearchConfig:
    n_init: int = 1000
    m_candidates: int | str = 5000
    k_top: int = 300
    t_iters: int = 3
    n_pf: int = 20
    prune_mode: str = PRUNE_NONE
    normalization: str = gbdt.STANDARDIZE
    seed: int = 0

    def __post_init__(self):
        if self.n_init < 1 or self.k_top < 1 or self.t_iters < 1:
            raise SearchError("n_init, k_top and t_iters must be positive")
        if self.n_pf < 0:
            raise SearchError("n_pf cannot be negative")
        if self.m_candidates != ALL_CANDIDATES:
            m = int(self.m_candidates)
            if m < 1:
                raise SearchError("m_candidates must be positive or 'all'")
            if self.k_top > m:
                raise SearchError("k_top cannot exceed m_candidates")
            object.__setattr__(self, "m_candidates", m)
        if self.prune_mode not in PRUNE_MODES:
            raise SearchError(f"unknown prune mode {self.prune_mode!r}")


@dataclass
class IterationRecord:
    iteration: int
    pool_size: int
    constraints_added: int
    pruned_total: int
    queries: int
    best_accuracy: float
    top_predicted: tuple[float, ...] = ()
    top_realized: tuple[float, ...] = ()


@dataclass
class SearchTrace:
    records: list[IterationRecord] = field(default_factory=list)
    eval_accuracy: list[float] = field(default_factory=list)
    eval_best: list[float] = field(default_factory=list)
    prune_reports: list[PruneReport] = field(default_factory=list)
    final_pool: ArchPool | None = None

    @property
    def queries(self) -> int:
        return len(self.eval_accuracy)

    @property
    def best_so_far(self) -> float:
        return self.eval_best[-1] if self.eval_best else float("-inf")

    def log_eval(self, accuracy: float) -> None:
        best = max(accuracy, self.best_so_far)
        self.eval_accuracy.append(accuracy)
        self.eval_best.append(best)

    def queries_to_reach(self, target: float, tol: float = 1e-12) -> int | None:
        """1-based query index where best-so-far first reaches target, else None."""
        for i, b in enumerate(self.eval_best):
            if b >= target - tol:
                return i + 1
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "queries", "best_accuracy", "pruned_count"])
            for r in self.records:
                w.writerow([r.iteration, r.queries, repr(r.best_accuracy), r.pruned_total])


_PRUNERS = {
    PRUNE_FIRST_ORDER: prune_first_order,
    PRUNE_SECOND_ORDER: prune_second_order,
    PRUNE_IMPORTANCE: prune_by_importance,
}


def _sample_unique(schema, z, rng, count, seen: set[bytes], max_attempts_factor: int = 200):
    """Draw up to ``count`` fresh architectures under z, skipping known vectors."""
    out_bits: list[np.ndarray] = []
    attempts = 0
    limit = max(1000, count * max_attempts_factor)
    while len(out_bits) < count and attempts < limit:
        arch = schema.sample_constrained(z, rng)
        bits = schema.encode(arch)
        key = bits.tobytes()
        attempts += 1
        if key in seen:
            continue
        seen.add(key)
        out_bits.append(bits)
    return out_bits


def gbdt_nas_s3(
    schema: FeatureSchema,
    oracle,
    cfg: SearchConfig,
    train_config: TrainConfig | None = None,
) -> tuple[Architecture, SearchTrace]:
    """Iterated fit / prune / sample / predict / evaluate-top-K loop.

    With ``prune_mode="none"`` this is the plain predictor-guided search.
    Returns the pool argmax by raw measured accuracy along with the trace.
    """
    train_config = train_config or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    trace = SearchTrace()
    z = EMPTY_PRUNED_SET
    evaluated: set[bytes] = set()

    pool_bits: list[np.ndarray] = []
    pool_acc: list[float] = []

    def evaluate(bits_list) -> list[float]:
        accs = []
        for bits in bits_list:
            acc = float(oracle.query(bits))
            trace.log_eval(acc)
            evaluated.add(bits.tobytes())
            pool_bits.append(bits)
            pool_acc.append(acc)
            accs.append(acc)
        return accs

    init = _sample_unique(schema, z, rng, cfg.n_init, set())
    if len(init) < cfg.n_init:
        raise SearchError(
            f"could only sample {len(init)} distinct initial architectures of {cfg.n_init}"
        )
    evaluate(init)
    trace.records.append(
        IterationRecord(0, len(pool_acc), 0, 0, trace.queries, trace.best_so_far)
    )

    for t in range(1, cfg.t_iters + 1):
        pool = ArchPool(np.array(pool_bits, dtype=np.uint8), np.array(pool_acc))
        model = None
        try:
            model = gbdt.fit(pool, train_config, cfg.normalization)
        except DegenerateTargetsError:
            log.warning("iteration %d: zero target spread; selecting top-K uniformly", t)

        added = 0
        if model is not None and cfg.prune_mode != PRUNE_NONE and cfg.n_pf > 0:
            report = _PRUNERS[cfg.prune_mode](model, pool, schema, cfg.n_pf, existing=z)
            trace.prune_reports.append(report)
            z = z.union(report.pruned)
            added = report.n_pruned

        candidates = _gather_candidates(schema, oracle, cfg, z, rng, evaluated)
        if not candidates:
            log.warning("iteration %d: no unseen candidates remain; stopping early", t)
            trace.records.append(
                IterationRecord(t, len(pool_acc), added, len(z), trace.queries, trace.best_so_far)
            )
            break

        cand_matrix = np.array(candidates, dtype=np.uint8)
        if model is not None:
            preds = model.predict_batch(cand_matrix.astype(np.float64))
        else:
            preds = rng.random(len(candidates))
        k = min(cfg.k_top, len(candidates))
        order = np.argsort(-preds, kind="stable")[:k]
        realized = evaluate([candidates[i] for i in order])
        trace.records.append(
            IterationRecord(
                t,
                len(pool_acc),
                added,
                len(z),
                trace.queries,
                trace.best_so_far,
                tuple(float(preds[i]) for i in order),
                tuple(realized),
            )
        )

    best = int(np.argmax(pool_acc))
    trace.final_pool = ArchPool(np.array(pool_bits, dtype=np.uint8), np.array(pool_acc))
    return schema.decode(pool_bits[best]), trace


def _gather_candidates(schema, oracle, cfg, z, rng, evaluated):
    """Fresh candidates under z, distinct from each other and the evaluated pool.

    Candidates not selected this iteration stay eligible for later ones.
    Table-backed oracles supply candidates from their own rows (the dataset is
    the space in the benchmark setting); otherwise the schema is sampled or,
    for M='all', enumerated.
    """
    known = oracle.known_vectors() if hasattr(oracle, "known_vectors") else None
    if known is not None:
        allowed = [
            bits for bits in known if bits.tobytes() not in evaluated and z.allows(bits)
        ]
        if cfg.m_candidates == ALL_CANDIDATES:
            return allowed
        take = min(cfg.m_candidates, len(allowed))
        idx = rng.permutation(len(allowed))[:take]
        return [allowed[i] for i in idx]
    if cfg.m_candidates == ALL_CANDIDATES:
        return [
            bits
            for arch in enumerate_space(schema, z)
            if (bits := schema.encode(arch)).tobytes() not in evaluated
        ]
    return _sample_unique(schema, z, rng, cfg.m_candidates, set(evaluated))


def random_search(
    schema: FeatureSchema, oracle, budget: int, seed: int = 0
) -> tuple[Architecture, SearchTrace]:
    """Uniform sampling without replacement; full enumeration when the budget
    covers the whole space."""
    if budget < 1:
        raise SearchError("budget must be positive")
    rng = np.random.default_rng(seed)
    trace = SearchTrace()
    bits_list: list[np.ndarray] = []
    if budget >= schema.size():
        all_bits = [schema.encode(a) for a in enumerate_space(schema)]
        order = rng.permutation(len(all_bits))
        bits_list = [all_bits[i] for i in order]
    else:
        seen: set[bytes] = set()
        bits_list = _sample_unique(schema, EMPTY_PRUNED_SET, rng, budget, seen)
        if len(bits_list) < budget:
            raise SearchError("could not draw enough distinct architectures")
    best_bits, best_acc = None, float("-inf")
    for i, bits in enumerate(bits_list, start=1):
        acc = float(oracle.query(bits))
        trace.log_eval(acc)
        if acc > best_acc:
            best_bits, best_acc = bits, acc
        trace.records.append(IterationRecord(i, i, 0, 0, i, trace.best_so_far))
    assert best_bits is not None
    trace.final_pool = ArchPool(
        np.array(bits_list, dtype=np.uint8), np.array(trace.eval_accuracy)
    )
    return schema.decode(best_bits), trace


def _mutation_sites(schema: FeatureSchema, z: PrunedSet) -> list[tuple[int, int]]:
    """(group, slot) pairs that can change: slot is -1 for a one-hot redraw,
    otherwise the index of a free binary bit within the group."""
    sites = []
    for gi, g in enumerate(schema.groups):
        if g.kind == "onehot":
            if len(schema.surviving_choices(gi, z)) > 1:
                sites.append((gi, -1))
        else:
            for local, f in enumerate(schema.group_features(gi)):
                if f not in z.forbidden_features:
                    sites.append((gi, local))
    return sites


def _mutate(schema, arch: Architecture, z: PrunedSet, rng, max_attempts: int = 100) -> Architecture:
    sites = _mutation_sites(schema, z)
    if not sites:
        return arch
    for _ in range(max_attempts):
        gi, local = sites[int(rng.integers(len(sites)))]
        assignments = list(arch.assignments)
        if local < 0:
            choices = schema.surviving_choices(gi, z)
            assignments[gi] = choices[int(rng.integers(len(choices)))]
        else:
            row = list(assignments[gi])
            row[local] = int(rng.integers(2))
            assignments[gi] = tuple(row)
        child = Architecture(tuple(assignments))
        if not z.forbidden_pairs or z.allows(schema.encode(child)):
            return child
    raise SamplingError("mutation could not satisfy the pair constraints")


def regularized_evolution(
    schema: FeatureSchema,
    oracle,
    budget: int,
    population: int = 50,
    sample_size: int = 10,
    seed: int = 0,
    z: PrunedSet | None = None,
) -> tuple[Architecture, SearchTrace]:
    """Aging evolution: tournament-select a parent, redraw one assignment,
    evaluate the child, retire the oldest member."""
    if population < 1 or sample_size < 1:
        raise SearchError("population and sample_size must be positive")
    if population > budget:
        raise SearchError("population cannot exceed the budget")
    z = z or EMPTY_PRUNED_SET
    rng = np.random.default_rng(seed)
    trace = SearchTrace()
    pop: deque[tuple[Architecture, float]] = deque()
    best_arch, best_acc = None, float("-inf")

    def evaluate(arch: Architecture) -> float:
        nonlocal best_arch, best_acc
        acc = float(oracle.query(schema.encode(arch)))
        trace.log_eval(acc)
        if acc > best_acc:
            best_arch, best_acc = arch, acc
        trace.records.append(
            IterationRecord(trace.queries, trace.queries, 0, len(z), trace.queries, trace.best_so_far)
        )
        return acc

    for _ in range(population):
        arch = schema.sample_constrained(z, rng)
        pop.append((arch, evaluate(arch)))

    history: list[Architecture] = [arch for arch, _ in pop]
    while trace.queries < budget:
        idx = rng.choice(len(pop), size=min(sample_size, len(pop)), replace=False)
        parent = max((pop[i] for i in idx), key=lambda item: item[1])[0]
        child = _mutate(schema, parent, z, rng)
        pop.append((child, evaluate(child)))
        history.append(child)
        pop.popleft()

    assert best_arch is not None
    trace.final_pool = ArchPool(
        np.array([schema.encode(a) for a in history], dtype=np.uint8),
        np.array(trace.eval_accuracy),
    )
    return best_arch, trace


def pairwise_accuracy(predictions, targets) -> float:
    """Fraction of concordantly ordered pairs, over ordered pairs with both
    'greater or equal' indicators, normalized by the unordered pair count."""
    return pairwise_accuracy_with_ties(predictions, targets)[0]


def pairwise_accuracy_with_ties(predictions, targets) -> tuple[float, int]:
    """(statistic, number of unordered pairs tied in predictions or targets).

    Ties make both orderings count, so the statistic can exceed 1.
    """
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1 or p.size < 2:
        raise SearchError("need two equal-length vectors with at least 2 entries")
    n = p.size
    pg = p[:, None] >= p[None, :]
    tg = t[:, None] >= t[None, :]
    concordant = int((pg & tg).sum()) - n  # drop the diagonal
    p_tie = p[:, None] == p[None, :]
    t_tie = t[:, None] == t[None, :]
    ties = (int((p_tie | t_tie).sum()) - n) // 2
    return concordant / (n * (n - 1) / 2), ties
