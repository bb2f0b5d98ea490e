"""Search-space pruning from per-feature and pairwise attribution statistics.

All three strategies follow the value-1 rule: a constraint is only ever based
on statistics of samples where the candidate feature (or feature pair) is
present, and pruning forces presence to 0.  A prune that would eliminate the
last surviving choice of a one-hot group is refused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gbdt import ArchPool, GbdtModel, feature_importance
from .space import EMPTY_PRUNED_SET, FeatureSchema, PrunedSet
from .treeshap import interaction_values, shap_values

PRUNED = "pruned"
KEPT = "kept"
SKIPPED_LAST_CHOICE = "skipped-last-choice"
ALREADY_PRUNED = "already-pruned"
SKIPPED_NO_SAMPLES = "skipped-no-samples"


@dataclass(frozen=True)
class ExaminedEntry:
    target: int | tuple[int, int]
    statistic: float
    decision: str
    detail: str = ""


@dataclass
class PruneReport:
    """Audit trail of one pruning round: what was examined and what was added."""

    kind: str
    examined: list[ExaminedEntry]
    pruned: PrunedSet

    @property
    def n_examined(self) -> int:
        return len(self.examined)

    @property
    def n_pruned(self) -> int:
        return len(self.pruned)

    def to_text(self, schema: FeatureSchema) -> str:
        lines = [f"{self.kind} pruning | examined={self.n_examined} | added={self.n_pruned}"]
        for e in self.examined:
            if isinstance(e.target, tuple):
                a, b = e.target
                name = f"{schema.feature_labels[a]} & {schema.feature_labels[b]}"
            else:
                name = schema.feature_labels[e.target]
            detail = f" | {e.detail}" if e.detail else ""
            lines.append(f"  [{e.decision}] {name} | stat={e.statistic:.6f}{detail}")
        return "\n".join(lines) + "\n"


def _group_would_empty(schema: FeatureSchema, feature: int, forbidden: set[int]) -> bool:
    gi = schema.group_of_feature(feature)
    if schema.groups[gi].kind != "onehot":
        return False
    surviving = [f for f in schema.group_features(gi) if f not in forbidden and f != feature]
    return not surviving


def _try_add_feature(
    schema: FeatureSchema,
    feature: int,
    existing: PrunedSet,
    new_features: set[int],
) -> str:
    if feature in existing.forbidden_features or feature in new_features:
        return ALREADY_PRUNED
    if _group_would_empty(schema, feature, existing.forbidden_features | new_features):
        return SKIPPED_LAST_CHOICE
    new_features.add(feature)
    return PRUNED


def prune_first_order(
    model: GbdtModel,
    pool: ArchPool,
    schema: FeatureSchema,
    n_pf: int,
    existing: PrunedSet | None = None,
) -> PruneReport:
    """Examine the n_pf features with the most negative mean present-sample
    SHAP value and add every strictly negative one to the constraint delta."""
    existing = existing or EMPTY_PRUNED_SET
    S = shap_values(model, pool.X).values
    stats: list[tuple[float, int]] = []
    for f in range(schema.total_dim):
        present = pool.X[:, f] == 1
        if present.any():
            stats.append((float(S[present, f].mean()), f))
    stats.sort()
    examined: list[ExaminedEntry] = []
    new_features: set[int] = set()
    for stat, f in stats[:n_pf]:
        if stat < 0.0:
            decision = _try_add_feature(schema, f, existing, new_features)
        else:
            decision = KEPT
        n1 = int((pool.X[:, f] == 1).sum())
        examined.append(ExaminedEntry(f, stat, decision, f"n_present={n1}"))
    return PruneReport("first-order", examined, PrunedSet(frozenset(new_features)))


def _masked_mean(values: np.ndarray, mask: np.ndarray) -> float | None:
    return float(values[mask].mean()) if mask.any() else None


def prune_second_order(
    model: GbdtModel,
    pool: ArchPool,
    schema: FeatureSchema,
    n_pf: int,
    existing: PrunedSet | None = None,
) -> PruneReport:
    """Examine the n_pf pairs with the most negative mean interaction among
    samples carrying both bits, then cascade: a negative both-present mean adds
    the pair constraint, otherwise a negative 10/01 mean adds that single
    feature.  Empty partitions count as non-negative.

    Pairs are ranked by the both-present mean rather than the all-sample mean:
    for a pure pairwise effect the all-sample mean provably cancels toward 0
    (present-present and absent-absent samples carry one sign, mixed samples
    the other), so it cannot surface the pairs the cascade is meant to test.
    """
    existing = existing or EMPTY_PRUNED_SET
    T = interaction_values(model, pool.X).values
    D = schema.total_dim
    X = pool.X
    ranked: list[tuple[float, int, int]] = []
    for a in range(D):
        xa = X[:, a] == 1
        for b in range(a + 1, D):
            both = xa & (X[:, b] == 1)
            if both.any():
                ranked.append((float(T[both, a, b].mean()), a, b))
    ranked.sort()
    examined: list[ExaminedEntry] = []
    new_features: set[int] = set()
    new_pairs: set[tuple[int, int]] = set()
    for s11, a, b in ranked[:n_pf]:
        xa = X[:, a] == 1
        xb = X[:, b] == 1
        s10 = _masked_mean(T[:, a, b], xa & ~xb)
        s01 = _masked_mean(T[:, a, b], ~xa & xb)
        decision, target = _second_order_decision(s11, s10, s01)
        stat = s11
        if decision == "pair":
            if (a, b) in existing.forbidden_pairs or (a, b) in new_pairs:
                outcome = ALREADY_PRUNED
            else:
                new_pairs.add((a, b))
                outcome = PRUNED
        elif decision == "first":
            outcome = _try_add_feature(schema, a, existing, new_features)
            target = a
        elif decision == "second":
            outcome = _try_add_feature(schema, b, existing, new_features)
            target = b
        else:
            outcome = KEPT
        detail = f"s11={_fmt(s11)} s10={_fmt(s10)} s01={_fmt(s01)}"
        examined.append(ExaminedEntry(target if isinstance(target, int) else (a, b), stat, outcome, detail))
    return PruneReport(
        "second-order", examined, PrunedSet(frozenset(new_features), frozenset(new_pairs))
    )


def _second_order_decision(
    s11: float | None, s10: float | None, s01: float | None
) -> tuple[str, int | tuple]:
    """The pair cascade on the three partition means; None means empty partition."""
    if s11 is not None and s11 < 0.0:
        return "pair", ()
    if s10 is not None and s10 < 0.0:
        return "first", ()
    if s01 is not None and s01 < 0.0:
        return "second", ()
    return "none", ()


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.6f}"


def prune_by_importance(
    model: GbdtModel,
    pool: ArchPool,
    schema: FeatureSchema,
    n_pf: int,
    margin: float = 0.01,
    existing: PrunedSet | None = None,
) -> PruneReport:
    """Examine the n_pf highest split-gain-importance features; prune one when
    the mean raw accuracy with it present trails the mean without it by more
    than the margin."""
    existing = existing or EMPTY_PRUNED_SET
    imp = feature_importance(model)
    order = sorted(range(schema.total_dim), key=lambda f: (-imp[f], f))[:n_pf]
    examined: list[ExaminedEntry] = []
    new_features: set[int] = set()
    for f in order:
        present = pool.X[:, f] == 1
        if not present.any() or present.all():
            examined.append(ExaminedEntry(f, float("nan"), SKIPPED_NO_SAMPLES, f"importance={imp[f]:.6f}"))
            continue
        mean_with = float(pool.y[present].mean())
        mean_without = float(pool.y[~present].mean())
        gap = mean_with - mean_without
        if mean_with + margin < mean_without:
            decision = _try_add_feature(schema, f, existing, new_features)
        else:
            decision = KEPT
        examined.append(
            ExaminedEntry(f, gap, decision, f"importance={imp[f]:.6f} with={mean_with:.6f} without={mean_without:.6f}")
        )
    return PruneReport("importance", examined, PrunedSet(frozenset(new_features)))
