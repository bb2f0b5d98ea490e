"""Search spaces over 0/1 feature vectors.

A space is an ordered list of feature groups: one-hot groups (a categorical
choice such as the operation of a layer) and binary groups (free bits such as
optional skip connections).  Architectures encode to flat 0/1 vectors whose
bit order follows group order, and pruning constraints restrict which bits may
be 1.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

ONEHOT = "onehot"
BINARY = "binary"


class SchemaError(ValueError):
    """Malformed schema, assignment, or feature vector."""


class SamplingError(RuntimeError):
    """Constrained sampling or enumeration cannot proceed."""


@dataclass(frozen=True)
class FeatureGroup:
    """One block of features: a one-hot choice or independent binary slots."""

    kind: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.kind not in (ONEHOT, BINARY):
            raise SchemaError(f"unknown group kind {self.kind!r}")
        if not self.labels:
            raise SchemaError("feature group has no labels")
        if self.kind == ONEHOT and len(self.labels) < 2:
            raise SchemaError("one-hot groups need at least two choices")

    @property
    def width(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Architecture:
    """A point in the space.

    ``assignments`` holds one entry per group, in group order: an int choice
    for a one-hot group, a tuple of bits for a binary group.
    """

    assignments: tuple

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(self.assignments))


@dataclass(frozen=True)
class PrunedSet:
    """Accumulated pruning constraints.

    ``forbidden_features`` are forced to 0; ``forbidden_pairs`` may not both
    be 1 in the same vector.  Instances are immutable; growth happens through
    :meth:`union` / :meth:`with_features` / :meth:`with_pairs`.
    """

    forbidden_features: frozenset[int] = frozenset()
    forbidden_pairs: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "forbidden_features", frozenset(int(f) for f in self.forbidden_features))
        pairs = set()
        for a, b in self.forbidden_pairs:
            if a == b:
                raise SchemaError("a forbidden pair needs two distinct features")
            pairs.add((min(int(a), int(b)), max(int(a), int(b))))
        object.__setattr__(self, "forbidden_pairs", frozenset(pairs))

    def __len__(self) -> int:
        return len(self.forbidden_features) + len(self.forbidden_pairs)

    def with_features(self, features: Iterable[int]) -> "PrunedSet":
        return PrunedSet(self.forbidden_features | set(features), self.forbidden_pairs)

    def with_pairs(self, pairs: Iterable[tuple[int, int]]) -> "PrunedSet":
        return PrunedSet(self.forbidden_features, self.forbidden_pairs | set(pairs))

    def union(self, other: "PrunedSet") -> "PrunedSet":
        return PrunedSet(
            self.forbidden_features | other.forbidden_features,
            self.forbidden_pairs | other.forbidden_pairs,
        )

    def allows(self, bits: np.ndarray) -> bool:
        """True when ``bits`` violates no feature or pair constraint."""
        for f in self.forbidden_features:
            if bits[f]:
                return False
        for a, b in self.forbidden_pairs:
            if bits[a] and bits[b]:
                return False
        return True


EMPTY_PRUNED_SET = PrunedSet()


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature groups plus derived index bookkeeping."""

    groups: tuple[FeatureGroup, ...]
    total_dim: int = field(init=False)
    feature_labels: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise SchemaError("schema has no groups")
        labels: list[str] = []
        offsets: list[int] = []
        group_of: list[int] = []
        for gi, g in enumerate(self.groups):
            offsets.append(len(labels))
            labels.extend(g.labels)
            group_of.extend([gi] * g.width)
        if len(set(labels)) != len(labels):
            raise SchemaError("feature labels must be unique across the schema")
        object.__setattr__(self, "total_dim", len(labels))
        object.__setattr__(self, "feature_labels", tuple(labels))
        object.__setattr__(self, "_offsets", tuple(offsets))
        object.__setattr__(self, "_group_of", tuple(group_of))

    # -- index helpers -----------------------------------------------------

    def group_offset(self, group_index: int) -> int:
        return self._offsets[group_index]

    def group_of_feature(self, feature: int) -> int:
        return self._group_of[feature]

    def group_features(self, group_index: int) -> range:
        off = self._offsets[group_index]
        return range(off, off + self.groups[group_index].width)

    def label_index(self, label: str) -> int:
        try:
            return self.feature_labels.index(label)
        except ValueError:
            raise SchemaError(f"unknown feature label {label!r}") from None

    def size(self, z: PrunedSet | None = None) -> int:
        """Number of architectures, honoring forbidden features (not pairs)."""
        z = z or EMPTY_PRUNED_SET
        total = 1
        for gi, g in enumerate(self.groups):
            if g.kind == ONEHOT:
                total *= len(self.surviving_choices(gi, z))
            else:
                free = sum(1 for f in self.group_features(gi) if f not in z.forbidden_features)
                total *= 2**free
        return total

    def surviving_choices(self, group_index: int, z: PrunedSet) -> list[int]:
        """Choice indices of a group that the constraints still allow."""
        off = self._offsets[group_index]
        g = self.groups[group_index]
        return [c for c in range(g.width) if off + c not in z.forbidden_features]

    # -- encode / decode ----------------------------------------------------

    def encode(self, arch: Architecture) -> np.ndarray:
        """Flatten an architecture into its 0/1 feature vector."""
        if len(arch.assignments) != len(self.groups):
            raise SchemaError(
                f"expected {len(self.groups)} group assignments, got {len(arch.assignments)}"
            )
        bits = np.zeros(self.total_dim, dtype=np.uint8)
        for gi, (g, a) in enumerate(zip(self.groups, arch.assignments)):
            off = self._offsets[gi]
            if g.kind == ONEHOT:
                c = int(a)
                if not 0 <= c < g.width:
                    raise SchemaError(f"choice {c} out of range for group {gi} (width {g.width})")
                bits[off + c] = 1
            else:
                vals = tuple(int(v) for v in a)
                if len(vals) != g.width or any(v not in (0, 1) for v in vals):
                    raise SchemaError(f"binary group {gi} expects {g.width} bits in {{0,1}}")
                bits[off : off + g.width] = vals
        return bits

    def decode(self, bits: Sequence[int] | np.ndarray) -> Architecture:
        """Inverse of :meth:`encode`; rejects one-hot violations."""
        vec = np.asarray(bits)
        if vec.shape != (self.total_dim,):
            raise SchemaError(f"expected a length-{self.total_dim} vector, got shape {vec.shape}")
        if not np.isin(vec, (0, 1)).all():
            raise SchemaError("feature vectors are 0/1 valued")
        assignments = []
        for gi, g in enumerate(self.groups):
            off = self._offsets[gi]
            block = vec[off : off + g.width]
            if g.kind == ONEHOT:
                ones = np.flatnonzero(block)
                if ones.size != 1:
                    raise SchemaError(
                        f"one-hot group {gi} has {ones.size} active bits, expected exactly 1"
                    )
                assignments.append(int(ones[0]))
            else:
                assignments.append(tuple(int(v) for v in block))
        return Architecture(tuple(assignments))

    def describe(self, arch: Architecture) -> dict[str, object]:
        """Human-readable view: chosen label per one-hot group, active bits."""
        out: dict[str, object] = {}
        for gi, (g, a) in enumerate(zip(self.groups, arch.assignments)):
            if g.kind == ONEHOT:
                out[f"group_{gi}"] = g.labels[int(a)]
            else:
                out[f"group_{gi}"] = [lbl for lbl, v in zip(g.labels, a) if v]
        return out

    # -- sampling ------------------------------------------------------------

    def sample_uniform(self, rng: int | np.random.Generator) -> Architecture:
        """One uniform draw: each choice uniform, each free bit a fair coin."""
        return self.sample_constrained(EMPTY_PRUNED_SET, rng)

    def sample_constrained(
        self,
        z: PrunedSet,
        rng: int | np.random.Generator,
        max_attempts: int = 1000,
    ) -> Architecture:
        """Uniform draw over surviving per-group choices, rejecting pair violations."""
        gen = _as_generator(rng)
        check_satisfiable(self, z)
        for _ in range(max_attempts):
            assignments = []
            for gi, g in enumerate(self.groups):
                off = self._offsets[gi]
                if g.kind == ONEHOT:
                    choices = self.surviving_choices(gi, z)
                    assignments.append(choices[int(gen.integers(len(choices)))])
                else:
                    row = []
                    for f in self.group_features(gi):
                        row.append(0 if f in z.forbidden_features else int(gen.integers(2)))
                    assignments.append(tuple(row))
            arch = Architecture(tuple(assignments))
            if not z.forbidden_pairs or z.allows(self.encode(arch)):
                return arch
        raise SamplingError(
            f"no architecture satisfying the pair constraints in {max_attempts} attempts; "
            "the space looks over-pruned"
        )


def _as_generator(rng: int | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def check_satisfiable(schema: FeatureSchema, z: PrunedSet) -> None:
    """Raise if some one-hot group has every choice forbidden."""
    for gi, g in enumerate(schema.groups):
        if g.kind == ONEHOT and not schema.surviving_choices(gi, z):
            raise SamplingError(f"every choice of one-hot group {gi} is forbidden")


def enumerate_space(
    schema: FeatureSchema,
    z: PrunedSet | None = None,
    cap: int = 1_000_000,
) -> Iterator[Architecture]:
    """Yield every valid architecture once, lexicographic in group order.

    Raises :class:`SamplingError` when more than ``cap`` architectures would
    be produced.
    """
    z = z or EMPTY_PRUNED_SET
    check_satisfiable(schema, z)
    per_group: list[list] = []
    for gi, g in enumerate(schema.groups):
        if g.kind == ONEHOT:
            per_group.append(schema.surviving_choices(gi, z))
        else:
            bit_options = [
                (0,) if f in z.forbidden_features else (0, 1) for f in schema.group_features(gi)
            ]
            per_group.append([tuple(bs) for bs in itertools.product(*bit_options)])
    yielded = 0
    for assignments in itertools.product(*per_group):
        arch = Architecture(tuple(assignments))
        if z.forbidden_pairs and not z.allows(schema.encode(arch)):
            continue
        yielded += 1
        if yielded > cap:
            raise SamplingError(f"enumeration exceeded the cap of {cap} architectures")
        yield arch


# -- schema files -------------------------------------------------------------


def schema_to_dict(schema: FeatureSchema) -> dict:
    return {"groups": [{"kind": g.kind, "labels": list(g.labels)} for g in schema.groups]}


def schema_from_dict(data: dict) -> FeatureSchema:
    try:
        groups = tuple(FeatureGroup(g["kind"], tuple(g["labels"])) for g in data["groups"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad schema document: {exc}") from exc
    return FeatureSchema(groups)


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w") as fh:
        json.dump(schema_to_dict(schema), fh, indent=2)
        fh.write("\n")


def load_schema(path) -> FeatureSchema:
    with open(path) as fh:
        return schema_from_dict(json.load(fh))
