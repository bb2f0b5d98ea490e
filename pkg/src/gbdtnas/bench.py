"""Evaluation oracles: exact lookup tables and seeded synthetic surfaces.

The synthetic oracle is an additive-plus-pairwise function of the feature
bits with optional deterministic per-architecture gaussian noise, so planted
effects have known ground truth and runs are reproducible from config alone.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .space import (
    Architecture,
    FeatureSchema,
    SchemaError,
    enumerate_space,
    schema_from_dict,
    schema_to_dict,
)


class OracleError(RuntimeError):
    """Bad table data or an unanswerable query."""


class UnknownArchitectureError(OracleError):
    """Query for a vector the table does not contain."""


@dataclass
class TabularOracle:
    """Exact-match architecture-accuracy lookup."""

    schema: FeatureSchema
    table: dict[bytes, float]
    query_count: int = 0

    def query(self, bits) -> float:
        key = np.asarray(bits, dtype=np.uint8).tobytes()
        try:
            acc = self.table[key]
        except KeyError:
            raise UnknownArchitectureError("architecture not present in the table") from None
        self.query_count += 1
        return acc

    def known_vectors(self) -> np.ndarray:
        out = np.zeros((len(self.table), self.schema.total_dim), dtype=np.uint8)
        for i, key in enumerate(self.table):
            out[i] = np.frombuffer(key, dtype=np.uint8)
        return out

    def __len__(self) -> int:
        return len(self.table)


def load_table(path, schema: FeatureSchema) -> TabularOracle:
    """Read a bits+accuracy CSV; duplicate rows must agree, bits must validate."""
    table: dict[bytes, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise OracleError(f"{path}: empty table")
        if len(header) != schema.total_dim + 1 or header[-1] != "accuracy":
            raise OracleError(
                f"{path}: expected {schema.total_dim} bit columns plus 'accuracy', "
                f"got {len(header)} columns"
            )
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                bits = np.array([int(v) for v in row[:-1]], dtype=np.uint8)
                acc = float(row[-1])
            except ValueError as exc:
                raise OracleError(f"{path}:{ln}: {exc}") from exc
            try:
                schema.decode(bits)  # validates length, 0/1 values, one-hot exclusivity
            except SchemaError as exc:
                raise OracleError(f"{path}:{ln}: {exc}") from exc
            key = bits.tobytes()
            if key in table and table[key] != acc:
                raise OracleError(f"{path}:{ln}: conflicting accuracy for a duplicate row")
            table[key] = acc
    if not table:
        raise OracleError(f"{path}: no data rows")
    return TabularOracle(schema, table)


def save_table(path, schema: FeatureSchema, X: np.ndarray, y: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(schema.feature_labels) + ["accuracy"])
        for bits, acc in zip(X, y):
            w.writerow([int(b) for b in bits] + [repr(float(acc))])


@dataclass(frozen=True)
class PlantedSpec:
    """Deliberately bad single features and feature pairs, by index."""

    bad_features: dict[int, float] = field(default_factory=dict)
    bad_pairs: dict[tuple[int, int], float] = field(default_factory=dict)


@dataclass
class SyntheticOracle:
    """clamp(base + w.x + sum of pair terms + hash-seeded gaussian, 0, 1)."""

    schema: FeatureSchema
    unary_weights: np.ndarray
    pair_weights: dict[tuple[int, int], float]
    base: float
    noise_std: float
    seed: int
    query_count: int = 0

    def noiseless(self, bits) -> float:
        """The surface with the noise at its mean; does not count as a query."""
        x = np.asarray(bits, dtype=np.float64)
        acc = self.base + float(self.unary_weights @ x)
        for (a, b), w in self.pair_weights.items():
            acc += w * x[a] * x[b]
        return float(min(1.0, max(0.0, acc)))

    def _noise(self, bits: np.ndarray) -> float:
        if self.noise_std == 0.0:
            return 0.0
        payload = self.seed.to_bytes(8, "little", signed=True) + bits.tobytes()
        digest = hashlib.blake2b(payload, digest_size=16).digest()
        u = (int.from_bytes(digest[:8], "little") + 0.5) / 2.0**64
        v = int.from_bytes(digest[8:], "little") / 2.0**64
        return self.noise_std * math.sqrt(-2.0 * math.log(u)) * math.cos(2.0 * math.pi * v)

    def query(self, bits) -> float:
        x = np.asarray(bits, dtype=np.uint8)
        acc = self.base + float(self.unary_weights @ x)
        for (a, b), w in self.pair_weights.items():
            acc += w * int(x[a]) * int(x[b])
        acc += self._noise(x)
        self.query_count += 1
        return float(min(1.0, max(0.0, acc)))


def _expected_bit_values(schema: FeatureSchema) -> np.ndarray:
    e = np.zeros(schema.total_dim, dtype=np.float64)
    for gi, g in enumerate(schema.groups):
        p = 1.0 / g.width if g.kind == "onehot" else 0.5
        for f in schema.group_features(gi):
            e[f] = p
    return e


def make_synthetic(
    schema: FeatureSchema,
    planted: PlantedSpec | None = None,
    noise_std: float = 0.0,
    seed: int = 0,
    weight_low: float = 0.0,
    weight_high: float = 0.04,
    target_mean: float = 0.90,
) -> SyntheticOracle:
    """Draw unary weights uniformly, apply planted overrides, center near 0.9."""
    planted = planted or PlantedSpec()
    rng = np.random.default_rng(seed)
    unary = rng.uniform(weight_low, weight_high, schema.total_dim)
    for f, w in planted.bad_features.items():
        if not math.isfinite(w):
            raise OracleError("planted weights must be finite")
        unary[f] = w
    pairs: dict[tuple[int, int], float] = {}
    for (a, b), w in planted.bad_pairs.items():
        if not math.isfinite(w):
            raise OracleError("planted weights must be finite")
        pairs[(min(a, b), max(a, b))] = w
    e = _expected_bit_values(schema)
    expected = float(unary @ e)
    for (a, b), w in pairs.items():
        same_group = schema.group_of_feature(a) == schema.group_of_feature(b)
        onehot = schema.groups[schema.group_of_feature(a)].kind == "onehot"
        expected += 0.0 if (same_group and onehot) else w * e[a] * e[b]
    base = target_mean - expected
    return SyntheticOracle(schema, unary, pairs, base, noise_std, seed)


def true_optimum(oracle: SyntheticOracle, cap: int = 1_000_000) -> tuple[Architecture, float]:
    """Exhaustive argmax of the noiseless surface; first hit wins ties."""
    best_arch: Architecture | None = None
    best_acc = -np.inf
    for arch in enumerate_space(oracle.schema, cap=cap):
        acc = oracle.noiseless(oracle.schema.encode(arch))
        if acc > best_acc:
            best_arch, best_acc = arch, acc
    assert best_arch is not None
    return best_arch, float(best_acc)


# -- oracle spec files ---------------------------------------------------------


def synthetic_to_dict(oracle: SyntheticOracle) -> dict:
    return {
        "schema": schema_to_dict(oracle.schema),
        "unary_weights": [float(w) for w in oracle.unary_weights],
        "pair_weights": [[a, b, float(w)] for (a, b), w in sorted(oracle.pair_weights.items())],
        "base": oracle.base,
        "noise_std": oracle.noise_std,
        "seed": oracle.seed,
    }


def synthetic_from_dict(data: dict) -> SyntheticOracle:
    schema = schema_from_dict(data["schema"])
    unary = np.asarray(data["unary_weights"], dtype=np.float64)
    if unary.shape != (schema.total_dim,):
        raise OracleError("unary weight vector does not match the schema dimension")
    pairs = {(int(a), int(b)): float(w) for a, b, w in data.get("pair_weights", [])}
    return SyntheticOracle(
        schema, unary, pairs, float(data["base"]), float(data["noise_std"]), int(data["seed"])
    )


def save_synthetic(oracle: SyntheticOracle, path) -> None:
    with open(path, "w") as fh:
        json.dump(synthetic_to_dict(oracle), fh, indent=2)
        fh.write("\n")


def load_synthetic(path) -> SyntheticOracle:
    with open(path) as fh:
        return synthetic_from_dict(json.load(fh))
