#!/usr/bin/env python3
"""Measure how pruning shifts the accuracy of architectures sampled from the
constrained space: no pruning vs attribution-based vs importance-based, on a
planted synthetic oracle, over seeds."""

import argparse
import csv

import numpy as np

from gbdtnas import bench, gbdt
from gbdtnas.gbdt import ArchPool, TrainConfig
from gbdtnas.prune import prune_by_importance, prune_first_order, prune_second_order
from gbdtnas.space import EMPTY_PRUNED_SET, FeatureGroup, FeatureSchema


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--groups", type=int, default=6)
    p.add_argument("--width", type=int, default=3)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--pool-size", type=int, default=600)
    p.add_argument("--sample-size", type=int, default=500, help="draws per pruned space")
    p.add_argument("--n-pf", type=int, default=4)
    p.add_argument("--margin", type=float, default=0.01)
    p.add_argument("--noise-std", type=float, default=0.005)
    p.add_argument("--planted-weight", type=float, default=-0.10)
    p.add_argument("--second-order", action="store_true", help="also run pairwise pruning")
    p.add_argument("--out", default="pruning_study.csv")
    return p.parse_args()


def sampled_mean(schema, oracle, z, seed, count):
    rng = np.random.default_rng(seed)
    vals = [
        oracle.query(schema.encode(schema.sample_constrained(z, rng))) for _ in range(count)
    ]
    return float(np.mean(vals))


def main():
    args = parse_args()
    schema = FeatureSchema(
        tuple(
            FeatureGroup("onehot", tuple(f"layer {g} is op{c}" for c in range(args.width)))
            for g in range(args.groups)
        )
    )
    arms = ["unpruned", "first-order", "importance"] + (
        ["second-order"] if args.second_order else []
    )
    rows = []
    for seed in range(args.seeds):
        rng = np.random.default_rng(4000 + seed)
        planted = int(rng.integers(schema.total_dim))
        oracle = bench.make_synthetic(
            schema,
            bench.PlantedSpec(bad_features={planted: args.planted_weight}),
            noise_std=args.noise_std,
            seed=seed,
            weight_low=0.0,
            weight_high=0.03,
        )
        X = np.array(
            [schema.encode(schema.sample_uniform(rng)) for _ in range(args.pool_size)],
            dtype=np.uint8,
        )
        y = np.array([oracle.query(b) for b in X])
        pool = ArchPool(X, y)
        model = gbdt.fit(pool, TrainConfig())
        spaces = {"unpruned": EMPTY_PRUNED_SET}
        spaces["first-order"] = prune_first_order(model, pool, schema, args.n_pf).pruned
        spaces["importance"] = prune_by_importance(
            model, pool, schema, args.n_pf, args.margin
        ).pruned
        if args.second_order:
            spaces["second-order"] = prune_second_order(model, pool, schema, args.n_pf).pruned
        line = [f"seed {seed}:"]
        for arm in arms:
            mean = sampled_mean(schema, oracle, spaces[arm], 5000 + seed, args.sample_size)
            rows.append(
                {
                    "seed": seed,
                    "arm": arm,
                    "mean_sampled_accuracy": mean,
                    "constraints": len(spaces[arm]),
                }
            )
            line.append(f"{arm}={mean:.4f}")
        print("  ".join(line))

    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(
            fh, fieldnames=["seed", "arm", "mean_sampled_accuracy", "constraints"]
        )
        w.writeheader()
        w.writerows(rows)
    print(f"\nwrote {args.out}")
    for arm in arms:
        vals = [r["mean_sampled_accuracy"] for r in rows if r["arm"] == arm]
        print(f"{arm:12s} mean sampled accuracy over seeds: {np.mean(vals):.4f}")


if __name__ == "__main__":
    main()
