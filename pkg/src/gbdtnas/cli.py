"""Command-line entry point.

Subcommands: ``search``, ``eval-predictor``, ``explain``, ``gen-benchmark``,
``convert-table``, ``show-schema``.  Every run that writes artifacts also
writes a manifest (resolved settings, seeds, input digests, artifact paths);
re-running ``search --from-manifest`` reproduces the trace byte for byte.

Exit codes: 0 success, 2 configuration error, 3 oracle error, 4 internal
failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, bench, gbdt, search, treeshap
from .bench import OracleError
from .gbdt import ArchPool, TrainConfig, TrainingError
from .space import FeatureGroup, FeatureSchema, SchemaError, load_schema, save_schema

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_INTERNAL = 4


class CliConfigError(ValueError):
    """User-facing configuration problem (bad flag, missing file, bad format)."""


@dataclass
class RunManifest:
    command: str
    settings: dict
    inputs: dict
    artifacts: dict
    version: str = __version__
    tool: str = "gbdt-nas"

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "version": self.version,
            "command": self.command,
            "settings": self.settings,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_entry(path) -> dict:
    # absolute path so a manifest re-run works from any working directory
    return {"path": str(Path(path).resolve()), "sha256": _sha256(path)}


# -- settings resolution --------------------------------------------------------

_SEARCH_FIELDS = {
    "algo": "gbdt-nas-s3",
    "n": 1000,
    "m": "5000",
    "k": 300,
    "t": 3,
    "n_pf": 20,
    "prune": search.PRUNE_NONE,
    "normalization": gbdt.STANDARDIZE,
    "seed": 0,
    "budget": 2000,
    "population": 50,
    "sample_size": 10,
}
_TRAIN_FIELDS = {
    "num_trees": 100,
    "max_leaves": 31,
    "learning_rate": 0.1,
    "min_samples_per_leaf": 20,
    "l2_reg": 0.0,
    "min_gain": 0.0,
}


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", help="schema JSON file")
    p.add_argument("--table", help="table-oracle CSV file")
    p.add_argument("--synth", help="synthetic-oracle JSON file")
    p.add_argument("--config", help="JSON config file; flags override its entries")
    p.add_argument("--from-manifest", help="re-run the search described by a manifest")
    p.add_argument("--out-dir", required=True, help="directory for trace, best, reports, manifest")
    p.add_argument("--algo", choices=["gbdt-nas", "gbdt-nas-s3", "random", "evolution"])
    p.add_argument("--n", type=int, help="initial pool size N")
    p.add_argument("--m", help="candidates per iteration M, or 'all'")
    p.add_argument("--k", type=int, help="architectures evaluated per iteration K")
    p.add_argument("--t", type=int, help="search iterations T")
    p.add_argument("--n-pf", dest="n_pf", type=int, help="features examined per pruning round")
    p.add_argument("--prune", choices=list(search.PRUNE_MODES))
    p.add_argument("--normalization", choices=[gbdt.MINMAX, gbdt.STANDARDIZE])
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int, help="oracle budget for random/evolution")
    p.add_argument("--population", type=int, help="evolution population size")
    p.add_argument("--sample-size", dest="sample_size", type=int, help="evolution tournament size")
    _add_train_flags(p)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--num-trees", dest="num_trees", type=int)
    p.add_argument("--max-leaves", dest="max_leaves", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument(
        "--min-samples-per-leaf", dest="min_samples_per_leaf", type=int
    )
    p.add_argument("--l2-reg", dest="l2_reg", type=float)
    p.add_argument("--min-gain", dest="min_gain", type=float)


def _load_json(path, what: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliConfigError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliConfigError(f"{what} file {path} is not valid JSON: {exc}") from exc


def resolve_search_settings(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags; also folds in input paths."""
    settings = dict(_SEARCH_FIELDS)
    settings.update(_TRAIN_FIELDS)
    settings.update({"schema": None, "table": None, "synth": None})
    if getattr(args, "from_manifest", None):
        doc = _load_json(args.from_manifest, "manifest")
        stored = doc.get("settings", {})
        settings.update({k: stored[k] for k in settings if k in stored})
        for name, entry in doc.get("inputs", {}).items():
            settings[name] = entry["path"]
            if _sha256(entry["path"]) != entry["sha256"]:
                raise CliConfigError(
                    f"input {entry['path']} changed since the manifest was written"
                )
    if getattr(args, "config", None):
        cfg = _load_json(args.config, "config")
        unknown = set(cfg) - set(settings)
        if unknown:
            raise CliConfigError(f"unknown config keys: {sorted(unknown)}")
        settings.update(cfg)
    for key in settings:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    settings["m"] = str(settings["m"])
    if settings["m"] != search.ALL_CANDIDATES:
        try:
            int(settings["m"])
        except ValueError:
            raise CliConfigError(f"--m must be an integer or 'all', got {settings['m']!r}") from None
    if settings["algo"] == "gbdt-nas":
        settings["prune"] = search.PRUNE_NONE
    return settings


def _train_config(settings: dict) -> TrainConfig:
    return TrainConfig(**{k: settings[k] for k in _TRAIN_FIELDS})


def _search_config(settings: dict) -> search.SearchConfig:
    m = settings["m"] if settings["m"] == search.ALL_CANDIDATES else int(settings["m"])
    return search.SearchConfig(
        n_init=settings["n"],
        m_candidates=m,
        k_top=settings["k"],
        t_iters=settings["t"],
        n_pf=settings["n_pf"],
        prune_mode=settings["prune"],
        normalization=settings["normalization"],
        seed=settings["seed"],
    )


def _load_oracle(settings: dict, schema: FeatureSchema):
    if bool(settings["table"]) == bool(settings["synth"]):
        raise CliConfigError("provide exactly one of --table or --synth")
    if settings["table"]:
        return bench.load_table(settings["table"], schema)
    return bench.load_synthetic(settings["synth"])


# -- search ---------------------------------------------------------------------


def cmd_search(args: argparse.Namespace) -> int:
    settings = resolve_search_settings(args)
    if not settings["schema"]:
        raise CliConfigError("--schema is required (flag, config file, or manifest)")
    schema = _load_checked_schema(settings["schema"])
    oracle = _load_oracle(settings, schema)
    if settings["synth"] and oracle.schema.total_dim != schema.total_dim:
        raise CliConfigError("synthetic oracle schema does not match --schema")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    algo = settings["algo"]
    if algo in ("gbdt-nas", "gbdt-nas-s3"):
        cfg = _search_config(settings)
        best, trace = search.gbdt_nas_s3(schema, oracle, cfg, _train_config(settings))
    elif algo == "random":
        best, trace = search.random_search(schema, oracle, settings["budget"], settings["seed"])
    else:
        best, trace = search.regularized_evolution(
            schema,
            oracle,
            settings["budget"],
            settings["population"],
            settings["sample_size"],
            settings["seed"],
        )

    artifacts = {"trace": "trace.csv", "best": "best.json", "manifest": "manifest.json"}
    trace.to_csv(out_dir / "trace.csv")
    best_bits = schema.encode(best)
    best_doc = {
        "accuracy": max(trace.eval_best),
        "bits": [int(b) for b in best_bits],
        "labels": schema.describe(best),
        "queries": trace.queries,
    }
    with open(out_dir / "best.json", "w") as fh:
        json.dump(best_doc, fh, indent=2)
        fh.write("\n")
    for i, report in enumerate(trace.prune_reports, start=1):
        name = f"prune_report_iter{i}.txt"
        with open(out_dir / name, "w") as fh:
            fh.write(report.to_text(schema))
        artifacts.setdefault("prune_reports", []).append(name)
    if trace.final_pool is not None:
        trace.final_pool.to_csv(out_dir / "pool.csv", schema.feature_labels)
        artifacts["pool"] = "pool.csv"
        try:
            model = gbdt.fit(trace.final_pool, _train_config(settings), settings["normalization"])
            gbdt.save_model(model, out_dir / "model.json")
            artifacts["model"] = "model.json"
        except TrainingError:
            pass  # constant targets: nothing worth saving

    inputs = {"schema": _input_entry(settings["schema"])}
    if settings["table"]:
        inputs["table"] = _input_entry(settings["table"])
    if settings["synth"]:
        inputs["synth"] = _input_entry(settings["synth"])
    manifest = RunManifest("search", settings, inputs, artifacts)
    manifest.save(out_dir / "manifest.json")
    print(f"best accuracy {best_doc['accuracy']:.6f} after {trace.queries} queries")
    print(f"artifacts written to {out_dir}")
    return EXIT_OK


# -- eval-predictor ---------------------------------------------------------------


def cmd_eval_predictor(args: argparse.Namespace) -> int:
    schema = _load_checked_schema(args.schema)
    oracle = bench.load_table(args.table, schema)
    X = oracle.known_vectors()
    y = np.array([oracle.table[bits.tobytes()] for bits in X])
    need = args.train_size + args.test_size
    if len(oracle) < need:
        raise CliConfigError(
            f"table holds {len(oracle)} rows, fewer than train+test = {need}"
        )
    train_cfg = TrainConfig(
        **{
            k: getattr(args, k) if getattr(args, k) is not None else default
            for k, default in _TRAIN_FIELDS.items()
        }
    )
    rng = np.random.default_rng(args.seed)
    train_scores, test_scores, tie_counts = [], [], []
    for _ in range(args.repeats):
        order = rng.permutation(len(oracle))
        tr = order[: args.train_size]
        te = order[args.train_size : need]
        model = gbdt.fit(ArchPool(X[tr], y[tr]), train_cfg, args.normalization)
        yn = model.normalizer.normalize
        train_scores.append(
            search.pairwise_accuracy(model.predict_batch(X[tr].astype(float)), yn(y[tr]))
        )
        acc, ties = search.pairwise_accuracy_with_ties(
            model.predict_batch(X[te].astype(float)), yn(y[te])
        )
        test_scores.append(acc)
        tie_counts.append(ties)
    print(f"repeats={args.repeats} train_size={args.train_size} test_size={args.test_size}")
    print(f"train pairwise accuracy: mean={np.mean(train_scores):.4f} std={np.std(train_scores):.4f}")
    print(f"test pairwise accuracy:  mean={np.mean(test_scores):.4f} std={np.std(test_scores):.4f}")
    print(f"tied test pairs: mean={np.mean(tie_counts):.2f}")
    return EXIT_OK


# -- explain ----------------------------------------------------------------------


def cmd_explain(args: argparse.Namespace) -> int:
    schema = _load_checked_schema(args.schema)
    try:
        model = gbdt.load_model(args.model)
    except FileNotFoundError:
        raise CliConfigError(f"model file not found: {args.model}") from None
    pool = ArchPool.from_csv(args.pool)
    if model.schema_dim != schema.total_dim or pool.dim != schema.total_dim:
        raise CliConfigError("model, pool, and schema dimensions disagree")
    sm = treeshap.shap_values(model, pool.X)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "feature_label", "feature_value", "shap_value"])
        for i in range(pool.n):
            for f in range(pool.dim):
                w.writerow([i, schema.feature_labels[f], int(pool.X[i, f]), repr(float(sm.values[i, f]))])
    print(f"wrote per-feature attributions for {pool.n} samples to {args.out}")
    if args.interactions:
        tensor = treeshap.interaction_values(model, pool.X)
        with open(args.interactions, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "label_a", "label_b", "interaction_value"])
            for i in range(pool.n):
                for a in range(pool.dim):
                    for b in range(a, pool.dim):
                        v = float(tensor.values[i, a, b])
                        if v != 0.0 or a == b:
                            w.writerow(
                                [i, schema.feature_labels[a], schema.feature_labels[b], repr(v)]
                            )
        print(f"wrote pairwise attributions to {args.interactions}")
    return EXIT_OK


# -- gen-benchmark ----------------------------------------------------------------


def _parse_weight_spec(items, schema: FeatureSchema, pair: bool):
    out = {}
    for item in items or []:
        try:
            target, w = item.rsplit("=", 1)
            weight = float(w)
        except ValueError:
            raise CliConfigError(f"expected LABEL=WEIGHT, got {item!r}") from None
        if pair:
            parts = target.split("|")
            if len(parts) != 2:
                raise CliConfigError(f"expected LABEL_A|LABEL_B=WEIGHT, got {item!r}")
            a, b = (schema.label_index(p) for p in parts)
            out[(min(a, b), max(a, b))] = weight
        else:
            out[schema.label_index(target)] = weight
    return out


def cmd_gen_benchmark(args: argparse.Namespace) -> int:
    schema = _load_checked_schema(args.schema)
    planted = bench.PlantedSpec(
        bad_features=_parse_weight_spec(args.bad_feature, schema, pair=False),
        bad_pairs=_parse_weight_spec(args.bad_pair, schema, pair=True),
    )
    oracle = bench.make_synthetic(
        schema,
        planted,
        noise_std=args.noise_std,
        seed=args.seed,
        weight_low=args.weight_low,
        weight_high=args.weight_high,
        target_mean=args.target_mean,
    )
    bench.save_synthetic(oracle, args.out)
    print(f"wrote synthetic oracle spec to {args.out}")
    if args.table_out:
        from .space import enumerate_space

        rows, accs = [], []
        for arch in enumerate_space(schema, cap=args.cap):
            bits = schema.encode(arch)
            rows.append(bits)
            accs.append(oracle.query(bits))
        bench.save_table(args.table_out, schema, np.array(rows), np.array(accs))
        print(f"wrote a {len(rows)}-row table to {args.table_out}")
    return EXIT_OK


# -- convert-table ----------------------------------------------------------------


def _graph_schema(max_nodes: int, ops: list[str]) -> FeatureSchema:
    groups = []
    for v in range(1, max_nodes):
        groups.append(
            FeatureGroup("binary", tuple(f"node {v} connects node {u}" for u in range(v)))
        )
        if v < max_nodes - 1:
            # padded nodes carry an all-zero op block, so op choices are free bits
            groups.append(FeatureGroup("binary", tuple(f"node {v} is {op}" for op in ops)))
    return FeatureSchema(tuple(groups))


def _encode_graph(record: dict, max_nodes: int, ops: list[str], schema: FeatureSchema, ln: int):
    adj = record.get("adjacency")
    raw_ops = list(record.get("ops", []))
    if adj is None or not raw_ops:
        raise CliConfigError(f"record {ln}: needs 'adjacency' and 'ops'")
    n = len(adj)
    if any(len(row) != n for row in adj):
        raise CliConfigError(f"record {ln}: adjacency must be square")
    if n > max_nodes:
        raise CliConfigError(f"record {ln}: {n} nodes exceeds --max-nodes {max_nodes}")
    if raw_ops and raw_ops[0] == "input" and raw_ops[-1] == "output":
        raw_ops = raw_ops[1:-1]
    if len(raw_ops) != max(n - 2, 0):
        raise CliConfigError(f"record {ln}: expected {n - 2} intermediate ops, got {len(raw_ops)}")
    for u in range(n):
        for v in range(n):
            if adj[u][v] and u >= v:
                raise CliConfigError(f"record {ln}: adjacency must be strictly upper triangular")
    # remap: intermediates keep their index, the output node moves to max_nodes-1
    def node_pos(i: int) -> int:
        return max_nodes - 1 if i == n - 1 else i

    bits = np.zeros(schema.total_dim, dtype=np.uint8)
    labels = {lbl: i for i, lbl in enumerate(schema.feature_labels)}
    for u in range(n):
        for v in range(n):
            if adj[u][v]:
                bits[labels[f"node {node_pos(v)} connects node {node_pos(u)}"]] = 1
    for i, op in enumerate(raw_ops):
        if op not in ops:
            raise CliConfigError(f"record {ln}: op {op!r} not in --ops")
        bits[labels[f"node {i + 1} is {op}"]] = 1
    return bits


def cmd_convert_table(args: argparse.Namespace) -> int:
    try:
        with open(args.input) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    except FileNotFoundError:
        raise CliConfigError(f"input file not found: {args.input}") from None
    except json.JSONDecodeError as exc:
        raise CliConfigError(f"{args.input}: bad JSON line: {exc}") from exc
    if not records:
        raise CliConfigError(f"{args.input}: no records")
    ops = args.ops.split(",") if args.ops else sorted(
        {op for r in records for op in r.get("ops", []) if op not in ("input", "output")}
    )
    if not ops:
        raise CliConfigError("no operation vocabulary (use --ops)")
    max_nodes = args.max_nodes or max(len(r.get("adjacency", [])) for r in records)
    schema = _graph_schema(max_nodes, ops)
    rows, accs = [], []
    for ln, record in enumerate(records, start=1):
        if "accuracy" not in record:
            raise CliConfigError(f"record {ln}: missing 'accuracy'")
        rows.append(_encode_graph(record, max_nodes, ops, schema, ln))
        accs.append(float(record["accuracy"]))
    save_schema(schema, args.schema_out)
    bench.save_table(args.table_out, schema, np.array(rows), np.array(accs))
    print(f"wrote schema ({schema.total_dim} features) to {args.schema_out}")
    print(f"wrote a {len(rows)}-row table to {args.table_out}")
    return EXIT_OK


# -- show-schema ------------------------------------------------------------------


def _load_checked_schema(path) -> FeatureSchema:
    try:
        return load_schema(path)
    except FileNotFoundError:
        raise CliConfigError(f"schema file not found: {path}") from None
    except (json.JSONDecodeError, SchemaError) as exc:
        raise CliConfigError(f"bad schema file {path}: {exc}") from exc


def cmd_show_schema(args: argparse.Namespace) -> int:
    schema = _load_checked_schema(args.schema)
    print(f"{schema.total_dim} features in {len(schema.groups)} groups")
    print("index | group | kind   | label")
    for gi, g in enumerate(schema.groups):
        for f in schema.group_features(gi):
            print(f"{f:5d} | {gi:5d} | {g.kind:6s} | {schema.feature_labels[f]}")
    return EXIT_OK


# -- parser / dispatch ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gbdt-nas",
        description="Tree-ensemble accuracy prediction, attribution-guided space "
        "pruning, and predictor-guided architecture search.",
    )
    parser.add_argument("--version", action="version", version=f"gbdt-nas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run a search and write trace/best/manifest")
    _add_search_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval-predictor", help="repeated-split predictor quality on a table")
    p.add_argument("--schema", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--train-size", dest="train_size", type=int, default=1000)
    p.add_argument("--test-size", dest="test_size", type=int, default=100)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--normalization", choices=[gbdt.MINMAX, gbdt.STANDARDIZE], default=gbdt.STANDARDIZE)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval_predictor)

    p = sub.add_parser("explain", help="dump per-feature and pairwise attribution CSVs")
    p.add_argument("--schema", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--interactions", help="also write the pairwise CSV here")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("gen-benchmark", help="write a synthetic-oracle spec (and table)")
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=0.0)
    p.add_argument("--weight-low", dest="weight_low", type=float, default=0.0)
    p.add_argument("--weight-high", dest="weight_high", type=float, default=0.04)
    p.add_argument("--target-mean", dest="target_mean", type=float, default=0.90)
    p.add_argument("--bad-feature", action="append", metavar="LABEL=WEIGHT")
    p.add_argument("--bad-pair", action="append", metavar="LABEL_A|LABEL_B=WEIGHT")
    p.add_argument("--table-out", dest="table_out", help="also enumerate the space into a table")
    p.add_argument("--cap", type=int, default=1_000_000)
    p.set_defaults(func=cmd_gen_benchmark)

    p = sub.add_parser("convert-table", help="flatten graph records into a schema + table")
    p.add_argument("--input", required=True, help="JSONL of {adjacency, ops, accuracy}")
    p.add_argument("--ops", help="comma-separated op vocabulary")
    p.add_argument("--max-nodes", dest="max_nodes", type=int)
    p.add_argument("--schema-out", dest="schema_out", required=True)
    p.add_argument("--table-out", dest="table_out", required=True)
    p.set_defaults(func=cmd_convert_table)

    p = sub.add_parser("show-schema", help="validate a schema and echo its label table")
    p.add_argument("--schema", required=True)
    p.set_defaults(func=cmd_show_schema)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliConfigError, SchemaError, TrainingError, search.SearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
