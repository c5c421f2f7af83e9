"""Command-line harness: data generation, ground truth, index build,
search, and benchmark sweeps, each leaving an append-only run manifest.

Exit codes: 0 success, 2 argument error, 3 format error, 4 constraint error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dataset_io, evaluate, graph as graph_mod, metric, router
from .errors import ConstraintError, FormatError


def _sha256(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _write_manifest(out_dir, command: str, args_snapshot: dict, artifacts: list, extra: dict | None = None):
    snapshot = {k: v for k, v in args_snapshot.items() if k != "func" and not callable(v)}
    record = {
        "command": command,
        "argv": sys.argv[1:],
        "config": snapshot,
        "tool_version": __version__,
        "timestamp": time.time(),
        "artifacts": {str(p): _sha256(p) for p in artifacts},
    }
    if extra:
        record.update(extra)
    manifest = Path(out_dir) / "manifest.jsonl"
    with open(manifest, "a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def _load_config_file(path) -> dict:
    """Flat key=value config; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}: line {lineno} is not key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _extract_config_path(argv: list[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Fold config-file values into the chosen subcommand as defaults.

    Command-line flags still override; required options named in the file
    become optional on the command line.
    """
    config_path = _extract_config_path(argv)
    subcommand = next((t for t in argv if not t.startswith("-")), None)
    if config_path and subcommand in parser._subcommands:
        sub = parser._subcommands[subcommand]
        file_values = _load_config_file(config_path)
        actions = {a.dest: a for a in sub._actions}
        unknown = set(file_values) - set(actions)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        defaults = {}
        for key, raw in file_values.items():
            action = actions[key]
            defaults[key] = action.type(raw) if action.type is not None else raw
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _num_threads(args) -> int:
    env = os.environ.get("STABLE_THREADS")
    if env:
        return int(env)
    return getattr(args, "threads", 8)


def _set_threads(count: int):
    import numba

    numba.set_num_threads(max(1, min(count, numba.config.NUMBA_NUM_THREADS)))


def _dataset_paths(data_dir):
    d = Path(data_dir)
    return {
        "base": d / "base.fvecs",
        "base_attrs": d / "base_attrs.txt",
        "queries": d / "queries.fvecs",
        "query_attrs": d / "query_attrs.txt",
        "query_masks": d / "query_masks.txt",
    }


def cmd_gen_data(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    features = dataset_io.generate_synthetic(args.n, args.m, args.dist, args.seed)
    schema, attrs = dataset_io.generate_attributes(args.n, args.l, args.pool, args.seed + 1)
    active = args.filters if args.filters is not None else args.l
    qfeat, qattr, qmask = dataset_io.generate_queries(
        features, attrs, args.q, active, min_matches=args.min_matches, seed=args.seed + 2
    )
    paths = _dataset_paths(out_dir)
    dataset_io.write_vecs_file(paths["base"], features, "float32")
    dataset_io.write_attribute_file(paths["base_attrs"], attrs, schema)
    dataset_io.write_vecs_file(paths["queries"], qfeat, "float32")
    dataset_io.write_attribute_file(paths["query_attrs"], qattr, schema)
    dataset_io.write_mask_file(paths["query_masks"], qmask)
    _write_manifest(
        out_dir,
        "gen-data",
        vars(args) | {"config": None},
        list(paths.values()),
        extra={"theta": schema.theta, "seeds": [args.seed, args.seed + 1, args.seed + 2]},
    )
    print(f"wrote dataset to {out_dir} (theta={schema.theta})")
    return 0


def cmd_gt(args) -> int:
    paths = _dataset_paths(args.data_dir)
    features = dataset_io.read_vecs_file(paths["base"], "float32")
    _, attrs = dataset_io.read_attribute_file(paths["base_attrs"])
    qfeat = dataset_io.read_vecs_file(paths["queries"], "float32")
    _, qattr = dataset_io.read_attribute_file(paths["query_attrs"])
    masks = dataset_io.read_mask_file(paths["query_masks"])
    records = []
    empties = 0
    for qi in range(qfeat.shape[0]):
        ids = evaluate.oracle_hybrid_groundtruth(
            features, attrs, qfeat[qi], qattr[qi], args.k, mask=masks[qi]
        )
        if ids.size == 0:
            empties += 1
        records.append(ids)
    if empties:
        print(f"warning: {empties} queries match zero records; wrote empty records", file=sys.stderr)
    out = Path(args.out)
    dataset_io.write_groundtruth_file(out, records)
    _write_manifest(out.parent, "gt", vars(args) | {"config": None}, [out], extra={"empty_queries": empties})
    print(f"wrote ground truth for {qfeat.shape[0]} queries to {out}")
    return 0


def cmd_build(args) -> int:
    _set_threads(_num_threads(args))
    paths = _dataset_paths(args.data_dir)
    features = dataset_io.read_vecs_file(paths["base"], "float32")
    schema, attrs = dataset_io.read_attribute_file(paths["base_attrs"])
    if args.alpha == "auto":
        stats = dataset_io.sample_statistics(
            features, attrs, min(1000, features.shape[0]), seed=args.seed
        )
        config = metric.compute_alpha(stats, features.shape[0], schema.l)
    else:
        config = metric.MetricConfig.manual(float(args.alpha), schema.l, features.shape[0])
    params = graph_mod.BuildParams(
        gamma=args.gamma,
        gamma_new=args.gamma_new if args.gamma_new is not None else args.gamma,
        sigma=args.sigma,
        psi_target=args.psi,
        max_iterations=args.max_iterations,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    g = graph_mod.build(features, attrs, schema, params, config)
    build_seconds = time.perf_counter() - t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    graph_mod.write_index(g, out)
    alpha_info = {
        "alpha": config.alpha,
        "override": config.override,
        "n_total": config.n_total,
        "l_dims": config.l_dims,
    }
    if config.stats is not None:
        alpha_info |= {
            "avg_feature_distance": config.stats.avg_feature_distance,
            "avg_attribute_distance": config.stats.avg_attribute_distance,
            "sample_size": config.stats.sample_size,
        }
    _write_manifest(
        out.parent,
        "build",
        vars(args) | {"config": None},
        [out],
        extra={"alpha_provenance": alpha_info, "build_log": g.build_log, "build_seconds": build_seconds},
    )
    psi = g.build_log["psi"]
    print(
        f"built index: n={g.n} gamma={params.gamma} psi={psi:.3f} "
        f"({g.build_log['termination']}, {g.build_log['iterations']} iterations) -> {out}"
    )
    if g.build_log["termination"] != "quality_reached" and psi < params.psi_target:
        print(
            f"error: graph quality {psi:.3f} did not reach target {params.psi_target}",
            file=sys.stderr,
        )
        return 4
    return 0


def _load_queries(args):
    qfeat = dataset_io.read_vecs_file(args.queries, "float32")
    _, qattr = dataset_io.read_attribute_file(args.query_attrs)
    masks = dataset_io.read_mask_file(args.masks) if args.masks else None
    return qfeat, qattr, masks


def cmd_search(args) -> int:
    g = graph_mod.read_index(args.index)
    qfeat, qattr, masks = _load_queries(args)
    params = router.SearchParams(k=args.k, pioneer_size=args.pioneer, seed=args.seed)
    ids, dists, _ = router.search_batch(g, qfeat, qattr, params, masks=masks)
    out = Path(args.out)
    with open(out, "w") as f:
        for qi in range(ids.shape[0]):
            for rank in range(args.k):
                f.write(f"{qi}\t{rank}\t{ids[qi, rank]}\t{dists[qi, rank]:.9g}\n")
    artifacts = [out]
    if args.out_ivecs:
        dataset_io.write_groundtruth_file(args.out_ivecs, [ids[qi] for qi in range(ids.shape[0])])
        artifacts.append(Path(args.out_ivecs))
    _write_manifest(out.parent, "search", vars(args) | {"config": None}, artifacts)
    print(f"wrote {ids.shape[0]} query results to {out}")
    return 0


def cmd_bench(args) -> int:
    g = graph_mod.read_index(args.index)
    qfeat, qattr, masks = _load_queries(args)
    gt = dataset_io.read_groundtruth_file(args.gt)
    k_values = [int(v) for v in args.k_values.split(",")]
    rows = evaluate.bench_sweep(
        g, qfeat, qattr, gt, k_values, masks=masks, seed=args.seed, pioneer_size=args.pioneer
    )
    out = Path(args.out)
    evaluate.write_sweep_csv(out, rows)
    _write_manifest(out.parent, "bench", vars(args) | {"config": None}, [out])
    for row in rows:
        print(
            f"k={row.k} pioneer={row.pioneer} recall@10={row.mean_recall_at_10:.4f} "
            f"qps={row.qps:.1f} dist_evals={row.mean_dist_evals:.1f}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridann", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)
    parser._subcommands = {}
    _add_parser = sub.add_parser

    def add_parser(name, **kwargs):
        p = _add_parser(name, **kwargs)
        parser._subcommands[name] = p
        return p

    sub.add_parser = add_parser

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file; flags override it")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset with attributes and queries")
    add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--pool", type=int, required=True)
    p.add_argument("--q", type=int, default=100)
    p.add_argument("--filters", type=int, default=None, help="active filters per query (default: L)")
    p.add_argument("--min-matches", type=int, default=1)
    p.add_argument("--dist", choices=["uniform01", "gaussian"], default="gaussian")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gt", help="compute exact-match ground truth for a dataset's queries")
    add_common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("build", help="build and persist the relation-graph index")
    add_common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=int, default=100)
    p.add_argument("--gamma-new", type=int, default=None)
    p.add_argument("--sigma", type=float, default=0.44)
    p.add_argument("--psi", type=float, default=0.8)
    p.add_argument("--max-iterations", type=int, default=30)
    p.add_argument("--alpha", default="auto", help="'auto' (calibrated) or a manual value")
    p.add_argument("--threads", type=int, default=8)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("search", help="answer top-K queries against a built index")
    add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--query-attrs", required=True)
    p.add_argument("--masks", default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--pioneer", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--out-ivecs", default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bench", help="recall/QPS sweep over candidate-pool sizes")
    add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--query-attrs", required=True)
    p.add_argument("--masks", default=None)
    p.add_argument("--gt", required=True)
    p.add_argument("--k-values", default="10,50,100,200,500")
    p.add_argument("--pioneer", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_defaults(parser, list(argv) if argv is not None else sys.argv[1:])
        return args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except ConstraintError as exc:
        print(f"constraint error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, FileNotFoundError) as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
