"""Command-line surface: synth, groundtruth, build, query, bench, pareto,
and compare-activations subcommands.

Exit codes: 0 success, 1 domain error, 2 usage error, 3 I/O or format
error. All randomness fans out from --seed; TACO_THREADS sets the default
worker count, overridden by --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from .dataio import (
    compute_ground_truth,
    load_ground_truth,
    read_vectors,
    save_ground_truth,
    write_vectors,
)
from .engine import (
    IndexParams,
    QueryParams,
    attach_transformed,
    build_index,
    count_collisions,
    load_index,
    rerank,
    save_index,
    select_candidates,
    serialize_index,
)
from .errors import FormatError, ParameterError, TacoError
from .synth import make_clustered

# (n_subspaces, subspace_dim) presets keyed by the dataset family they fit
PRESETS = {
    "deep1m": (6, 8),
    "gist1m": (4, 10),
    "sift10m": (6, 6),
    "ydeep10m": (6, 8),
    "spacev10m": (6, 10),
}

DEFAULT_CLUSTERS = 4096
DEFAULT_KMEANS_ITERS = 20


def _default_threads() -> int:
    env = os.environ.get("TACO_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=42, help="root random seed")
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker threads (default: $TACO_THREADS or 1)")


def _add_index_params(parser):
    parser.add_argument("--preset", choices=sorted(PRESETS),
                        help="named (subspaces, subspace-dim) preset")
    parser.add_argument("--subspaces", type=int, help="number of subspaces")
    parser.add_argument("--subspace-dim", type=int, help="dimensions per subspace")
    parser.add_argument("--clusters", type=int, default=DEFAULT_CLUSTERS,
                        help="cells per subspace (perfect square)")
    parser.add_argument("--kmeans-iters", type=int, default=DEFAULT_KMEANS_ITERS)


def _index_params(args) -> IndexParams:
    n_sub, sub_dim = None, None
    if args.preset:
        n_sub, sub_dim = PRESETS[args.preset]
    if args.subspaces is not None:
        n_sub = args.subspaces
    if args.subspace_dim is not None:
        sub_dim = args.subspace_dim
    if n_sub is None or sub_dim is None:
        raise ParameterError("provide --preset or both --subspaces and --subspace-dim")
    return IndexParams(
        n_subspaces=n_sub, subspace_dim=sub_dim, clusters=args.clusters,
        kmeans_iters=args.kmeans_iters, seed=args.seed,
    )


def _parse_grid(text: str, name: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise ParameterError(f"bad {name} list {text!r}") from exc
    if not values:
        raise ParameterError(f"empty {name} list")
    return values


def cmd_synth(args) -> int:
    base, queries = make_clustered(
        n=args.n, n_queries=args.queries, dim=args.dim,
        n_clusters=args.mixture_clusters, active_dim=args.active_dim,
        n_super=args.super_clusters, super_scale=args.super_scale,
        seed=args.seed,
    )
    write_vectors(base, args.out, "float32")
    if args.queries > 0:
        write_vectors(queries, args.queries_out, "float32")
    print(json.dumps({"n": args.n, "queries": args.queries, "dim": args.dim,
                      "out": args.out}))
    return 0


def cmd_groundtruth(args) -> int:
    base = read_vectors(args.dataset)
    queries = read_vectors(args.queries)
    truth = compute_ground_truth(base, queries, args.k)
    save_ground_truth(truth, args.ids_out, args.dists_out)
    print(json.dumps({"queries": int(queries.shape[0]), "k": args.k}))
    return 0


def cmd_build(args) -> int:
    data = read_vectors(args.dataset)
    params = _index_params(args)
    index = build_index(data, params)
    save_index(index, args.index_out)
    summary = dict(index.metadata)
    summary.update({
        "index_path": args.index_out,
        "index_bytes": len(serialize_index(index)),
        "n_subspaces": params.n_subspaces,
        "subspace_dim": params.subspace_dim,
        "clusters": params.clusters,
        "seed": params.seed,
    })
    print(json.dumps(summary, indent=2))
    return 0


def cmd_query(args) -> int:
    qp = QueryParams(alpha=args.alpha, beta=args.beta, k=args.k)
    index = load_index(args.index)
    data = read_vectors(args.dataset)
    if data.shape[0] != index.n or data.shape[1] != index.d:
        raise ParameterError(
            f"dataset shape {data.shape} does not match index ({index.n}, {index.d})"
        )
    queries = read_vectors(args.queries)
    ids = np.full((queries.shape[0], qp.k), -1, dtype=np.int32)
    dists = np.full((queries.shape[0], qp.k), np.inf, dtype=np.float32)
    candidate_rows = []
    for qi, q in enumerate(queries):
        scores = count_collisions(index, q, qp.alpha)
        cand = select_candidates(scores, qp.beta, index.params.n_subspaces, index.n)
        result = rerank(data, q, cand, qp.k)
        got = result.ids.shape[0]
        ids[qi, :got] = result.ids
        dists[qi, :got] = result.dists
        candidate_rows.append((qi, cand.candidate_num, cand.last_collision))
    write_vectors(ids, args.ids_out, "int32")
    write_vectors(dists, args.dists_out, "float32")
    if args.candidates_out:
        import csv

        with open(args.candidates_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["query", "candidates", "last_collision"])
            writer.writerows(candidate_rows)
    print(json.dumps({"queries": int(queries.shape[0]), "k": qp.k,
                      "alpha": qp.alpha, "beta": qp.beta}))
    return 0


def cmd_bench(args) -> int:
    index = load_index(args.index)
    data = read_vectors(args.dataset)
    queries = read_vectors(args.queries)
    truth = load_ground_truth(args.truth_ids, args.truth_dists)
    report = bench_mod.run_benchmark(
        index, data, queries, truth,
        alphas=_parse_grid(args.alphas, "alpha"),
        betas=_parse_grid(args.betas, "beta"),
        k=args.k, threads=args.threads, warmup=args.warmup,
        repeats=args.repeats, record_queries=bool(args.records_out),
    )
    bench_mod.write_metrics_csv(report, args.out)
    if args.records_out:
        bench_mod.write_query_records_csv(report, args.records_out)
    best = max(report.rows, key=lambda r: r.recall)
    print(json.dumps({"rows": len(report.rows), "best_recall": best.recall,
                      "out": args.out, **report.metadata}))
    return 0


def cmd_pareto(args) -> int:
    index = load_index(args.index)
    data = read_vectors(args.dataset)
    if data.shape[0] != index.n or data.shape[1] != index.d:
        raise ParameterError(
            f"dataset shape {data.shape} does not match index ({index.n}, {index.d})"
        )
    queries = read_vectors(args.queries)
    truth = load_ground_truth(args.truth_ids, args.truth_dists)
    if args.exact:
        attach_transformed(index, data)
    report = bench_mod.pareto_report(
        index, data, queries, truth, alpha=args.alpha, seed=args.seed,
        exact=args.exact,
    )
    bench_mod.write_pareto_csv(report, args.out)
    print(json.dumps({
        "queries": len(report.rows), "mean_ratio": report.mean_ratio,
        "delta_positive_fraction": report.delta_positive_fraction,
        "out": args.out,
    }))
    return 0


def cmd_compare_activations(args) -> int:
    data = read_vectors(args.dataset)
    s = args.subspace_dim
    if s > data.shape[1]:
        raise ParameterError(
            f"subspace dimension {s} exceeds data dimension {data.shape[1]}"
        )
    queries = read_vectors(args.queries)
    grid = [int(v) for v in _parse_grid(args.clusters_grid, "clusters")]
    rows = bench_mod.compare_activations(
        data[:, :s], queries[:, :s], alpha=args.alpha, cluster_grid=grid,
        kmeans_iters=args.kmeans_iters, seed=args.seed, repeats=args.repeats,
    )
    bench_mod.write_activation_csv(rows, args.out)
    print(json.dumps({"rows": len(rows), "out": args.out}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taco",
        description="Subspace-collision approximate nearest neighbor search",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a clustered synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--queries-out", default="queries.fvecs")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--mixture-clusters", type=int, default=150)
    p.add_argument("--active-dim", type=int, default=32)
    p.add_argument("--super-clusters", type=int, default=1,
                   help="group mixture centers around this many super-centers")
    p.add_argument("--super-scale", type=float, default=0.0)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("groundtruth", help="exact k-NN ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--ids-out", required=True)
    p.add_argument("--dists-out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_groundtruth)

    p = sub.add_parser("build", help="build and save an index")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index-out", required=True)
    _add_index_params(p)
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="answer k-NN queries from a saved index")
    p.add_argument("--index", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.005)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--ids-out", required=True)
    p.add_argument("--dists-out", required=True)
    p.add_argument("--candidates-out", help="optional per-query candidate CSV")
    _add_common(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="recall/MRE/QPS over an (alpha, beta) grid")
    p.add_argument("--index", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--truth-ids", required=True)
    p.add_argument("--truth-dists", required=True)
    p.add_argument("--alphas", default="0.01,0.05,0.1")
    p.add_argument("--betas", default="0.001,0.005,0.02")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--records-out", help="optional raw per-query CSV")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pareto", help="score-distribution diagnostics CSV")
    p.add_argument("--index", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--truth-ids", required=True)
    p.add_argument("--truth-dists", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--exact", action="store_true",
                   help="count collisions by exact subspace distances")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("compare-activations",
                       help="time both traversals over a cluster-count grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--subspace-dim", type=int, default=8)
    p.add_argument("--clusters-grid", default="1024,4096,16384")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--kmeans-iters", type=int, default=DEFAULT_KMEANS_ITERS)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_compare_activations)

    return parser


def _fail(code: int, kind: str, err: Exception) -> int:
    message = " ".join(str(err).split())
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        return _fail(1, "parameter", exc)
    except FormatError as exc:
        return _fail(3, "format", exc)
    except OSError as exc:
        return _fail(3, "io", exc)
    except TacoError as exc:
        return _fail(1, "domain", exc)


if __name__ == "__main__":
    sys.exit(main())
