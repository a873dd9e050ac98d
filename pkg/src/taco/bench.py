"""Quality and performance measurement.

Recall / mean-relative-error metrics, (alpha, beta) parameter sweeps with
QPS timing, activation-variant timing comparison, and the score
distribution diagnostics. CSV column layouts are documented in
docs/csv-schemas.md; floats print with 6 significant digits.
"""

from __future__ import annotations

import csv
import statistics
import time
import warnings as _warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataio import GroundTruth
from .engine import (
    TacoIndex,
    count_collisions,
    rerank,
    sc_linear_scores,
    select_candidates,
    serialize_index,
)
from .errors import ParameterError
from .imi import (
    build_subspace_index,
    linear_dynamic_activation,
    scalable_dynamic_activation,
    sorted_centroid_distances,
)
from .seeding import derive_seed
from .spectral import transform_points

_ZERO_DISTANCE = 1e-12


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def recall(result, truth_ids, k: int) -> float:
    """Fraction of the true top-k found in the result's top-k."""
    truth_ids = np.asarray(truth_ids)
    if k > truth_ids.shape[0]:
        raise ParameterError(f"k {k} exceeds ground truth depth {truth_ids.shape[0]}")
    ids = np.asarray(result.ids if hasattr(result, "ids") else result)
    found = np.intersect1d(ids[:k], truth_ids[:k]).size
    return found / k


def mre_with_skips(result_dists, truth_dists, k: int) -> tuple[float, int]:
    """Mean relative distance error over k ranks, plus the skip count.

    Both distance lists are used in ascending order. Ranks whose true
    distance is ~0 contribute 0 when the result distance is ~0 too and
    are otherwise skipped (counted); missing result ranks are skipped.
    """
    truth_dists = np.asarray(truth_dists, dtype=np.float64)
    if k > truth_dists.shape[0]:
        raise ParameterError(f"k {k} exceeds ground truth depth {truth_dists.shape[0]}")
    res = np.sort(np.asarray(result_dists, dtype=np.float64))
    tru = np.sort(truth_dists)[:k]
    total = 0.0
    used = 0
    skipped = 0
    for rank in range(k):
        if rank >= res.shape[0]:
            skipped += 1
            continue
        t = tru[rank]
        if t < _ZERO_DISTANCE:
            if res[rank] < _ZERO_DISTANCE:
                used += 1
            else:
                skipped += 1
            continue
        total += (res[rank] - t) / t
        used += 1
    return (total / used if used else 0.0), skipped


def mre(result_dists, truth_dists, k: int) -> float:
    return mre_with_skips(result_dists, truth_dists, k)[0]


@dataclass
class Metrics:
    alpha: float
    beta: float
    k: int
    recall: float
    mre: float
    mre_skipped: int
    qps: float
    build_seconds: float
    index_bytes: int
    threads: int
    candidate_counts: np.ndarray  # per query
    candidate_budget_ratio: float  # mean |C| / (beta * n)

    @property
    def mean_candidates(self) -> float:
        return float(np.mean(self.candidate_counts))


@dataclass
class BenchmarkReport:
    rows: list[Metrics]
    metadata: dict = field(default_factory=dict)
    query_records: list[dict] = field(default_factory=list)


def _query_pass(index, data, queries, alpha, beta, k, threads):
    def one(q):
        scores = count_collisions(index, q, alpha)
        cand = select_candidates(scores, beta, index.params.n_subspaces, index.n)
        return rerank(data, q, cand, k), cand

    if threads <= 1:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, queries))


def run_benchmark(index: TacoIndex, data, queries, truth: GroundTruth,
                  alphas, betas, k: int = 50, threads: int = 1,
                  warmup: int = 1, repeats: int = 3,
                  record_queries: bool = False) -> BenchmarkReport:
    """One metrics row per (alpha, beta) grid point.

    Quality metrics come from an untimed pass; QPS is the median over
    ``repeats`` timed passes run after ``warmup`` warm-up passes, with
    the thread count recorded in metadata.
    """
    queries = np.asarray(queries)
    if truth.k < k:
        raise ParameterError(f"ground truth depth {truth.k} is below k {k}")
    if queries.shape[0] != truth.ids.shape[0]:
        raise ParameterError(
            f"{queries.shape[0]} queries but {truth.ids.shape[0]} truth rows"
        )
    index_bytes = len(serialize_index(index))
    build_seconds = float(index.metadata.get("build_seconds", float("nan")))
    report = BenchmarkReport(rows=[], metadata={
        "threads": threads,
        "warmup_passes": warmup,
        "timed_passes": repeats,
        "n_queries": int(queries.shape[0]),
        "query_removal": "after-subset-sampling",
    })
    for alpha in alphas:
        for beta in betas:
            outputs = _query_pass(index, data, queries, alpha, beta, k, threads)
            recalls = []
            mres = []
            skips = 0
            counts = np.empty(len(outputs), dtype=np.int64)
            for qi, (result, cand) in enumerate(outputs):
                recalls.append(recall(result, truth.ids[qi], k))
                value, skipped = mre_with_skips(result.dists, truth.dists[qi], k)
                mres.append(value)
                skips += skipped
                counts[qi] = cand.candidate_num
                if record_queries:
                    report.query_records.append({
                        "query": qi, "alpha": alpha, "beta": beta,
                        "recall": recalls[-1], "mre": value,
                        "candidates": cand.candidate_num,
                        "last_collision": cand.last_collision,
                    })
            times = []
            for _ in range(max(0, warmup - 1)):
                _query_pass(index, data, queries, alpha, beta, k, threads)
            for _ in range(repeats):
                t0 = time.perf_counter()
                _query_pass(index, data, queries, alpha, beta, k, threads)
                times.append(time.perf_counter() - t0)
            qps = len(outputs) / statistics.median(times)
            report.rows.append(Metrics(
                alpha=float(alpha), beta=float(beta), k=k,
                recall=float(np.mean(recalls)), mre=float(np.mean(mres)),
                mre_skipped=skips, qps=qps, build_seconds=build_seconds,
                index_bytes=index_bytes, threads=threads,
                candidate_counts=counts,
                candidate_budget_ratio=float(np.mean(counts) / (beta * index.n)),
            ))
    return report


def write_metrics_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "alpha", "beta", "k", "recall", "mre", "mre_skipped", "qps",
            "build_seconds", "index_bytes", "mean_candidates",
            "candidate_budget_ratio", "threads",
        ])
        for row in report.rows:
            writer.writerow([_fmt(v) for v in (
                row.alpha, row.beta, row.k, row.recall, row.mre,
                row.mre_skipped, row.qps, row.build_seconds, row.index_bytes,
                row.mean_candidates, row.candidate_budget_ratio, row.threads,
            )])


def write_query_records_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "query", "alpha", "beta", "recall", "mre", "candidates",
            "last_collision",
        ])
        for rec in report.query_records:
            writer.writerow([_fmt(rec[c]) for c in (
                "query", "alpha", "beta", "recall", "mre", "candidates",
                "last_collision",
            )])


@dataclass
class ActivationTiming:
    n_cells: int
    scalable_seconds: float  # mean per query
    linear_seconds: float
    n_queries: int


def compare_activations(subspace_data, query_subspaces, alpha: float,
                        cluster_grid, kmeans_iters: int = 20, seed: int = 0,
                        repeats: int = 3) -> list[ActivationTiming]:
    """Per-cell-count timing of both traversals over one subspace.

    Builds one index per grid value, asserts the two traversals emit
    identical cell sequences for every query, and reports mean traversal
    times. Timing differences are reported, never asserted, except for a
    soft warning when the heap variant loses at very large cell counts.
    """
    X = np.asarray(subspace_data, dtype=np.float32)
    Q = np.asarray(query_subspaces, dtype=np.float32)
    n = X.shape[0]
    rows = []
    for n_cells in cluster_grid:
        imi = build_subspace_index(X, n_cells, kmeans_iters, derive_seed(seed, n_cells))
        prepared = [sorted_centroid_distances(imi, q) for q in Q]
        for d1, i1, d2, i2 in prepared:
            heap_run = scalable_dynamic_activation(alpha, n, n_cells, d1, i1, d2, i2, imi)
            linear_run = linear_dynamic_activation(alpha, n, n_cells, d1, i1, d2, i2, imi)
            if heap_run.pop_trace != linear_run.pop_trace:
                raise AssertionError(
                    f"activation variants disagree at {n_cells} cells"
                )
        times = {"scalable": [], "linear": []}
        for _ in range(repeats):
            t0 = time.perf_counter()
            for d1, i1, d2, i2 in prepared:
                scalable_dynamic_activation(alpha, n, n_cells, d1, i1, d2, i2, imi)
            times["scalable"].append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            for d1, i1, d2, i2 in prepared:
                linear_dynamic_activation(alpha, n, n_cells, d1, i1, d2, i2, imi)
            times["linear"].append(time.perf_counter() - t0)
        scalable_s = statistics.median(times["scalable"]) / max(1, len(Q))
        linear_s = statistics.median(times["linear"]) / max(1, len(Q))
        if n_cells >= 2**16 and scalable_s > linear_s:
            _warnings.warn(
                f"heap traversal slower than linear scan at {n_cells} cells "
                f"({scalable_s:.2e}s vs {linear_s:.2e}s per query)",
                RuntimeWarning,
                stacklevel=2,
            )
        rows.append(ActivationTiming(
            n_cells=int(n_cells), scalable_seconds=scalable_s,
            linear_seconds=linear_s, n_queries=len(Q),
        ))
    return rows


def write_activation_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_cells", "scalable_seconds", "linear_seconds", "n_queries"])
        for row in rows:
            writer.writerow([_fmt(v) for v in (
                row.n_cells, row.scalable_seconds, row.linear_seconds, row.n_queries,
            )])


@dataclass
class ParetoRow:
    query: int
    histogram: np.ndarray   # counts per score level, length n_subspaces + 1
    mean_near: float        # mean score of the nearest quantile
    mean_all: float
    ratio: float
    delta_hat: float        # collision-rate gap: near-neighbor vs sampled rest


@dataclass
class ParetoReport:
    rows: list[ParetoRow]
    n_subspaces: int
    mean_ratio: float
    delta_positive_fraction: float
    metadata: dict = field(default_factory=dict)


def pareto_report(index: TacoIndex, data, queries, truth: GroundTruth,
                  alpha: float, quantile: float = 0.2,
                  neighbor_depth: int = 50, sample_size: int = 1000,
                  seed: int = 0, exact: bool = False) -> ParetoReport:
    """Score-distribution diagnostics per query.

    Splits each query's score table between the true nearest ``quantile``
    of the dataset and the rest, and estimates the collision-rate gap
    between the true ``neighbor_depth`` nearest neighbors and a uniform
    sample of non-neighbors. ``exact=True`` counts collisions by true
    subspace distances instead of the traversal (needs the retained
    transformed matrix).
    """
    X = np.asarray(data)
    Q = np.asarray(queries)
    n = X.shape[0]
    n_sub = index.params.n_subspaces
    depth = min(neighbor_depth, truth.k)
    near_count = max(1, int(np.ceil(quantile * n)))
    X64 = X.astype(np.float64)
    xsq = np.einsum("ij,ij->i", X64, X64)
    rng = np.random.default_rng(derive_seed(seed, 97))
    rows = []
    for qi in range(Q.shape[0]):
        q = Q[qi]
        if exact:
            if index.transformed is None:
                from .errors import StateError

                raise StateError("exact diagnostics need the retained transformed matrix")
            qt = transform_points(index.transform, q[None, :].astype(np.float32))[0]
            scores = sc_linear_scores(
                index.transformed, qt, n_sub, index.params.subspace_dim, alpha
            )
        else:
            scores = count_collisions(index, q, alpha)
        q64 = q.astype(np.float64)
        d2 = xsq - 2.0 * (X64 @ q64) + float(q64 @ q64)
        near = np.argpartition(d2, near_count - 1)[:near_count]
        near_mask = np.zeros(n, dtype=bool)
        near_mask[near] = True
        hist = np.bincount(scores, minlength=n_sub + 1)
        mean_all = float(scores.mean())
        mean_near = float(scores[near_mask].mean())
        true_ids = truth.ids[qi, :depth]
        non_mask = np.ones(n, dtype=bool)
        non_mask[true_ids] = False
        pool = np.flatnonzero(non_mask)
        sample = rng.choice(pool, size=min(sample_size, pool.size), replace=False)
        p_near = float(scores[true_ids].mean()) / n_sub
        p_rest = float(scores[sample].mean()) / n_sub
        rows.append(ParetoRow(
            query=qi, histogram=hist, mean_near=mean_near, mean_all=mean_all,
            ratio=mean_near / mean_all if mean_all > 0 else float("inf"),
            delta_hat=p_near - p_rest,
        ))
    ratios = np.array([r.ratio for r in rows])
    deltas = np.array([r.delta_hat for r in rows])
    return ParetoReport(
        rows=rows, n_subspaces=n_sub,
        mean_ratio=float(ratios.mean()),
        delta_positive_fraction=float((deltas > 0).mean()),
        metadata={
            "alpha": alpha, "quantile": quantile, "neighbor_depth": depth,
            "sample_size": sample_size, "exact": exact,
        },
    )


def write_pareto_csv(report: ParetoReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["query"]
        header += [f"score_{level}" for level in range(report.n_subspaces + 1)]
        header += ["mean_near", "mean_all", "ratio", "delta_hat"]
        writer.writerow(header)
        for row in report.rows:
            record = [row.query]
            record += [int(c) for c in row.histogram]
            record += [row.mean_near, row.mean_all, row.ratio, row.delta_hat]
            writer.writerow([_fmt(v) for v in record])
