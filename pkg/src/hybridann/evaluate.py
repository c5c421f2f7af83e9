"""Brute-force oracles, recall scoring, and the benchmark sweep harness.

The oracles are deliberately naive linear scans, structurally independent
of the graph router, so they can serve as ground truth for it.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .graph import RelationGraph
from .metric import MetricConfig
from .router import SearchParams, search

CSV_FIELDS = ["k", "pioneer", "mean_recall_at_10", "qps", "mean_dist_evals", "n_queries"]


@dataclass(frozen=True)
class SweepRow:
    k: int
    pioneer: int
    mean_recall_at_10: float
    qps: float
    mean_dist_evals: float
    n_queries: int


def oracle_auto_topk(
    features: np.ndarray,
    attrs: np.ndarray,
    query_feature: np.ndarray,
    query_attrs: np.ndarray,
    k: int,
    config: MetricConfig,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Exact top-k under the fused metric by full scan, ties by ascending id."""
    n = features.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    if k < 1:
        raise ValueError("k must be >= 1")
    diff = features.astype(np.float64) - np.asarray(query_feature, dtype=np.float64)
    s_v = np.sqrt((diff * diff).sum(axis=1))
    adiff = np.abs(attrs.astype(np.int64) - np.asarray(query_attrs, dtype=np.int64))
    if mask is not None:
        adiff = adiff * np.asarray(mask, dtype=np.int64)
    s_a = adiff.sum(axis=1).astype(np.float64)
    fused = s_v * (1.0 + s_a / config.alpha)
    order = np.lexsort((np.arange(n), fused))
    return order[:k]


def oracle_hybrid_groundtruth(
    features: np.ndarray,
    attrs: np.ndarray,
    query_feature: np.ndarray,
    query_attrs: np.ndarray,
    k: int,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Nodes exactly matching the (masked) attribute constraint, ranked by
    pure feature distance; may return fewer than k ids when matches are scarce."""
    adiff = np.abs(attrs.astype(np.int64) - np.asarray(query_attrs, dtype=np.int64))
    if mask is not None:
        adiff = adiff * np.asarray(mask, dtype=np.int64)
    matching = np.nonzero(adiff.sum(axis=1) == 0)[0]
    if matching.size == 0:
        return np.empty(0, dtype=np.int64)
    diff = features[matching].astype(np.float64) - np.asarray(query_feature, dtype=np.float64)
    s_v = np.sqrt((diff * diff).sum(axis=1))
    order = np.lexsort((matching, s_v))
    return matching[order[: min(k, matching.size)]]


def recall_at_k(retrieved, ground_truth, k: int) -> float:
    """|first-k(retrieved) ∩ ground_truth| / min(k, |ground_truth|).

    The denominator shrinks when fewer than k valid matches exist, so scarce
    patterns do not penalize recall artificially.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    gt = set(int(x) for x in ground_truth)
    if not gt:
        return 1.0
    top = [int(x) for x in list(retrieved)[:k]]
    return len(gt.intersection(top)) / min(k, len(gt))


def bench_sweep(
    graph: RelationGraph,
    query_features: np.ndarray,
    query_attrs: np.ndarray,
    ground_truth: list[np.ndarray],
    k_values: list[int],
    masks: np.ndarray | None = None,
    seed: int = 0,
    pioneer_size: int | None = None,
    timing_passes: int = 3,
) -> list[SweepRow]:
    """For each candidate-pool size K, run all queries single-threaded and
    record mean Recall@10, wall-clock QPS (median of warm passes), and mean
    distance evaluations."""
    if ground_truth is None or len(ground_truth) != query_features.shape[0]:
        raise ValueError("ground truth missing or query count mismatch")
    q = query_features.shape[0]
    rows: list[SweepRow] = []
    for k in k_values:
        if k > graph.n:
            raise ValueError(f"k={k} exceeds dataset size {graph.n}")
        params = SearchParams(k=k, pioneer_size=pioneer_size, seed=seed)
        recalls = np.empty(q)
        evals = np.empty(q)
        elapsed = []
        for p in range(max(1, timing_passes)):
            t0 = time.perf_counter()
            for qi in range(q):
                mask = masks[qi] if masks is not None else None
                per_query = SearchParams(k=k, pioneer_size=pioneer_size, seed=seed, mask=mask)
                ids, _, stats = search(graph, query_features[qi], query_attrs[qi], per_query, qi)
                if p == 0:
                    recalls[qi] = recall_at_k(ids, ground_truth[qi], 10)
                    evals[qi] = stats.dist_evals
            elapsed.append(time.perf_counter() - t0)
        qps = q / float(np.median(elapsed))
        rows.append(
            SweepRow(
                k=k,
                pioneer=SearchParams(k=k, pioneer_size=pioneer_size, seed=seed).resolved_pioneer_size(),
                mean_recall_at_10=float(recalls.mean()),
                qps=qps,
                mean_dist_evals=float(evals.mean()),
                n_queries=q,
            )
        )
    return rows


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    "k": row.k,
                    "pioneer": row.pioneer,
                    "mean_recall_at_10": f"{row.mean_recall_at_10:.6f}",
                    "qps": f"{row.qps:.2f}",
                    "mean_dist_evals": f"{row.mean_dist_evals:.2f}",
                    "n_queries": row.n_queries,
                }
            )
