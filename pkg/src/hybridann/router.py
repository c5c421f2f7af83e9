"""Two-phase query routing over a frozen relation graph.

Phase 1 (coarse) drives a small pioneer set, expanding half of each
pioneer's stored neighbor list; phase 2 (refinement) greedily expands the
full neighbor list of every result entry. Per-query visited bookkeeping
guarantees each node's distance is evaluated at most once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graph import RelationGraph


@dataclass
class SearchParams:
    k: int
    pioneer_size: int | None = None  # default: k // 2
    seed: int = 0
    mask: np.ndarray | None = None
    use_coarse: bool = True

    def resolved_pioneer_size(self) -> int:
        p = self.pioneer_size if self.pioneer_size is not None else max(1, self.k // 2)
        if not 1 <= p <= self.k:
            raise ValueError(f"pioneer_size {p} must be in [1, k={self.k}]")
        return p


@dataclass(frozen=True)
class SearchStats:
    dist_evals: int
    phase1_evals: int
    phase1_expansions: int  # coarse-path length proxy
    hops: int


def entry_points(n: int, k: int, seed: int, query_index: int) -> np.ndarray:
    """K distinct uniform-random entry nodes from a per-query seeded stream."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, query_index)))
    return rng.choice(n, size=k, replace=False).astype(np.int64)


def search(
    graph: RelationGraph,
    query_feature: np.ndarray,
    query_attrs: np.ndarray,
    params: SearchParams,
    query_index: int = 0,
) -> tuple[np.ndarray, np.ndarray, SearchStats]:
    """Top-k ids (ascending fused distance, id tie-break) plus instrumentation."""
    if not graph.frozen:
        raise ValueError("graph must be frozen before searching")
    if params.k > graph.n:
        raise ValueError(f"k={params.k} exceeds dataset size {graph.n}")
    if params.k < 1:
        raise ValueError("k must be >= 1")
    qfeat = np.ascontiguousarray(query_feature, dtype=np.float64)
    qattr = np.ascontiguousarray(query_attrs, dtype=np.float64)
    if qfeat.shape != (graph.features.shape[1],):
        raise ValueError(f"query feature dimension {qfeat.shape} != {graph.features.shape[1]}")
    if qattr.shape != (graph.attrs.shape[1],):
        raise ValueError(f"query attribute dimension {qattr.shape} != {graph.attrs.shape[1]}")
    if params.mask is None:
        qmask = np.ones(graph.attrs.shape[1], dtype=np.float64)
    else:
        qmask = np.ascontiguousarray(params.mask, dtype=np.float64)
        if qmask.shape != qattr.shape:
            raise ValueError("mask length must equal attribute dimension")
    pioneer = params.resolved_pioneer_size()
    entries = entry_points(graph.n, params.k, params.seed, query_index)
    ids, dists, evals, p1_evals, p1_exp, hops = _kernels.route(
        graph.features,
        graph.attrs,
        graph.nbr_ids,
        graph.nbr_counts,
        qfeat,
        qattr,
        qmask,
        1.0 / graph.metric.alpha,
        entries,
        pioneer,
        params.use_coarse,
    )
    stats = SearchStats(
        dist_evals=int(evals),
        phase1_evals=int(p1_evals),
        phase1_expansions=int(p1_exp),
        hops=int(hops),
    )
    return ids, dists, stats


def search_batch(
    graph: RelationGraph,
    query_features: np.ndarray,
    query_attrs: np.ndarray,
    params: SearchParams,
    masks: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, list[SearchStats]]:
    """Run one search per query row; query_index is the row number."""
    q = query_features.shape[0]
    all_ids = np.empty((q, params.k), dtype=np.int64)
    all_dists = np.empty((q, params.k), dtype=np.float64)
    all_stats: list[SearchStats] = []
    for qi in range(q):
        per_query = params
        if masks is not None:
            per_query = SearchParams(
                k=params.k,
                pioneer_size=params.pioneer_size,
                seed=params.seed,
                mask=masks[qi],
                use_coarse=params.use_coarse,
            )
        ids, dists, stats = search(graph, query_features[qi], query_attrs[qi], per_query, qi)
        all_ids[qi] = ids
        all_dists[qi] = dists
        all_stats.append(stats)
    return all_ids, all_dists, all_stats
