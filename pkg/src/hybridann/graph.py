"""Relation-graph construction: random init, reverse-neighbor descent
iterations gated by a sampled graph-quality estimate, semantic pruning with
in-degree safeguards, and binary index persistence.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .dataset_io import AttributeSchema, SampleStats
from .errors import FormatError
from .metric import MetricConfig

INDEX_MAGIC = b"HELP"
INDEX_VERSION = 1


@dataclass
class BuildParams:
    """Knobs of graph construction; defaults follow the reference setup."""

    gamma: int = 100
    gamma_new: int = 100
    sigma: float = 0.44
    psi_target: float = 0.8
    max_iterations: int = 30
    quality_sample: int = 100
    quality_k: int | None = None  # defaults to gamma
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 2:
            raise ValueError("gamma must be >= 2")
        if self.gamma_new < 1:
            raise ValueError("gamma_new must be >= 1")
        if not 0 <= self.psi_target <= 1:
            raise ValueError("psi_target must be in [0, 1]")
        if not -1 <= self.sigma <= 1:
            raise ValueError("sigma must be in [-1, 1]")
        if self.quality_sample < 1:
            raise ValueError("quality_sample must be >= 1")
        if self.quality_k is not None and self.quality_k < 1:
            raise ValueError("quality_k must be >= 1")


@dataclass
class QualityEstimate:
    """Fixed node sample with its brute-force nearest neighbors, reused
    every iteration to track convergence."""

    sample_ids: np.ndarray
    ground_truth: np.ndarray  # (len(sample), k) int32
    psi: float = 0.0


@dataclass
class RelationGraph:
    """Fixed-capacity adjacency over a dataset, sorted by fused distance."""

    features: np.ndarray  # (n, m) float32
    attrs: np.ndarray  # (n, l) int32
    schema: AttributeSchema
    metric: MetricConfig
    sigma: float
    nbr_ids: np.ndarray  # (n, gamma) int32
    nbr_dists: np.ndarray  # (n, gamma) float32
    nbr_counts: np.ndarray  # (n,) int32
    nbr_flags: np.ndarray | None = None  # build-time new/old flags
    frozen: bool = False
    build_log: dict = field(default_factory=dict)
    quality: QualityEstimate | None = None

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def gamma(self) -> int:
        return self.nbr_ids.shape[1]

    def in_degrees(self) -> np.ndarray:
        return _kernels.count_in_degrees(self.nbr_ids, self.nbr_counts)

    def copy_unfrozen(self) -> "RelationGraph":
        """Deep-copy the mutable build state (for pruning-parameter sweeps)."""
        return RelationGraph(
            features=self.features,
            attrs=self.attrs,
            schema=self.schema,
            metric=self.metric,
            sigma=self.sigma,
            nbr_ids=self.nbr_ids.copy(),
            nbr_dists=self.nbr_dists.copy(),
            nbr_counts=self.nbr_counts.copy(),
            nbr_flags=None if self.nbr_flags is None else self.nbr_flags.copy(),
            frozen=False,
            build_log=dict(self.build_log),
            quality=self.quality,
        )


def init_random_graph(
    features: np.ndarray,
    attrs: np.ndarray,
    schema: AttributeSchema,
    params: BuildParams,
    metric: MetricConfig,
) -> RelationGraph:
    """Seed every node with gamma distinct random neighbors, flagged new."""
    features = np.ascontiguousarray(features, dtype=np.float32)
    attrs = np.ascontiguousarray(attrs, dtype=np.int32)
    n = features.shape[0]
    g = params.gamma
    if n <= g:
        raise ValueError(f"dataset size {n} must exceed gamma {g}; use a smaller gamma")
    rng = np.random.default_rng(params.seed)
    ids = rng.integers(0, n - 1, size=(n, g), dtype=np.int64)
    # shift values >= row index up by one so a node never samples itself
    ids += ids >= np.arange(n)[:, None]
    # resample rows containing duplicates (rare for g << n)
    bad = np.nonzero(np.any(np.sort(ids, axis=1)[:, 1:] == np.sort(ids, axis=1)[:, :-1], axis=1))[0]
    for i in bad:
        pool = np.concatenate((np.arange(i), np.arange(i + 1, n)))
        ids[i] = rng.choice(pool, size=g, replace=False)
    ids = ids.astype(np.int32)

    inv_alpha = 1.0 / metric.alpha
    dists = _kernels.compute_row_distances(features, attrs, ids, inv_alpha)
    # sort each row by distance with id tie-break
    order = np.lexsort((ids, dists), axis=1)
    ids = np.take_along_axis(ids, order, axis=1)
    dists = np.take_along_axis(dists, order, axis=1)
    return RelationGraph(
        features=features,
        attrs=attrs,
        schema=schema,
        metric=metric,
        sigma=params.sigma,
        nbr_ids=ids,
        nbr_dists=dists,
        nbr_counts=np.full(n, g, dtype=np.int32),
        nbr_flags=np.ones((n, g), dtype=np.uint8),
        frozen=False,
    )


def descent_iteration(graph: RelationGraph, params: BuildParams) -> int:
    """One join pass over new x (new + old) candidate pairs.

    Returns the number of edge replacements performed.
    """
    if graph.frozen:
        raise ValueError("graph is frozen")
    if graph.nbr_flags is None:
        raise ValueError("graph has no build flags (already pruned?)")
    new_cand, new_counts, old_cand, old_counts = _kernels.build_candidates(
        graph.nbr_ids, graph.nbr_flags, params.gamma_new
    )
    return int(
        _kernels.local_join(
            graph.features,
            graph.attrs,
            1.0 / graph.metric.alpha,
            new_cand,
            new_counts,
            old_cand,
            old_counts,
            graph.nbr_ids,
            graph.nbr_dists,
            graph.nbr_flags,
        )
    )


def prepare_quality_estimate(graph: RelationGraph, params: BuildParams) -> QualityEstimate:
    """Sample nodes once and brute-force their true neighbors under the metric."""
    k = params.quality_k or params.gamma
    rng = np.random.default_rng(params.seed + 1)
    size = min(params.quality_sample, graph.n)
    sample_ids = np.sort(rng.choice(graph.n, size=size, replace=False)).astype(np.int64)
    gt = _kernels.brute_force_topk(
        graph.features, graph.attrs, 1.0 / graph.metric.alpha, sample_ids, k
    )
    return QualityEstimate(sample_ids=sample_ids, ground_truth=gt)


def estimate_graph_quality(graph: RelationGraph, quality: QualityEstimate) -> float:
    """psi: mean fraction of true k nearest neighbors present in the lists."""
    psi = float(
        _kernels.graph_quality(
            graph.nbr_ids, graph.nbr_counts, quality.sample_ids, quality.ground_truth
        )
    )
    quality.psi = psi
    return psi


def semantic_prune(graph: RelationGraph, params: BuildParams) -> RelationGraph:
    """Heterogeneous semantic pruning with connectivity safeguards.

    Redundant same-attribute edges are dropped (never a node's last incoming
    edge), surviving edges are mirrored where capacity or a safe eviction
    allows, and any node left without an incoming edge is reconnected via
    its nearest out-neighbor.
    """
    if graph.frozen:
        raise ValueError("graph is frozen")
    in_deg = _kernels.count_in_degrees(graph.nbr_ids, graph.nbr_counts)
    _kernels.prune_pass(
        graph.features, graph.attrs, graph.nbr_ids, graph.nbr_dists, graph.nbr_counts,
        in_deg, params.sigma,
    )
    _kernels.reinforce_pass(
        graph.features, graph.attrs, graph.nbr_ids, graph.nbr_dists, graph.nbr_counts,
        in_deg, params.sigma,
    )
    # an unsafe eviction inside reconnect can orphan another node, so sweep
    # with a freshly counted in-degree until every node has an incoming edge
    for _ in range(10):
        in_deg = _kernels.count_in_degrees(graph.nbr_ids, graph.nbr_counts)
        if in_deg.min() >= 1:
            break
        _kernels.reconnect_islands(
            graph.features, graph.attrs, graph.nbr_ids, graph.nbr_dists, graph.nbr_counts,
            in_deg, params.sigma,
        )
    graph.nbr_flags = None
    return graph


def run_descent(
    features: np.ndarray,
    attrs: np.ndarray,
    schema: AttributeSchema,
    params: BuildParams,
    metric: MetricConfig,
) -> RelationGraph:
    """Random init followed by join iterations until the quality gate."""
    graph = init_random_graph(features, attrs, schema, params, metric)
    quality = prepare_quality_estimate(graph, params)
    graph.quality = quality
    psi_history = [estimate_graph_quality(graph, quality)]
    termination = "quality_reached"
    iterations = 0
    while psi_history[-1] < params.psi_target:
        if iterations >= params.max_iterations:
            termination = "max_iterations"
            break
        changes = descent_iteration(graph, params)
        iterations += 1
        psi_history.append(estimate_graph_quality(graph, quality))
        if changes == 0:
            if psi_history[-1] < params.psi_target:
                termination = "converged_below_target"
            break
    graph.build_log = {
        "iterations": iterations,
        "psi_history": psi_history,
        "psi": psi_history[-1],
        "termination": termination,
    }
    return graph


def build(
    features: np.ndarray,
    attrs: np.ndarray,
    schema: AttributeSchema,
    params: BuildParams,
    metric: MetricConfig,
) -> RelationGraph:
    """Full construction: descent to the quality gate, prune, freeze."""
    graph = run_descent(features, attrs, schema, params, metric)
    semantic_prune(graph, params)
    graph.frozen = True
    return graph


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def write_index(graph: RelationGraph, path) -> None:
    """Serialize the frozen graph, dataset, schema, and metric config."""
    parts = [INDEX_MAGIC]
    n, m = graph.features.shape
    l = graph.attrs.shape[1]
    stats = graph.metric.stats
    parts.append(struct.pack("<IQIII", INDEX_VERSION, n, m, l, graph.gamma))
    parts.append(
        struct.pack(
            "<dBBddIqQI",
            graph.metric.alpha,
            1 if graph.metric.override else 0,
            1 if stats is not None else 0,
            stats.avg_feature_distance if stats else 0.0,
            stats.avg_attribute_distance if stats else 0.0,
            stats.sample_size if stats else 0,
            stats.rng_seed if stats else 0,
            graph.metric.n_total,
            graph.metric.l_dims,
        )
    )
    parts.append(struct.pack("<d", graph.sigma))
    for words in graph.schema.dictionaries:
        parts.append(struct.pack("<I", len(words)))
        for w in words:
            enc = w.encode("utf-8")
            parts.append(struct.pack("<I", len(enc)))
            parts.append(enc)
    parts.append(np.ascontiguousarray(graph.features, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(graph.attrs, dtype="<u4").tobytes())
    for i in range(n):
        c = int(graph.nbr_counts[i])
        parts.append(struct.pack("<I", c))
        parts.append(np.ascontiguousarray(graph.nbr_ids[i, :c], dtype="<u4").tobytes())
        parts.append(np.ascontiguousarray(graph.nbr_dists[i, :c], dtype="<f4").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, path):
        self.path = path
        self.buf = open(path, "rb").read()
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.buf):
            raise FormatError(f"{self.path}: truncated index file", offset=self.offset)
        vals = struct.unpack_from(fmt, self.buf, self.offset)
        self.offset += size
        return vals

    def take_array(self, dtype, count):
        dtype = np.dtype(dtype)
        size = dtype.itemsize * count
        if self.offset + size > len(self.buf):
            raise FormatError(f"{self.path}: truncated index file", offset=self.offset)
        arr = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return arr

    def take_bytes(self, count):
        if self.offset + count > len(self.buf):
            raise FormatError(f"{self.path}: truncated index file", offset=self.offset)
        out = self.buf[self.offset : self.offset + count]
        self.offset += count
        return out


def read_index(path) -> RelationGraph:
    """Load an index written by write_index; the result is frozen."""
    r = _Reader(path)
    if r.take_bytes(4) != INDEX_MAGIC:
        raise FormatError(f"{path}: bad magic", offset=0)
    (version, n, m, l, gamma) = r.take("<IQIII")
    if version != INDEX_VERSION:
        raise FormatError(f"{path}: unsupported index version {version}", offset=4)
    (alpha, override, has_stats, s_v, s_a, sample_size, stats_seed, n_total, l_dims) = r.take(
        "<dBBddIqQI"
    )
    (sigma,) = r.take("<d")
    dictionaries = []
    for _ in range(l):
        (count,) = r.take("<I")
        words = []
        for _ in range(count):
            (wlen,) = r.take("<I")
            words.append(r.take_bytes(wlen).decode("utf-8"))
        dictionaries.append(tuple(words))
    schema = AttributeSchema(dictionaries=tuple(dictionaries))
    features = r.take_array("<f4", n * m).reshape(n, m).copy()
    attrs = r.take_array("<u4", n * l).reshape(n, l).astype(np.int32)
    nbr_ids = np.zeros((n, gamma), dtype=np.int32)
    nbr_dists = np.full((n, gamma), np.inf, dtype=np.float32)
    nbr_counts = np.zeros(n, dtype=np.int32)
    for i in range(n):
        (c,) = r.take("<I")
        if c > gamma:
            raise FormatError(f"{path}: node {i} degree {c} exceeds capacity {gamma}", offset=r.offset - 4)
        nbr_ids[i, :c] = r.take_array("<u4", c)
        nbr_dists[i, :c] = r.take_array("<f4", c)
        nbr_counts[i] = c
    if r.offset != len(r.buf):
        raise FormatError(f"{path}: trailing bytes after adjacency block", offset=r.offset)
    stats = (
        SampleStats(
            avg_feature_distance=s_v,
            avg_attribute_distance=s_a,
            sample_size=int(sample_size),
            rng_seed=int(stats_seed),
        )
        if has_stats
        else None
    )
    metric = MetricConfig(
        alpha=alpha, stats=stats, n_total=int(n_total), l_dims=int(l_dims), override=bool(override)
    )
    return RelationGraph(
        features=features,
        attrs=attrs,
        schema=schema,
        metric=metric,
        sigma=sigma,
        nbr_ids=nbr_ids,
        nbr_dists=nbr_dists,
        nbr_counts=nbr_counts,
        frozen=True,
    )
