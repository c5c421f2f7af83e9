"""Fused feature/attribute distance and its statistical calibration.

The fused distance of a node against a query is

    U = S_V * (1 + S_A / alpha)

where S_V is the Euclidean feature distance, S_A the Manhattan distance
between the mapped attribute vectors (optionally masked), and alpha a
scale-alignment coefficient derived from sampled dataset statistics.
Smaller U means more similar; U equals S_V exactly when attributes fully
match.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset_io import AttributeSchema, SampleStats
from .errors import CalibrationError, MappingError


@dataclass(frozen=True)
class MetricConfig:
    """Single source of truth for fused-distance evaluation."""

    alpha: float
    stats: SampleStats | None
    n_total: int
    l_dims: int
    override: bool = False

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.l_dims < 1:
            raise ValueError("l_dims must be >= 1")

    @classmethod
    def manual(cls, alpha: float, l_dims: int, n_total: int = 0) -> "MetricConfig":
        """Pin alpha by hand (sensitivity sweeps); provenance records the override."""
        return cls(alpha=alpha, stats=None, n_total=n_total, l_dims=l_dims, override=True)


@dataclass(frozen=True)
class SelectionMargin:
    """Penalty factor of a given attribute mismatch and the feature-distance
    ratio below which a mismatched node still outranks a matched one."""

    lam: float
    threshold_ratio: float


def map_attributes(raw, schema: AttributeSchema) -> np.ndarray:
    """Map raw labels to their 1-based dictionary positions.

    Equality of raw labels is preserved exactly: two records match on a
    dimension iff their mapped values are equal.
    """
    lookups = [{label: u + 1 for u, label in enumerate(d)} for d in schema.dictionaries]
    rows = list(raw)
    out = np.empty((len(rows), schema.l), dtype=np.int32)
    for i, row in enumerate(rows):
        if len(row) != schema.l:
            raise ValueError(f"record {i} has {len(row)} labels, expected {schema.l}")
        for d, label in enumerate(row):
            try:
                out[i, d] = lookups[d][label]
            except KeyError:
                raise MappingError(
                    f"record {i}: label {label!r} not in dimension {d}'s dictionary"
                ) from None
    return out


def attribute_distance(a, b) -> float:
    """Manhattan distance between two mapped attribute vectors."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError(f"attribute length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def attribute_distance_masked(a, b, mask) -> float:
    """Manhattan distance restricted to mask-active dimensions.

    mask_l = 0 marks a wildcard (or missing value); an all-ones mask
    reproduces the unmasked distance exactly.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.int64)
    if not (a.shape == b.shape == mask.shape):
        raise ValueError("attribute/mask length mismatch")
    return float((mask * np.abs(a - b)).sum())


def feature_distance(u, v) -> float:
    """Euclidean distance with 64-bit accumulation over 32-bit inputs."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"feature length mismatch: {u.shape} vs {v.shape}")
    return float(np.sqrt(np.sum((u - v) ** 2)))


def norm_scale(x: float) -> float:
    """Decade-shift a positive value into (0.1, 1].

    Divides by 10 while the value exceeds 1, multiplies by 10 while it is at
    or below 0.1; exactly 0.1 therefore lands on 1.0 since the interval is
    open at 0.1.
    """
    if x < 0:
        raise ValueError("norm_scale requires a non-negative input")
    if x == 0:
        raise ValueError("norm_scale is undefined at 0")
    while x > 1.0:
        x /= 10.0
    while x <= 0.1:
        x *= 10.0
    return x


def compute_alpha(stats: SampleStats, n_total: int, l_dims: int) -> MetricConfig:
    """Calibrate alpha from sampled statistics:

        alpha = norm_scale(N / S_V_mean) + norm_scale(S_A_mean / L)

    Zero attribute variance carries no calibration signal, so S_A_mean = 0
    contributes 0 with a warning; S_V_mean = 0 means the feature space is
    degenerate and calibration fails.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if l_dims < 1:
        raise ValueError("l_dims must be >= 1")
    if stats.avg_feature_distance == 0:
        raise CalibrationError("degenerate feature space: mean sampled feature distance is 0")
    feature_term = norm_scale(n_total / stats.avg_feature_distance)
    if stats.avg_attribute_distance == 0:
        warnings.warn(
            "mean sampled attribute distance is 0; attribute term of alpha set to 0",
            stacklevel=2,
        )
        attribute_term = 0.0
    else:
        attribute_term = norm_scale(stats.avg_attribute_distance / l_dims)
    return MetricConfig(
        alpha=feature_term + attribute_term,
        stats=stats,
        n_total=n_total,
        l_dims=l_dims,
        override=False,
    )


def fused_distance(node_feature, node_attrs, query_feature, query_attrs, config: MetricConfig, mask=None) -> float:
    """Fused distance U = S_V * (1 + S_A / alpha) of a node against a query."""
    s_v = feature_distance(node_feature, query_feature)
    if mask is None:
        s_a = attribute_distance(node_attrs, query_attrs)
    else:
        s_a = attribute_distance_masked(node_attrs, query_attrs, mask)
    return s_v * (1.0 + s_a / config.alpha)


def selection_margin(s_a: float, config: MetricConfig) -> SelectionMargin:
    """Closed-form selection rule for a mismatch of attribute distance s_a.

    A node at attribute distance s_a outranks a fully matching node iff its
    feature distance is below the matched node's feature distance times
    threshold_ratio = 1 / (1 + s_a / alpha).
    """
    if s_a < 0:
        raise ValueError("s_a must be non-negative")
    lam = s_a / config.alpha
    return SelectionMargin(lam=lam, threshold_ratio=1.0 / (1.0 + lam))
