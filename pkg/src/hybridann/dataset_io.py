"""Dataset loading, synthetic generation, and sampled distance statistics.

Binary vector files follow the texmex layout: every record is a 4-byte
little-endian int32 dimension count followed by ``dim`` elements of the
payload type (float32, int32, or uint8); records are concatenated with no
padding. Attribute and mask files are line-oriented text.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConstraintError, FormatError

_ELEMENT_DTYPES = {
    "float32": np.dtype("<f4"),
    "int32": np.dtype("<i4"),
    "uint8": np.dtype("u1"),
}

ATTRIBUTE_HEADER_PREFIX = "#schema v1 L="
DICTIONARY_LINE_PREFIX = "#dict "


@dataclass(frozen=True)
class AttributeSchema:
    """Per-dimension label dictionaries; a label maps to its 1-based position."""

    dictionaries: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.dictionaries:
            raise ValueError("schema needs at least one attribute dimension")
        for d, labels in enumerate(self.dictionaries):
            if not labels:
                raise ValueError(f"dimension {d} has an empty dictionary")
            if len(set(labels)) != len(labels):
                raise ValueError(f"dimension {d} has duplicate labels")

    @property
    def l(self) -> int:
        return len(self.dictionaries)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.dictionaries)

    @property
    def theta(self) -> int:
        out = 1
        for c in self.cardinalities:
            out *= c
        return out


@dataclass(frozen=True)
class SampleStats:
    """Mean pairwise feature and attribute distances over a node sample."""

    avg_feature_distance: float
    avg_attribute_distance: float
    sample_size: int
    rng_seed: int

    def __post_init__(self):
        if self.sample_size < 2:
            raise ValueError("sample_size must be >= 2")
        if self.avg_feature_distance < 0 or self.avg_attribute_distance < 0:
            raise ValueError("averages must be non-negative")


def read_vecs_file(path, element_kind: str) -> np.ndarray:
    """Read a .fvecs/.ivecs/.bvecs file into an (n, dim) array.

    uint8 payloads are widened to float32 so the metric code stays
    single-path; int32 payloads are returned as int32.
    """
    dtype = _element_dtype(element_kind)
    raw = Path(path).read_bytes()
    if len(raw) == 0:
        raise FormatError(f"{path}: no records", offset=0)
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated dimension header", offset=0)
    dim = int(np.frombuffer(raw, dtype="<i4", count=1)[0])
    if dim < 1:
        raise FormatError(f"{path}: non-positive dimension {dim}", offset=0)
    rec_size = 4 + dim * dtype.itemsize
    if len(raw) % rec_size != 0:
        _scan_for_fault(path, raw, dtype)
    n = len(raw) // rec_size
    flat = np.frombuffer(raw, dtype=np.uint8).reshape(n, rec_size)
    dims = flat[:, :4].copy().view("<i4").ravel()
    if not np.all(dims == dim):
        bad = int(np.argmax(dims != dim))
        raise FormatError(
            f"{path}: record {bad} has dimension {int(dims[bad])}, expected {dim}",
            offset=bad * rec_size,
        )
    data = flat[:, 4:].copy().view(dtype).reshape(n, dim)
    if element_kind == "uint8":
        return data.astype(np.float32)
    return np.ascontiguousarray(data)


def write_vecs_file(path, matrix: np.ndarray, element_kind: str) -> None:
    """Write an (n, dim) array in the little-endian dim-prefixed layout."""
    dtype = _element_dtype(element_kind)
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ValueError("matrix must be 2-d and non-empty")
    n, dim = matrix.shape
    body = np.ascontiguousarray(matrix, dtype=dtype)
    out = io.BytesIO()
    prefix = np.int32(dim).astype("<i4").tobytes()
    for row in body:
        out.write(prefix)
        out.write(row.tobytes())
    Path(path).write_bytes(out.getvalue())


def _element_dtype(element_kind: str) -> np.dtype:
    try:
        return _ELEMENT_DTYPES[element_kind]
    except KeyError:
        raise ValueError(f"unknown element kind {element_kind!r}") from None


def _scan_for_fault(path, raw: bytes, dtype: np.dtype):
    """Walk records to name the first truncation or dimension fault."""
    offset = 0
    expected = None
    rec = 0
    while offset < len(raw):
        if offset + 4 > len(raw):
            raise FormatError(f"{path}: truncated record {rec}", offset=offset)
        dim = int(np.frombuffer(raw, dtype="<i4", count=1, offset=offset)[0])
        if expected is None:
            expected = dim
        elif dim != expected:
            raise FormatError(
                f"{path}: record {rec} has dimension {dim}, expected {expected}",
                offset=offset,
            )
        end = offset + 4 + dim * dtype.itemsize
        if dim < 1 or end > len(raw):
            raise FormatError(f"{path}: truncated record {rec}", offset=offset)
        offset = end
        rec += 1
    raise FormatError(f"{path}: inconsistent record layout", offset=offset)


def generate_synthetic(n: int, m: int, distribution: str = "gaussian", seed: int = 0) -> np.ndarray:
    """Deterministic synthetic feature matrix, float32."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    rng = np.random.default_rng(seed)
    if distribution == "uniform01":
        data = rng.random((n, m), dtype=np.float32)
    elif distribution == "gaussian":
        data = rng.standard_normal((n, m), dtype=np.float32)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    return data


def generate_attributes(n: int, l: int, pool_size: int, seed: int = 0) -> tuple[AttributeSchema, np.ndarray]:
    """Uniform attribute matrix over per-dimension pools of `pool_size` labels.

    Labels are "v1".."vV"; the mapped value of a label is its 1-based
    position, so the matrix holds integers in [1, pool_size].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if l < 1 or pool_size < 1:
        raise ValueError("l and pool_size must be >= 1")
    labels = tuple(f"v{u + 1}" for u in range(pool_size))
    schema = AttributeSchema(dictionaries=tuple(labels for _ in range(l)))
    rng = np.random.default_rng(seed)
    attrs = rng.integers(1, pool_size + 1, size=(n, l), dtype=np.int32)
    return schema, attrs


def generate_queries(
    features: np.ndarray,
    attributes: np.ndarray,
    q: int,
    active_filters: int,
    min_matches: int = 1,
    seed: int = 0,
    max_attempts: int = 200,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build q queries whose attribute patterns have known support in the base.

    Each query copies the attribute vector of a base record whose masked
    pattern is shared by at least `min_matches` base records (rejection
    sampled), activates `active_filters` uniformly chosen dimensions in the
    mask, and perturbs the source feature vector with gaussian noise at 5%
    of the sampled mean feature distance.
    """
    features = np.asarray(features, dtype=np.float32)
    attributes = np.asarray(attributes, dtype=np.int32)
    n, l = attributes.shape
    if n < 1:
        raise ValueError("base dataset is empty")
    if not 0 <= active_filters <= l:
        raise ValueError("active_filters must be in [0, L]")
    if q < 1:
        raise ValueError("q must be >= 1")
    rng = np.random.default_rng(seed)
    stats = sample_statistics(features, attributes, min(1000, n), seed=seed)
    noise_scale = 0.05 * stats.avg_feature_distance

    qfeat = np.empty((q, features.shape[1]), dtype=np.float32)
    qattr = np.empty((q, l), dtype=np.int32)
    qmask = np.zeros((q, l), dtype=np.int32)
    for qi in range(q):
        dims = rng.choice(l, size=active_filters, replace=False) if active_filters else np.empty(0, np.int64)
        src = -1
        for _ in range(max_attempts):
            cand = int(rng.integers(0, n))
            if active_filters == 0:
                src = cand
                break
            support = int(
                np.count_nonzero((attributes[:, dims] == attributes[cand, dims]).all(axis=1))
            )
            if support >= min_matches:
                src = cand
                break
        if src < 0:
            raise ConstraintError(
                f"query {qi}: no attribute pattern with support >= {min_matches} "
                f"found in {max_attempts} attempts"
            )
        qattr[qi] = attributes[src]
        qmask[qi, dims] = 1
        noise = rng.standard_normal(features.shape[1]).astype(np.float32)
        qfeat[qi] = features[src] + noise_scale * noise
    return qfeat, qattr, qmask


def sample_statistics(
    features: np.ndarray, attributes: np.ndarray, sample_size: int, seed: int = 0
) -> SampleStats:
    """Mean Euclidean / Manhattan distance over all unordered pairs of a sample."""
    features = np.asarray(features)
    attributes = np.asarray(attributes)
    n = features.shape[0]
    if sample_size < 2:
        raise ValueError("sample_size must be >= 2")
    if sample_size > n:
        raise ValueError("sample_size exceeds dataset size")
    rng = np.random.default_rng(seed)
    ids = rng.choice(n, size=sample_size, replace=False)
    s_v = float(pdist(features[ids].astype(np.float64), metric="euclidean").mean())
    s_a = float(pdist(attributes[ids].astype(np.float64), metric="cityblock").mean())
    return SampleStats(
        avg_feature_distance=s_v,
        avg_attribute_distance=s_a,
        sample_size=sample_size,
        rng_seed=seed,
    )


def write_attribute_file(path, labels: list[list[str]] | np.ndarray, schema: AttributeSchema | None = None) -> None:
    """Write raw attribute labels, one comma-separated record per line.

    When `schema` is given, a mapped integer matrix may be passed instead of
    labels and per-dimension dictionaries are recorded so re-reading restores
    the exact mapping.
    """
    lines = []
    if isinstance(labels, np.ndarray):
        if schema is None:
            raise ValueError("mapped attribute matrix requires a schema")
        l = schema.l
        lines.append(f"{ATTRIBUTE_HEADER_PREFIX}{l}")
        for d, words in enumerate(schema.dictionaries):
            lines.append(f"{DICTIONARY_LINE_PREFIX}{d} " + ",".join(words))
        for row in labels:
            lines.append(",".join(schema.dictionaries[d][int(v) - 1] for d, v in enumerate(row)))
    else:
        l = len(labels[0])
        lines.append(f"{ATTRIBUTE_HEADER_PREFIX}{l}")
        if schema is not None:
            for d, words in enumerate(schema.dictionaries):
                lines.append(f"{DICTIONARY_LINE_PREFIX}{d} " + ",".join(words))
        for row in labels:
            lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_attribute_file(path) -> tuple[AttributeSchema, np.ndarray]:
    """Read an attribute text file back into a schema and mapped matrix.

    Dictionaries come from #dict header lines when present; otherwise they
    are rebuilt in first-occurrence order.
    """
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith(ATTRIBUTE_HEADER_PREFIX):
        raise FormatError(f"{path}: missing '{ATTRIBUTE_HEADER_PREFIX}<l>' header")
    l = int(text[0][len(ATTRIBUTE_HEADER_PREFIX):])
    dicts: dict[int, list[str]] = {}
    rows: list[list[str]] = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        if line.startswith(DICTIONARY_LINE_PREFIX):
            head, words = line[len(DICTIONARY_LINE_PREFIX):].split(" ", 1)
            dicts[int(head)] = words.split(",")
            continue
        parts = line.split(",")
        if len(parts) != l:
            raise FormatError(f"{path}: line {lineno} has {len(parts)} fields, expected {l}")
        rows.append(parts)
    if not rows:
        raise FormatError(f"{path}: no records")
    if dicts:
        if sorted(dicts) != list(range(l)):
            raise FormatError(f"{path}: incomplete dictionary headers")
        dictionaries = tuple(tuple(dicts[d]) for d in range(l))
    else:
        built: list[list[str]] = [[] for _ in range(l)]
        for row in rows:
            for d, label in enumerate(row):
                if label not in built[d]:
                    built[d].append(label)
        dictionaries = tuple(tuple(d) for d in built)
    schema = AttributeSchema(dictionaries=dictionaries)
    from .metric import map_attributes  # local import avoids a cycle

    return schema, map_attributes(rows, schema)


def write_mask_file(path, masks: np.ndarray) -> None:
    masks = np.asarray(masks, dtype=np.int64)
    lines = [",".join(str(int(v)) for v in row) for row in masks]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mask_file(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        vals = [int(v) for v in line.split(",")]
        if any(v not in (0, 1) for v in vals):
            raise FormatError(f"{path}: line {lineno} has non-binary mask values")
        rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no records")
    return np.asarray(rows, dtype=np.int32)


def write_groundtruth_file(path, neighbor_lists: list[np.ndarray]) -> None:
    """Write ivecs ground truth; records may have differing lengths."""
    out = io.BytesIO()
    for ids in neighbor_lists:
        ids = np.asarray(ids, dtype="<i4")
        out.write(np.int32(len(ids)).astype("<i4").tobytes())
        out.write(ids.tobytes())
    Path(path).write_bytes(out.getvalue())


def read_groundtruth_file(path) -> list[np.ndarray]:
    """Read ivecs ground truth, allowing ragged (including empty) records."""
    raw = Path(path).read_bytes()
    offset = 0
    records: list[np.ndarray] = []
    while offset < len(raw):
        if offset + 4 > len(raw):
            raise FormatError(f"{path}: truncated record {len(records)}", offset=offset)
        dim = int(np.frombuffer(raw, dtype="<i4", count=1, offset=offset)[0])
        end = offset + 4 + dim * 4
        if dim < 0 or end > len(raw):
            raise FormatError(f"{path}: truncated record {len(records)}", offset=offset)
        records.append(np.frombuffer(raw, dtype="<i4", count=dim, offset=offset + 4).astype(np.int64))
        offset = end
    return records
