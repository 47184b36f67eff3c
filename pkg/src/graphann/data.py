"""Vector storage, TexMex-format file IO, synthetic datasets and distances.

File layouts (little-endian, one record after another):

    fvecs:  [int32 d][d * float32]
    bvecs:  [int32 d][d * uint8]
    ivecs:  [int32 k][k * int32]
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend


class FormatError(ValueError):
    """Raised for malformed vector/id files."""


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


@dataclass(frozen=True)
class Dataset:
    """A dense n x d collection of float32 vectors with implicit ids 0..n-1.

    Immutable after construction; safe to share between worker threads.
    Query sets use the same container, the dimension check against the
    indexed dataset happens at query time.
    """

    vectors: np.ndarray

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D array, got shape {v.shape}")
        if v.dtype != np.float32:
            raise ValueError(f"expected float32 vectors, got {v.dtype}")
        if not v.flags["C_CONTIGUOUS"]:
            raise ValueError("vectors must be C-contiguous")
        if not np.isfinite(v).all():
            bad = int(np.argwhere(~np.isfinite(v).all(axis=1))[0, 0])
            raise ValueError(f"non-finite value in vector {bad}")
        v.setflags(write=False)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def content_hash(self) -> str:
        """Hex digest identifying the vector contents, echoed in reports."""
        return hashlib.sha256(self.vectors.tobytes()).hexdigest()[:16]


def squared_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance between two vectors.

    All internal comparisons run on squared distances; the ordering of
    candidates is the same as for the true metric and no square roots are
    needed in hot loops. Inputs are float32, accumulation is float64.
    """
    a = np.ascontiguousarray(a, dtype=np.float32)
    b = np.ascontiguousarray(b, dtype=np.float32)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(backend.impl.squared_l2(a, b))


def _read_records(path: str | Path, elem_dtype: np.dtype, elem_size: int, kind: str):
    """Parse a TexMex-style file into an (n, d) array of `elem_dtype`."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: no records (file has {len(raw)} bytes)")
    d = int(np.frombuffer(raw, dtype="<i4", count=1)[0])
    if d <= 0:
        raise FormatError(f"{path}: invalid dimension {d} at byte offset 0")
    rec_bytes = 4 + d * elem_size
    n, tail = divmod(len(raw), rec_bytes)
    if tail != 0:
        raise FormatError(
            f"{path}: truncated {kind} file, {tail} trailing bytes after "
            f"{n} records of {rec_bytes} bytes (byte offset {n * rec_bytes})"
        )
    dims = np.frombuffer(raw, dtype="<i4").view()[:: rec_bytes // 4] if elem_size == 4 else None
    if dims is None:
        # uint8 payload: dimension prefixes sit at byte strides, gather them
        dims = np.frombuffer(raw, dtype=np.uint8).reshape(n, rec_bytes)[:, :4].copy().view("<i4").ravel()
    if not (dims == d).all():
        bad = int(np.argmin(dims == d))
        raise FormatError(
            f"{path}: inconsistent dimension, record {bad} claims {int(dims[bad])} "
            f"(expected {d}, byte offset {bad * rec_bytes})"
        )
    if elem_size == 4:
        body = np.frombuffer(raw, dtype=elem_dtype).reshape(n, d + 1)[:, 1:]
    else:
        body = np.frombuffer(raw, dtype=np.uint8).reshape(n, rec_bytes)[:, 4:].view(elem_dtype)
    return np.ascontiguousarray(body)


def load_vectors(path: str | Path, fmt: str = "fvecs") -> Dataset:
    """Load an fvecs or bvecs file; bvecs bytes are promoted to float32.

    uint8 values embed exactly in float32, so promotion preserves the
    ordering of all pairwise distances.
    """
    if fmt == "fvecs":
        arr = _read_records(path, np.dtype("<f4"), 4, "fvecs").astype(np.float32)
        if not np.isfinite(arr).all():
            bad = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0, 0])
            raise FormatError(f"{path}: non-finite value in record {bad}")
    elif fmt == "bvecs":
        arr = _read_records(path, np.dtype(np.uint8), 1, "bvecs").astype(np.float32)
    else:
        raise ValueError(f"unknown vector format {fmt!r} (expected 'fvecs' or 'bvecs')")
    return Dataset(arr)


def load_ids(path: str | Path) -> np.ndarray:
    """Load an ivecs id table as an (m, k) int32 array of indices."""
    arr = _read_records(path, np.dtype("<i4"), 4, "ivecs")
    if (arr < 0).any():
        r, c = np.argwhere(arr < 0)[0]
        raise FormatError(f"{path}: negative index {int(arr[r, c])} in record {int(r)}")
    return arr.astype(np.int32)


def write_vectors(path: str | Path, vectors: np.ndarray, fmt: str = "fvecs") -> None:
    """Write vectors in fvecs (float32) or bvecs (uint8) layout."""
    vectors = np.asarray(vectors)
    n, d = vectors.shape
    dims = np.full((n, 1), d, dtype="<i4")
    if fmt == "fvecs":
        body = np.hstack([dims.view("<f4"), vectors.astype("<f4")])
        Path(path).write_bytes(body.tobytes())
    elif fmt == "bvecs":
        payload = vectors.astype(np.uint8)
        rows = [np.hstack([dims[i].view(np.uint8), payload[i]]) for i in range(n)]
        Path(path).write_bytes(np.concatenate(rows).tobytes())
    else:
        raise ValueError(f"unknown vector format {fmt!r}")


def write_ids(path: str | Path, ids: np.ndarray) -> None:
    """Write an (m, k) id table in ivecs layout."""
    ids = np.asarray(ids, dtype="<i4")
    m, k = ids.shape
    dims = np.full((m, 1), k, dtype="<i4")
    Path(path).write_bytes(np.hstack([dims, ids]).tobytes())


def gen_synthetic(
    n: int,
    d: int,
    seed: int,
    law: str = "uniform",
    clusters: int = 8,
) -> Dataset:
    """Deterministic synthetic dataset for desk-scale testing.

    law:
        "uniform"   iid U[0, 1) coordinates
        "gaussian"  iid N(0, 1) coordinates
        "clustered" `clusters` Gaussian centers, points drawn around them
    """
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be >= 1, got n={n} d={d}")
    rng = np.random.default_rng(seed)
    if law == "uniform":
        arr = rng.random((n, d), dtype=np.float32)
    elif law == "gaussian":
        arr = rng.standard_normal((n, d)).astype(np.float32)
    elif law == "clustered":
        if clusters < 1:
            raise ValueError("clustered law needs clusters >= 1")
        centers = rng.standard_normal((clusters, d)) * 5.0
        assign = rng.integers(0, clusters, size=n)
        arr = (centers[assign] + rng.standard_normal((n, d)) * 0.25).astype(np.float32)
    else:
        raise ValueError(f"unknown law {law!r}")
    return Dataset(arr)
