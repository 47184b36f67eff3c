"""Binary index persistence.

Little-endian, section-tagged layout with per-section byte counts and a
trailing CRC-32 so corruption is caught without a heavyweight
serialization dependency:

    magic "GGNN" | version u32 | flags u32 (bit 0: 64-bit counts)
    | n d l s g k k_nn k_sym (u32 each, u64 when flagged)
    | sections: tag[4] length u64 payload...
    | crc32 u32 over everything above

Sections: CFG0 (build config JSON), LAY0 per layer (node_count,
adjacency, nn_dists, sym_count, d_nn1), TRN0 (coarse-layer translations
to dataset ids), STA0 (d_nn1 mean/max).
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .config import BuildConfig
from .data import FormatError
from .graph import AdjacencyLayer, GraphStats, Hierarchy

MAGIC = b"GGNN"
VERSION = 1
_WIDE_FLAG = 1


class IndexFormatError(FormatError):
    """Raised for unreadable or corrupted index files."""


def _pack_section(tag: bytes, payload: bytes) -> bytes:
    assert len(tag) == 4
    return tag + struct.pack("<Q", len(payload)) + payload


def _layer_payload(layer: AdjacencyLayer) -> bytes:
    parts = [
        struct.pack("<Q", layer.node_count),
        np.ascontiguousarray(layer.adjacency, dtype="<i4").tobytes(),
        np.ascontiguousarray(layer.nn_dists, dtype="<f8").tobytes(),
        np.ascontiguousarray(layer.sym_count, dtype="<i4").tobytes(),
        np.ascontiguousarray(layer.d_nn1, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def save_index(h: Hierarchy, path: str | Path) -> None:
    """Write a lossless snapshot of the hierarchy and its build config."""
    cfg = h.config
    n = h.n
    for i, layer in enumerate(h.layers):
        if layer.k != cfg.k or layer.k_nn != cfg.k_nn:
            raise ValueError(
                f"layer {i} slot shape ({layer.k}, {layer.k_nn}) does not match "
                f"the build config ({cfg.k}, {cfg.k_nn})"
            )
    wide = n >= 2**31 or n * cfg.k >= 2**31
    header_vals = [n, h.dim, h.num_layers, h.s, h.g, cfg.k, cfg.k_nn, cfg.k_sym]
    fmt = "<8Q" if wide else "<8I"
    out = [MAGIC, struct.pack("<II", VERSION, _WIDE_FLAG if wide else 0)]
    out.append(struct.pack(fmt, *header_vals))

    cfg_json = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    out.append(_pack_section(b"CFG0", cfg_json))
    for layer in h.layers:
        out.append(_pack_section(b"LAY0", _layer_payload(layer)))
    trn_parts = []
    for t in h.to_bottom[1:]:
        trn_parts.append(struct.pack("<Q", len(t)))
        trn_parts.append(np.ascontiguousarray(t, dtype="<i4").tobytes())
    out.append(_pack_section(b"TRN0", b"".join(trn_parts)))
    if h.stats is not None:
        out.append(_pack_section(b"STA0", struct.pack("<dd", h.stats.d_nn1_mean, h.stats.d_nn1_max)))

    blob = b"".join(out)
    Path(path).write_bytes(blob + struct.pack("<I", zlib.crc32(blob)))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, nbytes: int, what: str) -> bytes:
        if self.pos + nbytes > len(self.blob):
            raise IndexFormatError(
                f"{self.path}: truncated while reading {what} at byte offset {self.pos}"
            )
        out = self.blob[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return out

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size, what), dtype=dtype).copy()


def load_index(path: str | Path) -> Hierarchy:
    """Read an index written by save_index; call attach() before querying."""
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise IndexFormatError(f"{path}: file too short ({len(blob)} bytes)")
    body, crc_stored = blob[:-4], struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(body) != crc_stored:
        raise IndexFormatError(f"{path}: checksum failure")
    r = _Reader(body, path)
    if r.take(4, "magic") != MAGIC:
        raise IndexFormatError(f"{path}: bad magic")
    version, flags = struct.unpack("<II", r.take(8, "version"))
    if version != VERSION:
        raise IndexFormatError(f"{path}: unsupported version {version} (expected {VERSION})")
    wide = bool(flags & _WIDE_FLAG)
    fmt = "<8Q" if wide else "<8I"
    n, d, l, s, g, k, k_nn, k_sym = struct.unpack(fmt, r.take(struct.calcsize(fmt), "header"))

    cfg: BuildConfig | None = None
    layers: list[AdjacencyLayer] = []
    translations: list[np.ndarray] = []
    stats: GraphStats | None = None
    while r.pos < len(body):
        tag = r.take(4, "section tag")
        (length,) = struct.unpack("<Q", r.take(8, "section length"))
        payload = _Reader(r.take(length, f"section {tag!r}"), path)
        if tag == b"CFG0":
            cfg = BuildConfig.from_dict(json.loads(payload.blob.decode()))
        elif tag == b"LAY0":
            (node_count,) = struct.unpack("<Q", payload.take(8, "layer node count"))
            layer = AdjacencyLayer(int(node_count), int(k), int(k_nn))
            layer.adjacency[:] = payload.array("<i4", node_count * k, "adjacency").reshape(
                node_count, k
            )
            layer.nn_dists[:] = payload.array("<f8", node_count * k_nn, "nn_dists").reshape(
                node_count, k_nn
            )
            layer.sym_count[:] = payload.array("<i4", node_count, "sym_count")
            layer.d_nn1[:] = payload.array("<f8", node_count, "d_nn1")
            layers.append(layer)
        elif tag == b"TRN0":
            while payload.pos < len(payload.blob):
                (m,) = struct.unpack("<Q", payload.take(8, "translation length"))
                translations.append(payload.array("<i4", m, "translation"))
        elif tag == b"STA0":
            mean, mx = struct.unpack("<dd", payload.take(16, "stats"))
            stats = GraphStats(mean, mx)
        else:
            raise IndexFormatError(f"{path}: unknown section tag {tag!r}")

    if cfg is None or len(layers) != l or len(translations) != l - 1:
        raise IndexFormatError(
            f"{path}: incomplete index (config={cfg is not None}, "
            f"layers={len(layers)}/{l}, translations={len(translations)}/{l - 1})"
        )
    to_bottom: list[np.ndarray | None] = [None, *translations]
    return Hierarchy(layers, to_bottom, int(s), int(g), cfg, stats, dim=int(d))
