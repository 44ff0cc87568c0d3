"""Patch embeddings: a handcrafted multi-scale descriptor plus an import path
for externally precomputed embeddings.

A feature grid is a (grid_h, grid_w, dim) float array, one embedding per
grid cell. The built-in descriptor needs no model weights: per patch and
scale it takes per-channel mean and standard deviation plus a magnitude-
weighted 8-bin gradient-orientation histogram of the luminance (14 values
per scale), then pools every scale's map onto a common base grid.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from scipy import ndimage

from . import imaging
from .errors import (
    DimensionMismatchError,
    MissingEmbeddingError,
    UnsupportedModelError,
)
from .framing import ByteReader, ByteWriter, check_crc
from .imaging import CANONICAL_SIZE

EMBEDDING_MAGIC = b"PLEM"
EMBEDDING_VERSION = 1

_STATS_PER_SCALE = 14  # 3 means + 3 stds + 8 orientation bins


class ExtractorKind(Enum):
    BUILTIN_DESCRIPTOR = 1
    IMPORTED_EMBEDDINGS = 2


@dataclass(frozen=True)
class ExtractorConfig:
    kind: ExtractorKind = ExtractorKind.BUILTIN_DESCRIPTOR
    base_grid: int = 32
    scales: tuple = (8, 16, 32)
    import_path: Optional[str] = None

    def __post_init__(self):
        if CANONICAL_SIZE % self.base_grid != 0:
            raise ValueError(f"base_grid {self.base_grid} must divide {CANONICAL_SIZE}")
        if list(self.scales) != sorted(self.scales):
            raise ValueError(f"scales must be sorted ascending, got {self.scales}")
        if len(self.scales) == 0:
            raise ValueError("at least one scale is required")
        for s in self.scales:
            if s < 1 or CANONICAL_SIZE % s != 0:
                raise ValueError(f"scale {s} must divide {CANONICAL_SIZE}")

    @property
    def dim(self) -> int:
        return _STATS_PER_SCALE * len(self.scales)


def extract(img: np.ndarray, cfg: ExtractorConfig, name: Optional[str] = None) -> np.ndarray:
    """Embed one canonical 256x256x3 image as a (base_grid, base_grid, dim) grid.

    With IMPORTED_EMBEDDINGS, `name` selects the entry in the import file
    and the image content is ignored.
    """
    if cfg.kind is ExtractorKind.IMPORTED_EMBEDDINGS:
        if cfg.import_path is None:
            raise ValueError("imported-embeddings config needs import_path")
        if name is None:
            raise ValueError("imported-embeddings extraction needs the image name")
        store = load_embedding_file(cfg.import_path)
        if name not in store:
            raise MissingEmbeddingError(
                f"no embedding for {name!r} in {cfg.import_path}"
            )
        return store[name]
    return _builtin_grid(img, cfg)


def _builtin_grid(img: np.ndarray, cfg: ExtractorConfig) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.shape != (CANONICAL_SIZE, CANONICAL_SIZE, 3):
        raise DimensionMismatchError(
            f"expected {CANONICAL_SIZE}x{CANONICAL_SIZE}x3 input, got {arr.shape}"
        )
    lum = imaging.luminance(arr)
    gx = ndimage.sobel(lum, axis=1, mode="nearest")
    gy = ndimage.sobel(lum, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    # 8 orientation bins over the full circle; zero-gradient pixels carry no
    # weight, so flat patches fall back to the uniform histogram below.
    bins = np.clip(((np.arctan2(gy, gx) + np.pi) / (np.pi / 4.0)).astype(np.int64), 0, 7)

    parts = []
    for s in cfg.scales:
        g = CANONICAL_SIZE // s
        blocks = arr.reshape(g, s, g, s, 3)
        mean = blocks.mean(axis=(1, 3))
        std = blocks.std(axis=(1, 3))

        cell = np.arange(CANONICAL_SIZE) // s
        flat = (cell[:, None] * g + cell[None, :]) * 8 + bins
        hist = np.bincount(flat.ravel(), weights=mag.ravel(), minlength=g * g * 8)
        hist = hist.reshape(g, g, 8)
        totals = hist.sum(axis=2, keepdims=True)
        hist = np.where(totals > 1e-12, hist / np.maximum(totals, 1e-300), 0.125)

        feat = np.concatenate([mean, std, hist], axis=2)
        parts.append(_pool_to(feat, cfg.base_grid))
    return np.concatenate(parts, axis=2)


def _pool_to(feat: np.ndarray, base: int) -> np.ndarray:
    """Average-pool a (g, g, d) map onto (base, base, d); coarser maps replicate."""
    g = feat.shape[0]
    if g == base:
        return feat
    if g > base:
        r = g // base
        return feat.reshape(base, r, base, r, -1).mean(axis=(1, 3))
    r = base // g
    return np.repeat(np.repeat(feat, r, axis=0), r, axis=1)


def channel_selection(dim: int, keep: int, seed: int) -> np.ndarray:
    """Seed-determined sorted subset of `keep` channel indices out of `dim`."""
    if not 1 <= keep <= dim:
        raise ValueError(f"keep must be in [1, {dim}], got {keep}")
    perm = np.random.default_rng(seed).permutation(dim)
    return np.sort(perm[:keep])


def reduce_dims(grid: np.ndarray, keep: int, seed: int) -> np.ndarray:
    """Keep a seeded random channel subset; pure selection, values unchanged.

    The selection depends only on (dim, keep, seed), so it is identical
    across all cells and all images sharing the seed.
    """
    arr = np.asarray(grid)
    if arr.ndim != 3:
        raise DimensionMismatchError(f"expected (gh, gw, dim) grid, got {arr.shape}")
    return arr[:, :, channel_selection(arr.shape[2], keep, seed)]


def save_embedding_file(path, grids: Mapping[str, np.ndarray]):
    """Write a name -> feature grid mapping as a CRC-checked binary container."""
    items = sorted(grids.items())
    if not items:
        raise ValueError("no embeddings to save")
    shape = np.asarray(items[0][1]).shape
    w = ByteWriter()
    w.raw(EMBEDDING_MAGIC)
    w.u16(EMBEDDING_VERSION)
    w.u32(len(items))
    for name, grid in items:
        arr = np.asarray(grid, dtype=np.float64)
        if arr.ndim != 3 or arr.shape != shape:
            raise DimensionMismatchError(
                f"embedding {name!r} has shape {arr.shape}, expected {shape}"
            )
        w.utf8(name)
        w.u16(arr.shape[0])
        w.u16(arr.shape[1])
        w.u16(arr.shape[2])
        w.f32_array(arr)
    Path(path).write_bytes(w.finish_with_crc())


def load_embedding_file(path) -> dict:
    """Read an embedding container; entries must share one grid shape."""
    data = Path(path).read_bytes()
    body = check_crc(data, EMBEDDING_MAGIC)
    r = ByteReader(body)
    r.raw(len(EMBEDDING_MAGIC))
    version = r.u16()
    if version != EMBEDDING_VERSION:
        raise UnsupportedModelError(f"unknown embedding container version {version}")
    count = r.u32()
    out = {}
    shape = None
    for _ in range(count):
        name = r.utf8()
        gh, gw, dim = r.u16(), r.u16(), r.u16()
        values = r.f32_array()
        if values.size != gh * gw * dim:
            raise DimensionMismatchError(
                f"embedding {name!r}: expected {gh * gw * dim} values, found {values.size}"
            )
        if shape is None:
            shape = (gh, gw, dim)
        elif (gh, gw, dim) != shape:
            raise DimensionMismatchError(
                f"embedding {name!r} has shape {(gh, gw, dim)}, expected {shape}"
            )
        out[name] = values.reshape(gh, gw, dim)
    r.expect_end()
    return out
