"""Contrast enhancement: percentile stretching, global histogram
equalization and tiled (CLAHE-style) adaptive equalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EnhanceError
from .ingest import RawImage

DEFAULT_CLIP = 0.01
DEFAULT_TILES = (8, 8)


@dataclass(frozen=True)
class StretchLimits:
    p_low: float = 2.0
    p_high: float = 98.0
    a: int = 0
    b: int = 255

    def __post_init__(self):
        if not (0.0 <= self.p_low < self.p_high <= 100.0):
            raise ConfigError(f"invalid percentiles ({self.p_low}, {self.p_high})")
        if not (0 <= self.a < self.b <= 255):
            raise ConfigError(f"invalid output range ({self.a}, {self.b})")


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def contrast_stretch(image: RawImage, limits: StretchLimits = StretchLimits()) -> RawImage:
    px = image.pixels.astype(np.float64)
    c, d = np.percentile(px, [limits.p_low, limits.p_high])
    if d <= c:
        return RawImage(np.full(px.shape, limits.a, dtype=np.uint8))
    # multiply before dividing so exact halves (e.g. 127.5) survive for rounding
    out = (px - c) * (limits.b - limits.a) / (d - c) + limits.a
    out = np.clip(_round_half_up(out), limits.a, limits.b)
    return RawImage(out.astype(np.uint8))


def _check_levels(pixels: np.ndarray, levels: int) -> None:
    if levels < 2 or levels > 256:
        raise ConfigError(f"intensity levels must lie in [2, 256], got {levels}")
    if pixels.size and int(pixels.max()) >= levels:
        raise EnhanceError(f"intensity {int(pixels.max())} out of range for L={levels}")


def equalization_mapping(pixels: np.ndarray, levels: int = 256) -> np.ndarray:
    """T(k) = floor((L-1) * cdf(k)) for k in 0..L-1, computed in integers."""
    counts = np.bincount(pixels.ravel(), minlength=levels).astype(np.int64)
    cum = np.cumsum(counts)
    return ((levels - 1) * cum) // cum[-1]


def hist_equalize(image: RawImage, levels: int = 256) -> RawImage:
    px = image.pixels
    _check_levels(px, levels)
    mapping = equalization_mapping(px, levels)
    return RawImage(mapping[px].astype(np.uint8))


def _clipped_mapping(tile: np.ndarray, levels: int, clip_limit: float | None) -> np.ndarray:
    if clip_limit is None:
        return equalization_mapping(tile, levels).astype(np.float64)
    counts = np.bincount(tile.ravel(), minlength=levels).astype(np.float64)
    cap = clip_limit * tile.size
    excess = np.clip(counts - cap, 0.0, None).sum()
    counts = np.minimum(counts, cap) + excess / levels
    cdf = np.cumsum(counts) / counts.sum()
    return np.floor((levels - 1) * cdf + 1e-9)


def _tile_edges(n: int, parts: int) -> np.ndarray:
    return np.round(np.linspace(0, n, parts + 1)).astype(np.int64)


def _interp_axis(n: int, centers: np.ndarray):
    """Neighbouring tile-centre indices and weights along one axis."""
    pos = np.arange(n, dtype=np.float64)
    hi = np.searchsorted(centers, pos, side="right")
    lo = np.clip(hi - 1, 0, len(centers) - 1)
    hi = np.clip(hi, 0, len(centers) - 1)
    span = centers[hi] - centers[lo]
    w = np.where(span > 0, (pos - centers[lo]) / np.where(span > 0, span, 1.0), 0.0)
    return lo, hi, np.clip(w, 0.0, 1.0)


def adaptive_equalize(
    image: RawImage,
    tile_grid: tuple[int, int] = DEFAULT_TILES,
    clip_limit: float | None = DEFAULT_CLIP,
    levels: int = 256,
) -> RawImage:
    """Tiled histogram equalization with bilinear blending of tile mappings.

    ``clip_limit`` is a fraction of the tile's pixel count; bins above it
    are truncated and the excess spread evenly over all levels. ``None``
    disables clipping.
    """
    px = image.pixels
    _check_levels(px, levels)
    n_rows, n_cols = (int(v) for v in tile_grid)
    if n_rows < 1 or n_cols < 1:
        raise EnhanceError(f"tile grid must be at least 1x1, got {tile_grid}")
    if clip_limit is not None and clip_limit <= 0:
        raise ConfigError("clip_limit must be positive or None")
    h, w = px.shape
    row_edges, col_edges = _tile_edges(h, n_rows), _tile_edges(w, n_cols)
    if np.diff(row_edges).min() < 2 or np.diff(col_edges).min() < 2:
        raise EnhanceError(f"tiles smaller than 2x2 for a {h}x{w} image and grid {tile_grid}")

    maps = np.empty((n_rows, n_cols, levels))
    for i in range(n_rows):
        for j in range(n_cols):
            tile = px[row_edges[i]:row_edges[i + 1], col_edges[j]:col_edges[j + 1]]
            maps[i, j] = _clipped_mapping(tile, levels, clip_limit)

    row_centers = (row_edges[:-1] + row_edges[1:] - 1) / 2.0
    col_centers = (col_edges[:-1] + col_edges[1:] - 1) / 2.0
    r0, r1, wr = _interp_axis(h, row_centers)
    c0, c1, wc = _interp_axis(w, col_centers)
    R0, C0 = np.meshgrid(r0, c0, indexing="ij")
    R1, C1 = np.meshgrid(r1, c1, indexing="ij")
    WR, WC = np.meshgrid(wr, wc, indexing="ij")
    k = px.astype(np.int64)
    out = (
        (1 - WR) * (1 - WC) * maps[R0, C0, k]
        + (1 - WR) * WC * maps[R0, C1, k]
        + WR * (1 - WC) * maps[R1, C0, k]
        + WR * WC * maps[R1, C1, k]
    )
    out = np.clip(_round_half_up(out), 0, levels - 1)
    return RawImage(out.astype(np.uint8))


def apply_enhancement(image: RawImage, method: str = "none", **options) -> RawImage:
    """Dispatch by CLI name: ``none``, ``stretch``, ``histeq`` or ``adapthist``."""
    if method == "none":
        return image
    if method == "stretch":
        return contrast_stretch(image, options.get("limits", StretchLimits()))
    if method == "histeq":
        return hist_equalize(image)
    if method == "adapthist":
        return adaptive_equalize(
            image,
            tile_grid=options.get("tile_grid", DEFAULT_TILES),
            clip_limit=options.get("clip_limit", DEFAULT_CLIP),
        )
    raise ConfigError(f"unknown enhancement {method!r}")
