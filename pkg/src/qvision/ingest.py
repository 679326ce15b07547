"""Image ingestion: GDXray-style directories, a synthetic defect generator,
resizing/flattening and feature scaling.

Images are held as 2-D ``uint8`` arrays (row-major, ``height x width``).
Feature matrices are plain ``float64`` arrays of shape ``(samples, features)``.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, IngestError, ShapeError

TARGET_SHAPE = (320, 428)
ANNOTATION_FILE = "ground_truth.txt"
STD_EPSILON = 1e-12


@dataclass(frozen=True)
class RawImage:
    """8-bit grayscale image, ``pixels`` has shape ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ShapeError(f"expected a 2-D pixel array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (np.any(px < 0) or np.any(px > 255)):
                raise ShapeError("pixel intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class LabeledSample:
    image: RawImage
    label: int
    series_id: str
    image_id: str

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ShapeError(f"label must be -1 or +1, got {self.label!r}")


@dataclass(frozen=True)
class Dataset:
    samples: tuple[LabeledSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return Dataset(tuple(self.samples[int(i)] for i in indices))

    def summary(self) -> dict:
        """Sample counts overall, per class and per series."""
        per_series: dict[str, dict[str, int]] = {}
        for s in self.samples:
            entry = per_series.setdefault(s.series_id, {"samples": 0, "positive": 0})
            entry["samples"] += 1
            entry["positive"] += int(s.label == 1)
        n_pos = int(sum(s.label == 1 for s in self.samples))
        return {
            "samples": len(self.samples),
            "positive": n_pos,
            "negative": len(self.samples) - n_pos,
            "series": per_series,
        }


# ---------------------------------------------------------------------------
# GDXray loading
# ---------------------------------------------------------------------------


def _read_annotations(path: Path) -> set[int]:
    """Return the 1-based image indices that carry at least one box."""
    indices: set[int] = set()
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestError(f"cannot read annotation file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise IngestError(
                f"{path}:{lineno}: expected 5 fields 'image_index x1 x2 y1 y2', got {len(fields)}"
            )
        try:
            values = [float(v) for v in fields]
        except ValueError as exc:
            raise IngestError(f"{path}:{lineno}: non-numeric annotation field") from exc
        index = values[0]
        if not np.all(np.isfinite(values)) or index < 1 or index != int(index):
            raise IngestError(f"{path}:{lineno}: invalid image index {fields[0]!r}")
        indices.add(int(index))
    return indices


def read_png(path: str | os.PathLike) -> RawImage:
    """Decode an 8-bit grayscale PNG."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise IngestError(f"{path}: not a PNG file")
            if img.mode != "L":
                raise IngestError(f"{path}: expected 8-bit grayscale, got mode {img.mode}")
            pixels = np.array(img, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise IngestError(f"corrupt image file {path}: {exc}") from exc
    if pixels.ndim != 2 or 0 in pixels.shape:
        raise IngestError(f"{path}: degenerate image shape {pixels.shape}")
    return RawImage(pixels)


def write_png(image: RawImage, path: str | os.PathLike) -> None:
    Image.fromarray(np.ascontiguousarray(image.pixels), mode="L").save(path, format="PNG")


def load_gdxray(
    root_path: str | os.PathLike,
    series_filter: list[str] | None = None,
    workers: int | None = None,
) -> Dataset:
    """Load a GDXray-style ``<root>/<SERIES>/<SERIES>_<NNNN>.png`` tree.

    An image is labeled +1 when its series' ``ground_truth.txt`` has at least
    one box row for its index, -1 otherwise (including when the series has
    no annotation file). Samples are ordered by series id, then image id.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise IngestError(f"not a readable directory: {root}")
    try:
        series_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    except OSError as exc:
        raise IngestError(f"cannot list {root}: {exc}") from exc
    if series_filter is not None:
        wanted = set(series_filter)
        series_dirs = [p for p in series_dirs if p.name in wanted]

    jobs: list[tuple[Path, str, str, int]] = []
    for series_dir in series_dirs:
        series = series_dir.name
        pattern = re.compile(rf"^{re.escape(series)}_(\d+)\.png$", re.IGNORECASE)
        annotation = series_dir / ANNOTATION_FILE
        boxed = _read_annotations(annotation) if annotation.is_file() else set()
        try:
            names = sorted(os.listdir(series_dir))
        except OSError as exc:
            raise IngestError(f"cannot list {series_dir}: {exc}") from exc
        for name in names:
            m = pattern.match(name)
            if m is None:
                continue
            index = int(m.group(1))
            label = 1 if index in boxed else -1
            jobs.append((series_dir / name, series, Path(name).stem, label))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        images = list(pool.map(lambda job: read_png(job[0]), jobs))
    samples = [
        LabeledSample(image=img, label=label, series_id=series, image_id=image_id)
        for img, (_, series, image_id, label) in zip(images, jobs)
    ]
    return Dataset(tuple(samples))


# ---------------------------------------------------------------------------
# Resizing and flattening
# ---------------------------------------------------------------------------


def _axis_weights(n_in: int, n_out: int):
    # corner-aligned sampling: output 0 -> input 0, output n_out-1 -> input n_in-1
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(pixels: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resampling of a 2-D array to ``shape`` (height, width)."""
    src = np.asarray(pixels, dtype=np.float64)
    h_out, w_out = shape
    if src.ndim != 2 or 0 in src.shape:
        raise IngestError(f"cannot resize degenerate image of shape {src.shape}")
    if h_out < 1 or w_out < 1:
        raise ConfigError(f"invalid target shape {shape}")
    if src.shape == (h_out, w_out):
        return src.copy()
    r0, r1, fr = _axis_weights(src.shape[0], h_out)
    c0, c1, fc = _axis_weights(src.shape[1], w_out)
    top = src[r0][:, c0] * (1 - fc) + src[r0][:, c1] * fc
    bottom = src[r1][:, c0] * (1 - fc) + src[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bottom * fr[:, None]


def resize_flatten(image: RawImage, target: tuple[int, int] = TARGET_SHAPE) -> np.ndarray:
    """Resize to ``target`` (height, width) and flatten row-major."""
    if image.height < 1 or image.width < 1:
        raise IngestError("zero-dimension image")
    return resize_bilinear(image.pixels, target).ravel()


def flatten_dataset(
    dataset: Dataset, target: tuple[int, int] | None = TARGET_SHAPE, workers: int | None = None
) -> np.ndarray:
    """Feature matrix with one flattened image per row.

    With ``target=None`` images are flattened at native size, which requires
    every image to share one shape.
    """
    if len(dataset) == 0:
        raise ShapeError("empty dataset")
    if target is None:
        shapes = {s.image.pixels.shape for s in dataset}
        if len(shapes) != 1:
            raise ShapeError(f"images differ in shape {sorted(shapes)}; a resize target is required")
        return np.stack([s.image.pixels.ravel().astype(np.float64) for s in dataset])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda s: resize_flatten(s.image, target), dataset.samples))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardizerModel:
    mean: np.ndarray
    std: np.ndarray
    epsilon: float = STD_EPSILON


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ShapeError("feature matrix contains NaN or Inf")
    return X


def standardize_fit(train, epsilon: float = STD_EPSILON) -> StandardizerModel:
    X = _as_matrix(train)
    if X.shape[0] == 0:
        raise ShapeError("cannot fit a standardizer on zero rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population (1/S)
    std = np.where(std < epsilon, 1.0, std)
    return StandardizerModel(mean=mean, std=std, epsilon=epsilon)


def standardize_apply(model: StandardizerModel, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != model.mean.shape[0]:
        raise ShapeError(f"model has {model.mean.shape[0]} features, X has {X.shape[1]}")
    return (X - model.mean) / model.std


def minmax_bounds(X) -> tuple[np.ndarray, np.ndarray]:
    X = _as_matrix(X)
    return X.min(axis=0), X.max(axis=0)


def minmax_scale(
    X,
    lo: float,
    hi: float,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
    clip: bool = False,
) -> np.ndarray:
    """Affine per-column map of ``[col_min, col_max]`` onto ``[lo, hi]``.

    ``bounds`` supplies column minima/maxima fitted elsewhere (e.g. on the
    training split); ``clip`` then keeps unseen rows inside ``[lo, hi]``.
    Constant columns map to ``lo``.
    """
    if not hi > lo:
        raise ConfigError(f"minmax_scale needs hi > lo, got lo={lo}, hi={hi}")
    X = _as_matrix(X)
    cmin, cmax = minmax_bounds(X) if bounds is None else (np.asarray(bounds[0]), np.asarray(bounds[1]))
    if cmin.shape[0] != X.shape[1]:
        raise ShapeError(f"bounds cover {cmin.shape[0]} features, X has {X.shape[1]}")
    span = cmax - cmin
    constant = span <= 0
    scale = np.where(constant, 0.0, (hi - lo) / np.where(constant, 1.0, span))
    out = (X - cmin) * scale + lo
    if clip:
        out = np.clip(out, lo, hi)
    return out


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

BACKGROUND_LEVEL = 110.0
TEMPLATE_AMPLITUDE = 25.0
TEXTURE_AMPLITUDE = 3.0
DEFECT_AMPLITUDE = 80.0


@dataclass(frozen=True)
class SyntheticConfig:
    n_positive: int = 50
    n_negative: int = 50
    image_size: tuple[int, int] = (32, 32)
    defect_contrast: float = 0.8
    noise_std: float = 4.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        if self.n_positive < 0 or self.n_negative < 0:
            raise ConfigError("sample counts must be non-negative")
        if len(self.image_size) != 2 or min(self.image_size) < 8:
            raise ConfigError(f"image_size must be at least 8x8, got {self.image_size}")
        if not 0.0 <= self.defect_contrast <= 1.0:
            raise ConfigError("defect_contrast must lie in [0, 1]")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")

    @classmethod
    def from_manifest(cls, manifest: dict) -> "SyntheticConfig":
        known = {"seed", "n_positive", "n_negative", "image_size", "defect_contrast", "noise_std"}
        unknown = set(manifest) - known - {"kind"}
        if unknown:
            raise ConfigError(f"unknown synthetic manifest keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in manifest.items() if k in known})

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SyntheticConfig":
        try:
            manifest = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise IngestError(f"manifest not found: {path}") from exc
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"unreadable manifest {path}: {exc}") from exc
        return cls.from_manifest(manifest)

    def to_manifest(self) -> dict:
        return {
            "seed": self.seed,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "image_size": list(self.image_size),
            "defect_contrast": self.defect_contrast,
            "noise_std": self.noise_std,
        }


def _smooth_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    f = gaussian_filter(rng.standard_normal(shape), sigma=sigma, mode="wrap")
    f -= f.mean()
    sd = f.std()
    return f / sd if sd > 0 else f


def _ellipse(shape, rng: np.random.Generator) -> np.ndarray:
    h, w = shape
    rows, cols = np.mgrid[0:h, 0:w]
    m = min(h, w)
    cy, cx = rng.uniform(0.15 * h, 0.85 * h), rng.uniform(0.15 * w, 0.85 * w)
    ay, ax = rng.uniform(0.08 * m, 0.18 * m, size=2)
    theta = rng.uniform(0.0, np.pi)
    dy, dx = rows - cy, cols - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    r2 = (u / ax) ** 2 + (v / ay) ** 2
    return np.clip(1.0 - r2, 0.0, None)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Desk-scale stand-in for a casting series.

    Every image shares one smooth "part" template plus its own faint texture
    and pixel noise; positive images add 1-3 bright elliptical blobs whose
    amplitude is proportional to ``defect_contrast``.
    """
    rng = np.random.default_rng(config.seed)
    shape = config.image_size
    sigma = max(shape) / 16.0
    template = BACKGROUND_LEVEL + TEMPLATE_AMPLITUDE * _smooth_field(rng, shape, sigma)

    labels = np.array([1] * config.n_positive + [-1] * config.n_negative)
    labels = labels[rng.permutation(labels.size)]
    samples = []
    for idx, label in enumerate(labels):
        img = template + TEXTURE_AMPLITUDE * _smooth_field(rng, shape, sigma)
        if label == 1:
            for _ in range(int(rng.integers(1, 4))):
                amp = DEFECT_AMPLITUDE * config.defect_contrast * rng.uniform(0.75, 1.0)
                img = img + amp * _ellipse(shape, rng)
        img = img + config.noise_std * rng.standard_normal(shape)
        pixels = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
        samples.append(
            LabeledSample(
                image=RawImage(pixels), label=int(label), series_id="SYN", image_id=f"SYN_{idx:04d}"
            )
        )
    return Dataset(tuple(samples))
