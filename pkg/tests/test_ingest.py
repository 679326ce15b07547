import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from qvision.errors import ConfigError, IngestError, ShapeError
from qvision.ingest import (
    Dataset,
    LabeledSample,
    RawImage,
    SyntheticConfig,
    flatten_dataset,
    generate_synthetic,
    load_gdxray,
    minmax_scale,
    read_png,
    resize_bilinear,
    resize_flatten,
    standardize_apply,
    standardize_fit,
    write_png,
)
from qvision.trees import tree_fit


def _write_series(root, series, n_images, rows=None, seed=0):
    d = root / series
    d.mkdir(parents=True)
    rng = np.random.default_rng(seed)
    for i in range(1, n_images + 1):
        write_png(RawImage(rng.integers(0, 256, (6, 7), dtype=np.uint8)), d / f"{series}_{i:04d}.png")
    if rows is not None:
        (d / "ground_truth.txt").write_text("\n".join(rows) + ("\n" if rows else ""))
    return d


@pytest.fixture
def gdx(tmp_path):
    # 2 series, 5 images, boxes on C0001 image 2 (twice) and C0002 image 1
    _write_series(tmp_path, "C0001", 3, ["2 10 20 30 40", "", "2 11 21 31 41"])
    _write_series(tmp_path, "C0002", 2, ["1 0 5 0 5"], seed=1)
    return tmp_path


# -- GDXray loading ----------------------------------------------------------


def test_load_fixture_counts(gdx):
    ds = load_gdxray(gdx)
    assert len(ds) == 5
    assert int(np.sum(ds.labels == 1)) == 2
    assert [s.image_id for s in ds] == ["C0001_0001", "C0001_0002", "C0001_0003", "C0002_0001", "C0002_0002"]
    assert ds.labels.tolist() == [-1, 1, -1, 1, -1]


def test_series_without_annotation_is_negative(tmp_path):
    _write_series(tmp_path, "C0003", 3)
    assert load_gdxray(tmp_path).labels.tolist() == [-1, -1, -1]


def test_empty_annotation_file_is_negative(tmp_path):
    _write_series(tmp_path, "C0004", 2, [])
    assert load_gdxray(tmp_path).labels.tolist() == [-1, -1]


def test_series_filter(gdx):
    ds = load_gdxray(gdx, series_filter=["C0002"])
    assert {s.series_id for s in ds} == {"C0002"}
    assert len(ds) == 2


def test_malformed_annotation_names_line(tmp_path):
    _write_series(tmp_path, "C0005", 1, ["1 2 3 4 5", "1 2 3"])
    with pytest.raises(IngestError, match=r"ground_truth.txt:2"):
        load_gdxray(tmp_path)


def test_corrupt_image_names_file(tmp_path):
    d = _write_series(tmp_path, "C0006", 1)
    (d / "C0006_0002.png").write_bytes(b"not a png")
    with pytest.raises(IngestError, match="C0006_0002.png"):
        load_gdxray(tmp_path)


def test_missing_root(tmp_path):
    with pytest.raises(IngestError):
        load_gdxray(tmp_path / "absent")


def test_labels_independent_of_listing_order(gdx, monkeypatch):
    import os

    expected = load_gdxray(gdx).labels.tolist()
    real = os.listdir
    monkeypatch.setattr(os, "listdir", lambda p: list(reversed(real(p))))
    assert load_gdxray(gdx).labels.tolist() == expected


def test_png_roundtrip(tmp_path, rng):
    img = RawImage(rng.integers(0, 256, (5, 9), dtype=np.uint8))
    write_png(img, tmp_path / "a.png")
    assert np.array_equal(read_png(tmp_path / "a.png").pixels, img.pixels)


def test_raw_image_validation():
    with pytest.raises(ShapeError):
        RawImage(np.full((2, 2), 300))
    with pytest.raises(ShapeError):
        RawImage(np.zeros((2, 2, 3), dtype=np.uint8))
    img = RawImage(np.array([[0, 255]]))
    assert img.pixels.dtype == np.uint8 and (img.height, img.width) == (1, 2)


def test_labeled_sample_label_must_be_pm1():
    with pytest.raises(ValueError):
        LabeledSample(RawImage(np.zeros((2, 2), dtype=np.uint8)), 0, "S", "S_1")


# -- resizing ----------------------------------------------------------------


def test_resize_identity(rng):
    px = rng.integers(0, 256, (320, 428), dtype=np.uint8)
    assert np.array_equal(resize_flatten(RawImage(px)), px.ravel().astype(np.float64))


def test_resize_corners_preserved():
    px = np.array([[0, 255], [0, 255]], dtype=np.uint8)
    out = resize_bilinear(px, (5, 7))
    assert (out[0, 0], out[0, -1], out[-1, 0], out[-1, -1]) == (0, 255, 0, 255)
    assert np.allclose(out[:, 3], 127.5)


def test_resize_matches_naive_bilinear(rng):
    src = rng.uniform(0, 255, (4, 6))
    out = resize_bilinear(src, (7, 5))
    for i in range(7):
        for j in range(5):
            y, x = i * 3 / 6, j * 5 / 4
            y0, x0 = min(int(y), 2), min(int(x), 4)
            fy, fx = y - y0, x - x0
            v = (src[y0, x0] * (1 - fy) * (1 - fx) + src[y0 + 1, x0] * fy * (1 - fx)
                 + src[y0, x0 + 1] * (1 - fy) * fx + src[y0 + 1, x0 + 1] * fy * fx)
            assert out[i, j] == pytest.approx(v, abs=1e-9)


@given(st.integers(1, 40), st.integers(1, 40))
def test_resize_flatten_length_and_range(h, w):
    px = np.random.default_rng(h * 41 + w).integers(0, 256, (h, w), dtype=np.uint8)
    out = resize_flatten(RawImage(px), (12, 9))
    assert out.shape == (108,)
    assert out.min() >= 0 and out.max() <= 255


def test_resize_flatten_default_length():
    assert resize_flatten(RawImage(np.zeros((3, 2), dtype=np.uint8))).shape == (136960,)


def test_flatten_dataset_native_requires_same_shape():
    a = LabeledSample(RawImage(np.zeros((2, 2), dtype=np.uint8)), 1, "S", "S_1")
    b = LabeledSample(RawImage(np.zeros((3, 2), dtype=np.uint8)), -1, "S", "S_2")
    with pytest.raises(ShapeError):
        flatten_dataset(Dataset((a, b)), None)
    assert flatten_dataset(Dataset((a, b)), (2, 2)).shape == (2, 4)


# -- scaling -----------------------------------------------------------------


def test_standardize_hand_values():
    m = standardize_fit(np.array([[1.0], [2.0], [3.0]]))
    out = standardize_apply(m, np.array([[1.0], [2.0], [3.0]]))
    s = 1 / math.sqrt(2 / 3)
    assert np.allclose(out.ravel(), [-s, 0, s], atol=1e-6)


def test_standardize_constant_column_zero():
    X = np.column_stack([np.full(4, 7.0), np.arange(4.0)])
    out = standardize_apply(standardize_fit(X), X)
    assert np.all(out[:, 0] == 0)


def test_standardize_shape_mismatch():
    with pytest.raises(ShapeError):
        standardize_apply(standardize_fit(np.ones((3, 2))), np.ones((3, 3)))


@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardize_property(X):
    out = standardize_apply(standardize_fit(X), X)
    assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
    std = X.std(axis=0)
    live = std >= 1e-6 * (1 + np.abs(X).max(axis=0))
    assert np.allclose(out.std(axis=0)[live], 1.0, atol=1e-6)


def test_minmax_examples():
    out = minmax_scale(np.array([[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]]), 0, math.pi)
    assert np.allclose(out[:, 0], [0, math.pi / 2, math.pi])
    assert np.all(out[:, 1] == 0)
    with pytest.raises(ConfigError):
        minmax_scale(np.ones((2, 2)), 1.0, 1.0)


@given(arrays(np.float64, st.integers(2, 20), elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_minmax_roundtrip(col):
    lo, hi = col.min(), col.max()
    if hi - lo < 1e-3:
        return
    out = minmax_scale(col[:, None], lo, hi).ravel()
    assert np.allclose(out, col, rtol=0, atol=1e-12 * max(1.0, abs(lo), abs(hi)))


def test_minmax_clip_with_bounds():
    out = minmax_scale(np.array([[-5.0], [15.0]]), 0.0, 1.0, bounds=(np.array([0.0]), np.array([10.0])), clip=True)
    assert out.ravel().tolist() == [0.0, 1.0]


# -- synthetic data ----------------------------------------------------------


def test_synthetic_counts_and_determinism():
    cfg = SyntheticConfig(n_positive=50, n_negative=50, seed=3)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    assert len(a) == 100 and int(np.sum(a.labels == 1)) == 50
    assert all(np.array_equal(x.image.pixels, y.image.pixels) for x, y in zip(a, b))
    assert np.array_equal(a.labels, b.labels)


def test_synthetic_zero_contrast_indistinguishable():
    ds = generate_synthetic(SyntheticConfig(n_positive=40, n_negative=40, defect_contrast=0.0, seed=5))
    rng = np.random.default_rng(0)
    pos = np.stack([s.image.pixels for s in ds if s.label == 1]).ravel()
    neg = np.stack([s.image.pixels for s in ds if s.label == -1]).ravel()
    a = rng.choice(pos, 1000, replace=False).astype(float)
    b = rng.choice(neg, 1000, replace=False).astype(float)
    assert stats.ttest_ind(a, b).pvalue > 0.01


def test_synthetic_separable_at_full_contrast():
    ds = generate_synthetic(SyntheticConfig(n_positive=60, n_negative=60, defect_contrast=1.0, noise_std=0.5, seed=2))
    means = np.array([[s.image.pixels.mean()] for s in ds])
    y = ds.labels
    tree = tree_fit(means, y, max_depth=4)
    assert np.mean(tree.predict(means) == y) > 0.9


def test_synthetic_manifest_roundtrip(tmp_path):
    cfg = SyntheticConfig(n_positive=3, n_negative=4, image_size=(10, 12), seed=9)
    p = tmp_path / "m.json"
    p.write_text(json.dumps(cfg.to_manifest()))
    assert SyntheticConfig.load(p) == cfg


@pytest.mark.parametrize("kw", [{"n_positive": -1}, {"image_size": (4, 20)}, {"defect_contrast": 1.5}, {"noise_std": -1}])
def test_synthetic_config_validation(kw):
    with pytest.raises(ConfigError):
        SyntheticConfig(**kw)


def test_manifest_unknown_key():
    with pytest.raises(ConfigError):
        SyntheticConfig.from_manifest({"n_positive": 1, "bogus": 2})
