import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sketchloom.dataset import (
    DatasetManifest,
    DatasetTooSmallError,
    SketchParams,
    average_hash,
    build_manifest,
    dedup,
    generate_synthetic_corpus,
    hamming,
    sketchify,
    train_count,
    validate_background,
)
from sketchloom.image import decode_image, quantize, save_image, to_grayscale
from sketchloom.rng import SplitMix64
from sketchloom.dataset import synthetic_garment


def ahash_oracle(img: np.ndarray) -> int:
    """Block-mean hash for sides divisible by 8, written independently."""
    g = 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]
    h, w = g.shape
    blocks = g.reshape(8, h // 8, 8, w // 8).mean(axis=(1, 3))
    bits = blocks.ravel() > blocks.mean()
    return sum(1 << i for i, b in enumerate(bits) if b)


def garment(seed, size=64):
    return synthetic_garment(size, SplitMix64.from_key(seed, "test"))


def blocky(seed, size=32):
    """Photo whose 8x8 block layout (and so its average hash) varies with the seed."""
    blocks = np.random.default_rng(seed).random((8, 8, 3))
    return np.kron(blocks, np.ones((size // 8, size // 8, 1)))


# ---------------------------------------------------------------- hashing and dedup


def test_average_hash_matches_oracle():
    for seed in range(5):
        img = garment(seed)
        assert average_hash(img) == ahash_oracle(img)


def test_dedup_exact_copies():
    out = dedup([("b.png", "h1", 0), ("a.png", "h1", 0)])
    assert out == [("a.png", "h1", 0)]


def test_dedup_brightness_shift():
    img = garment(1)
    shifted = np.clip(img * 1.01, 0, 1)
    ha, hb = ahash_oracle(img), ahash_oracle(shifted)
    assert hamming(ha, hb) <= 5
    out = dedup([("x.png", "c1", average_hash(img)), ("y.png", "c2", average_hash(shifted))])
    assert [e[0] for e in out] == ["x.png"]


def test_dedup_unrelated_kept_in_order():
    a, b = blocky(2, 64), blocky(3, 64)
    entries = [("z.png", "c1", average_hash(a)), ("m.png", "c2", average_hash(b))]
    assert hamming(entries[0][2], entries[1][2]) > 5
    assert dedup(entries) == entries


# ---------------------------------------------------------------- sketchify


@pytest.mark.parametrize("value,expected", [(1.0, 1.0), (0.0, 0.0), (0.5, 1.0)])
def test_sketchify_flat_images(value, expected):
    out = sketchify(np.full((24, 24, 3), value))
    assert out.shape == (24, 24, 1)
    assert np.allclose(out, expected, atol=1e-5)


def test_sketchify_keeps_edges_dark():
    img = np.ones((40, 40, 3))
    img[:, 20:] = 0.0
    out = sketchify(img)[:, :, 0]
    assert out[:, :15].min() > 0.99 and out[:, 21:].max() < 1e-6


@given(arrays(np.float64, (12, 12, 3), elements=st.floats(0, 1)))
@settings(max_examples=30)
def test_sketchify_brightens(photo):
    out = sketchify(photo, SketchParams(blur_sigma=2.0, blur_radius=4))
    g = to_grayscale(photo)
    assert np.all(out >= g - 1e-12)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_sketch_params_validated():
    with pytest.raises(ValueError):
        SketchParams(blur_sigma=0)
    with pytest.raises(ValueError):
        SketchParams(dodge_epsilon=0)


# ---------------------------------------------------------------- background


def test_validate_background():
    assert validate_background(np.ones((32, 32, 3)))["passed"]
    r = validate_background(np.zeros((32, 32, 3)))
    assert r["white_fraction"] == 0.0 and not r["passed"]
    assert validate_background(garment(4), 4, 0.9)["passed"]


# ---------------------------------------------------------------- manifests


def test_train_count_rounding():
    assert train_count(500, 0.8) == 400
    assert train_count(10, 0.8) == 8
    assert train_count(200, 0.8) == 160
    assert train_count(2, 0.5) == 1
    assert train_count(5, 0.5) == 3  # half rounds up


def write_photos(d, n, size=32):
    d.mkdir()
    for i in range(n):
        save_image(blocky(100 + i, size), d / f"p{i:02d}.png")
    return d


def test_build_manifest_ten_photos(tmp_path):
    photos = write_photos(tmp_path / "photos", 10)
    m = build_manifest(photos, 0.8, seed=1, out_dir=tmp_path / "ds")
    assert len(m.train) == 8 and len(m.test) == 2
    ids = [s.id for s in m.samples]
    assert len(set(ids)) == len(ids)
    assert len({s.content_hash for s in m.samples}) == len(ids)
    assert {s.id for s in m.train}.isdisjoint({s.id for s in m.test})
    doc = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert doc["version"] == 1 and set(doc["samples"][0]) == {"id", "sketch_path", "photo_path", "split", "content_hash"}


def test_build_manifest_is_pure(tmp_path):
    photos = write_photos(tmp_path / "photos", 6)
    build_manifest(photos, 0.5, seed=3, out_dir=tmp_path / "a")
    build_manifest(photos, 0.5, seed=3, out_dir=tmp_path / "b")
    for name in ("manifest.json", "sketches/p00.png", "photos/p05.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_build_manifest_skips_and_dedups(tmp_path):
    photos = write_photos(tmp_path / "photos", 4)
    (photos / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\nnope")
    (photos / "zz_copy.png").write_bytes((photos / "p01.png").read_bytes())
    m = build_manifest(photos, 0.5, out_dir=tmp_path / "ds")
    assert len(m.samples) == 4
    assert [s["file"] for s in m.metadata["skipped"]] == ["broken.png"]
    assert m.metadata["duplicates_removed"] == ["zz_copy.png"]


def test_build_manifest_too_small(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetTooSmallError):
        build_manifest(tmp_path / "empty")
    one = write_photos(tmp_path / "one", 1)
    with pytest.raises(DatasetTooSmallError):
        build_manifest(one)


def test_build_manifest_records_dirty_background(tmp_path):
    photos = tmp_path / "photos"
    photos.mkdir()
    for i in range(3):
        save_image(garment(i, 32), photos / f"g{i}.png")
    save_image(blocky(9), photos / "dark.png")
    m = build_manifest(photos, 0.5, out_dir=tmp_path / "ds", near_dup_threshold=-1)
    assert list(m.metadata["background_warnings"]) == ["dark"]


def test_garments_collide_under_average_hash(tmp_path):
    # the hash sees mostly the silhouette; a negative threshold keeps only exact dedup
    photos = tmp_path / "photos"
    photos.mkdir()
    for i in range(6):
        save_image(garment(i, 32), photos / f"g{i}.png")
    assert len(build_manifest(photos, 0.5, out_dir=tmp_path / "a", near_dup_threshold=-1).samples) == 6
    entries = [(f"g{i}.png", str(i), average_hash(garment(i, 32))) for i in range(6)]
    assert len(dedup(entries)) < 6


def test_sketches_match_photos_bitwise(tiny_corpus):
    for s in tiny_corpus.samples:
        photo = decode_image(tiny_corpus.resolve(s.photo_path).read_bytes())
        sketch = decode_image(tiny_corpus.resolve(s.sketch_path).read_bytes())
        assert sketch.shape[:2] == photo.shape[:2] and sketch.shape[2] == 1 and photo.shape[2] == 3
        assert np.array_equal(sketch, quantize(sketchify(photo)))


def test_manifest_round_trip(tiny_corpus):
    again = DatasetManifest.load(tiny_corpus.root)
    assert again.samples == tiny_corpus.samples
    assert again.seed == tiny_corpus.seed


# ---------------------------------------------------------------- synthetic corpus


def test_synthetic_corpus_deterministic(tmp_path):
    a = generate_synthetic_corpus(200, 64, 7, tmp_path / "a")
    b = generate_synthetic_corpus(200, 64, 7, tmp_path / "b")
    assert len(a.train) == 160 and len(a.test) == 40
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 401
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_synthetic_minimal(tmp_path):
    m = generate_synthetic_corpus(2, 32, 0, tmp_path, split_ratio=0.5)
    assert len(m.train) == 1 and len(m.test) == 1
    with pytest.raises(DatasetTooSmallError):
        generate_synthetic_corpus(1, 32, 0, tmp_path / "x")
    with pytest.raises(ValueError):
        generate_synthetic_corpus(4, 16, 0, tmp_path / "y")


def test_synthetic_background_white(tiny_corpus):
    for s in tiny_corpus.samples:
        photo = decode_image(tiny_corpus.resolve(s.photo_path).read_bytes())
        assert np.all(photo[[0, 0, -1, -1], [0, -1, 0, -1]] == 1.0)
        assert validate_background(photo, 4, 0.9)["passed"]
        assert photo.std() > 0.05  # a garment is actually drawn
