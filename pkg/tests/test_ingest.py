"""Decoding, luma conversion, JPEG recompression, and directory scans."""

import os

import numpy as np
import pytest
from PIL import Image

import oracles
from curate.blockiness import blockiness
from curate.errors import DecodeError, ManifestError
from curate.ingest import (
    DropReason,
    ImageRecord,
    decode_image,
    decode_luma,
    jpeg_recompress,
    luma,
    scan_directory,
)
from synth import clean_image


def _save(path, arr, **kwargs):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, **kwargs)
    return path


def test_decode_png_is_lossless(tmp_path):
    rng = np.random.default_rng(7)
    arr = rng.integers(0, 256, (40, 56, 3), dtype=np.uint8)
    path = _save(tmp_path / "a.png", arr)
    decoded = decode_image(path)
    assert decoded.dtype == np.uint8
    assert decoded.shape == (40, 56, 3)
    assert np.array_equal(decoded, arr)


def test_decode_grayscale_promotes_to_rgb(tmp_path):
    arr = np.full((32, 32), 128, dtype=np.uint8)
    path = _save(tmp_path / "g.png", arr)
    decoded = decode_image(path)
    assert decoded.shape == (32, 32, 3)
    assert np.all(decoded == 128)


def test_decode_rejects_corrupt_file(tmp_path):
    path = tmp_path / "bad.jpg"
    path.write_bytes(b"definitely not a jpeg")
    with pytest.raises(DecodeError) as excinfo:
        decode_image(path)
    assert "bad.jpg" in str(excinfo.value)


def test_decode_rejects_missing_file(tmp_path):
    with pytest.raises(DecodeError):
        decode_image(tmp_path / "nowhere.png")


def test_decode_rejects_other_formats(tmp_path):
    arr = np.zeros((30, 30, 3), dtype=np.uint8)
    path = _save(tmp_path / "a.gif", arr, format="GIF")
    with pytest.raises(DecodeError) as excinfo:
        decode_image(path)
    assert "format" in str(excinfo.value)


def test_decode_rejects_high_bit_depth(tmp_path):
    img = Image.new("I;16", (30, 30), 1000)
    path = tmp_path / "deep.png"
    img.save(path)
    with pytest.raises(DecodeError):
        decode_image(path)


def test_luma_red_pixel():
    red = np.array([[[255, 0, 0]]], dtype=np.uint8)
    assert abs(luma(red)[0, 0] - 76.245) < 1e-9


def test_luma_grayscale_passthrough():
    arr = np.arange(12, dtype=np.float64).reshape(3, 4)
    out = luma(arr)
    assert out.shape == (3, 4)
    assert np.array_equal(out, arr)


def test_luma_matches_per_pixel_reference():
    rng = np.random.default_rng(11)
    arr = rng.integers(0, 256, (9, 13, 3), dtype=np.uint8)
    assert np.max(np.abs(luma(arr) - oracles.luma_reference(arr))) < 1e-12


def test_luma_rejects_bad_shapes():
    with pytest.raises(ValueError):
        luma(np.zeros((4, 4, 4)))
    with pytest.raises(ValueError):
        luma(np.zeros(16))


def test_decode_luma_gray_identity(tmp_path):
    arr = np.full((32, 32), 128, dtype=np.uint8)
    path = _save(tmp_path / "g.png", arr)
    out = decode_luma(path)
    assert np.max(np.abs(out - 128.0)) < 1e-9


def test_recompress_preserves_dimensions():
    rng = np.random.default_rng(3)
    arr = rng.integers(0, 256, (41, 67, 3), dtype=np.uint8)
    for q in (0.05, 0.5, 1.0):
        assert jpeg_recompress(arr, q).shape == arr.shape


def test_recompress_rejects_bad_quality():
    arr = np.zeros((16, 16, 3), dtype=np.uint8)
    for q in (0.0, -0.25, 1.0001):
        with pytest.raises(ValueError):
            jpeg_recompress(arr, q)


def test_recompress_near_lossless_at_top_quality():
    x = np.linspace(40, 215, 64)
    gradient = np.clip(x[None, :] + x[:, None] * 0.5, 0, 255).astype(np.uint8)
    smooth = np.stack([gradient] * 3, axis=-1)
    out = jpeg_recompress(smooth, 1.0)
    mean_abs = np.mean(np.abs(out.astype(np.float64) - smooth.astype(np.float64)))
    assert mean_abs < 1.0


def test_recompress_is_deterministic():
    rng = np.random.default_rng(5)
    arr = rng.integers(0, 256, (48, 48, 3), dtype=np.uint8)
    assert np.array_equal(jpeg_recompress(arr, 0.6), jpeg_recompress(arr, 0.6))


def test_heavy_recompression_raises_blockiness():
    rgb = clean_image(np.random.default_rng(21), size=128)
    before = blockiness(luma(rgb))
    after = blockiness(luma(jpeg_recompress(rgb, 0.5)))
    assert after > before


def test_scan_min_side_is_inclusive(tmp_path):
    _save(tmp_path / "a.png", np.zeros((300, 300, 3), dtype=np.uint8))
    _save(tmp_path / "b.png", np.zeros((500, 200, 3), dtype=np.uint8))
    _save(tmp_path / "c.png", np.zeros((256, 256, 3), dtype=np.uint8))
    records = {r.path: r for r in scan_directory(tmp_path, min_side=256)}
    assert records["a.png"].kept and records["c.png"].kept
    assert not records["b.png"].kept
    assert records["b.png"].drop_reason == DropReason.TOO_SMALL.value
    assert records["b.png"].width == 200 and records["b.png"].height == 500


def test_scan_empty_directory(tmp_path):
    assert scan_directory(tmp_path, min_side=256) == []


def test_scan_missing_root_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        scan_directory(tmp_path / "absent", min_side=256)


def test_scan_records_decode_errors(tmp_path):
    rng = np.random.default_rng(13)
    for i in range(8):
        _save(tmp_path / f"ok_{i}.png", rng.integers(0, 256, (64, 64, 3), dtype=np.uint8))
    (tmp_path / "bad_1.jpg").write_bytes(b"junk")
    (tmp_path / "bad_2.png").write_bytes(b"more junk")

    records = scan_directory(tmp_path, min_side=32)

    # Oracle: an independent directory walk with the same extension filter.
    expected = sorted(
        name for name in os.listdir(tmp_path)
        if os.path.splitext(name)[1] in {".png", ".jpg"}
    )
    assert [r.path for r in records] == expected
    broken = {r.path for r in records if r.drop_reason == DropReason.DECODE_ERROR.value}
    assert broken == {"bad_1.jpg", "bad_2.png"}
    assert sum(r.kept for r in records) == 8


def test_scan_sorts_nested_paths_posix_style(tmp_path):
    arr = np.zeros((40, 40, 3), dtype=np.uint8)
    for rel in ("z.png", "a/q.png", "a/b/p.png", "b.png"):
        _save(tmp_path / rel, arr)
    records = scan_directory(tmp_path, min_side=16)
    paths = [r.path for r in records]
    assert paths == sorted(paths)
    assert paths == ["a/b/p.png", "a/q.png", "b.png", "z.png"]


def test_scan_ignores_non_image_files(tmp_path):
    _save(tmp_path / "a.png", np.zeros((40, 40, 3), dtype=np.uint8))
    (tmp_path / "notes.txt").write_text("not an image")
    records = scan_directory(tmp_path, min_side=16)
    assert [r.path for r in records] == ["a.png"]


def test_record_rejects_inconsistent_states():
    with pytest.raises(ManifestError):
        ImageRecord(path="x.png", kept=True, drop_reason=DropReason.TOO_SMALL.value)
    with pytest.raises(ManifestError):
        ImageRecord(path="x.png", kept=False)
    with pytest.raises(ManifestError):
        ImageRecord(path="x.png", drop_reason="mystery")
    with pytest.raises(ManifestError):
        ImageRecord(path="x.png", width=10, height=10, pixels=99)


def test_record_dict_roundtrip_and_omissions():
    kept = ImageRecord(path="a.png", width=64, height=32, pixels=2048, blockiness=1.5)
    data = kept.to_dict()
    assert data == {
        "path": "a.png", "width": 64, "height": 32, "pixels": 2048,
        "blockiness": 1.5, "kept": True,
    }
    assert "region_count" not in data and "drop_reason" not in data
    assert ImageRecord.from_dict(data) == kept

    dropped = ImageRecord(path="b.png", kept=False, drop_reason=DropReason.TOO_SMALL.value)
    data = dropped.to_dict()
    assert data == {"path": "b.png", "kept": False, "drop_reason": "too_small"}
    assert ImageRecord.from_dict(data) == dropped


def test_record_from_dict_ignores_unknown_keys():
    rec = ImageRecord.from_dict({"path": "a.png", "kept": True, "comment": "extra"})
    assert rec.path == "a.png"
