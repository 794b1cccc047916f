"""Image discovery, decoding, luma conversion, and JPEG recompression."""

from __future__ import annotations

import dataclasses
import enum
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DecodeError, ManifestError

# Extensions treated as candidate images during a scan.  Anything else is
# ignored outright rather than recorded as a failure.
IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".gif", ".bmp", ".webp", ".tif", ".tiff"}

# Formats the toolkit decodes into an 8-bit RGB array.
DECODABLE_FORMATS = {"JPEG", "PNG"}

DEFAULT_MIN_SIDE = 256

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class DropReason(str, enum.Enum):
    """Why a record was dropped; NONE means it is kept."""

    NONE = "none"
    TOO_SMALL = "too_small"
    DECODE_ERROR = "decode_error"
    BELOW_REGION_THRESHOLD = "below_region_threshold"
    ABOVE_BLOCKINESS_THRESHOLD = "above_blockiness_threshold"


_DROP_REASONS = {r.value for r in DropReason}

# Serialization order is fixed so manifests are byte-stable.
_OPTIONAL_FIELDS = ("width", "height", "pixels", "blockiness", "region_count")


@dataclass(frozen=True)
class ImageRecord:
    """One image's manifest entry.

    Numeric fields stay None until the stage that computes them has run;
    serialization omits unset fields.  kept == True requires
    drop_reason == "none".
    """

    path: str
    width: int | None = None
    height: int | None = None
    pixels: int | None = None
    blockiness: float | None = None
    region_count: int | None = None
    kept: bool = True
    drop_reason: str = DropReason.NONE.value

    def __post_init__(self) -> None:
        if self.drop_reason not in _DROP_REASONS:
            raise ManifestError(f"{self.path}: unknown drop_reason {self.drop_reason!r}")
        if self.kept and self.drop_reason != DropReason.NONE.value:
            raise ManifestError(
                f"{self.path}: kept record cannot carry drop_reason {self.drop_reason!r}"
            )
        if not self.kept and self.drop_reason == DropReason.NONE.value:
            raise ManifestError(f"{self.path}: dropped record needs a drop_reason")
        if self.width is not None and self.height is not None and self.pixels is not None:
            if self.pixels != self.width * self.height:
                raise ManifestError(
                    f"{self.path}: pixels {self.pixels} != width*height "
                    f"{self.width * self.height}"
                )

    def to_dict(self) -> dict:
        out: dict = {"path": self.path}
        for key in _OPTIONAL_FIELDS:
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        out["kept"] = self.kept
        if self.drop_reason != DropReason.NONE.value:
            out["drop_reason"] = self.drop_reason
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ImageRecord":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def decode_image(path: str | Path) -> np.ndarray:
    """Decode a JPEG or PNG file to an HxWx3 uint8 RGB array.

    Raises DecodeError for unreadable files, other formats, animations,
    and high-bit-depth modes.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format not in DECODABLE_FORMATS:
                raise DecodeError(path, f"unsupported format {img.format!r}")
            if getattr(img, "is_animated", False):
                raise DecodeError(path, "animated image")
            if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise DecodeError(path, f"unsupported bit depth (mode {img.mode!r})")
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except DecodeError:
        raise
    except (OSError, ValueError, SyntaxError) as exc:
        raise DecodeError(path, str(exc)) from exc
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DecodeError(path, f"unexpected array shape {arr.shape}")
    return arr


def luma(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma as float64: Y = 0.299 R + 0.587 G + 0.114 B.

    Kept in float; rounding to 8 bits here would bias the downstream
    frequency statistics.  2-D input passes through as grayscale.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 array, got shape {arr.shape}")
    return arr @ LUMA_WEIGHTS


def decode_luma(path: str | Path) -> np.ndarray:
    """Decode a file and return its float64 luma plane."""
    return luma(decode_image(path))


def jpeg_recompress(rgb: np.ndarray, quality: float) -> np.ndarray:
    """Round-trip an RGB array through baseline JPEG at the given quality.

    quality is a fraction in (0, 1]; the codec gets round(100 * quality).
    Chroma is subsampled 4:2:0; that choice does not touch the luma plane.
    """
    if not 0.0 < quality <= 1.0:
        raise ValueError(f"quality must be in (0, 1], got {quality}")
    q = max(1, int(round(100.0 * quality)))
    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(
        buf, format="JPEG", quality=q, subsampling=2
    )
    buf.seek(0)
    with Image.open(buf) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def scan_directory(root: str | Path, min_side: int = DEFAULT_MIN_SIDE) -> list[ImageRecord]:
    """Walk a directory tree and build one record per candidate image.

    Records are sorted by POSIX-style relative path so scans are
    deterministic.  Undecodable files are recorded with drop_reason
    decode_error, never skipped; images with min(width, height) below
    min_side are dropped as too_small (the gate keeps min_side itself).
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    paths = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    records = []
    for p in paths:
        rel = p.relative_to(root).as_posix()
        try:
            arr = decode_image(p)
        except DecodeError:
            records.append(
                ImageRecord(path=rel, kept=False, drop_reason=DropReason.DECODE_ERROR.value)
            )
            continue
        h, w = arr.shape[:2]
        rec = ImageRecord(path=rel, width=w, height=h, pixels=w * h)
        if min(w, h) < min_side:
            rec = dataclasses.replace(
                rec, kept=False, drop_reason=DropReason.TOO_SMALL.value
            )
        records.append(rec)
    return records
