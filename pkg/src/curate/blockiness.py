"""Blocking-artifact measure from subband DCT coefficient variations.

An image is tiled into non-overlapping 8x8 patches and each patch is
transformed by an orthonormal 2-D DCT-II.  For every interior patch the
"variation" of coefficient (i, j) is the population standard deviation of
that coefficient over the patch and its four grid neighbors; averaging
over interior patches gives an 8x8 field of mean variations.  The measure
compares this field between the aligned grid and a grid shifted by 4 rows
and 4 columns: compression snaps the 8x8 grid to block boundaries, so the
two fields diverge on compressed images and agree on clean ones.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .errors import ImageTooSmallError
from .ingest import decode_image, jpeg_recompress, luma

PATCH = 8
CROP_SHIFT = 4

# variation_field needs a 3x3 patch grid for one interior patch;
# blockiness also crops 4 rows/columns and measures the remainder.
MIN_SIDE_VARIATION = 3 * PATCH
MIN_SIDE_BLOCKINESS = 3 * PATCH + CROP_SHIFT


def dct8x8(patch: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of one 8x8 block.

    The (0, 0) output is the DC term, equal to the sample sum / 8.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != (PATCH, PATCH):
        raise ValueError(f"expected {PATCH}x{PATCH} patch, got shape {patch.shape}")
    return scipy.fft.dctn(patch, type=2, norm="ortho")


def _patch_coefficients(image: np.ndarray) -> np.ndarray:
    """DCT-II coefficients of every full 8x8 patch, shape (ph, pw, 8, 8).

    Remainder rows/columns that do not fill a patch are truncated, not
    padded: padding would inject artificial block edges.
    """
    h, w = image.shape
    ph, pw = h // PATCH, w // PATCH
    blocks = (
        image[: ph * PATCH, : pw * PATCH]
        .reshape(ph, PATCH, pw, PATCH)
        .transpose(0, 2, 1, 3)
    )
    return scipy.fft.dctn(blocks, type=2, norm="ortho", axes=(-2, -1))


def variation_field(image: np.ndarray) -> np.ndarray:
    """Mean per-coefficient variation over interior patches, shape (8, 8).

    The variation of coefficient (i, j) at a patch is the population
    standard deviation of the 5 values at {self, up, down, left, right};
    only interior patches (all four neighbors present) contribute.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected 2-D luma plane, got shape {image.shape}")
    h, w = image.shape
    if h < MIN_SIDE_VARIATION or w < MIN_SIDE_VARIATION:
        raise ImageTooSmallError(
            f"image {w}x{h} too small for variation field "
            f"(needs at least {MIN_SIDE_VARIATION}x{MIN_SIDE_VARIATION})"
        )
    coeffs = _patch_coefficients(image)
    neighborhood = np.stack(
        [
            coeffs[1:-1, 1:-1],
            coeffs[:-2, 1:-1],
            coeffs[2:, 1:-1],
            coeffs[1:-1, :-2],
            coeffs[1:-1, 2:],
        ],
        axis=0,
    )
    return neighborhood.std(axis=0).mean(axis=(0, 1))


def blockiness(image: np.ndarray) -> float:
    """Blocking-artifact measure of a luma plane.

    Sums |(Vc - V) / V| over the 8x8 coefficient grid, where V is the
    variation field of the image and Vc that of the image with its first
    4 rows and 4 columns removed; entries with V = 0 contribute 0.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected 2-D luma plane, got shape {image.shape}")
    h, w = image.shape
    if h < MIN_SIDE_BLOCKINESS or w < MIN_SIDE_BLOCKINESS:
        raise ImageTooSmallError(
            f"image {w}x{h} too small for blockiness "
            f"(needs at least {MIN_SIDE_BLOCKINESS}x{MIN_SIDE_BLOCKINESS})"
        )
    full = variation_field(image)
    crop = variation_field(image[CROP_SHIFT:, CROP_SHIFT:])
    diff = np.abs(crop - full)
    ratio = np.divide(diff, full, out=np.zeros_like(diff), where=full > 0)
    return float(ratio.sum())


def measure_file(path, recompress_q: float | None = None) -> float:
    """Blockiness of an image file, optionally recompressed first.

    recompress_q in (0, 1] round-trips the decoded image through JPEG at
    that quality before measurement, normalizing away container and codec
    differences between sources.
    """
    rgb = decode_image(path)
    if recompress_q is not None:
        rgb = jpeg_recompress(rgb, recompress_q)
    return blockiness(luma(rgb))
