"""Non-differentiable reference JPEG (lossy stages only).

This is the oracle every differentiable variant is measured against. All
discretizations are the true integer ones: integer quality scaling, floored
and clipped tables, rounding of the quantized coefficients and a final clamp
and round of the pixels. Entropy coding is lossless and therefore omitted.
"""

from __future__ import annotations

import numpy as np

from . import stages
from .core import ColorParams, QuantTables, check_image, default_color_params, standard_tables
from .ops import true_round


def _check_quality(quality) -> int:
    if int(quality) != quality or not 1 <= quality <= 99:
        raise ValueError(f"quality must be an integer in [1, 99], got {quality}")
    return int(quality)


def scale_factor_int(quality: int) -> int:
    """Integer scale factor of the libjpeg quality mapping."""
    q = _check_quality(quality)
    return 5000 // q if q < 50 else 200 - 2 * q


def scale_qt_int(qt: QuantTables, s: int) -> QuantTables:
    """Scale both tables by ``s`` percent with integer semantics, clamp to [1, 255]."""
    if s < 0:
        raise ValueError("scale factor must be non-negative")
    return QuantTables(_scale_table(qt.luma, float(s)), _scale_table(qt.chroma, float(s)))


def _scale_table(table: np.ndarray, s: float) -> np.ndarray:
    # identical float ops to the straight-through path; exact for integer inputs
    return np.clip(np.floor((s * table + 50.0) / 100.0), 1.0, 255.0)


def _quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    coeffs = stages.dct_blocks(stages.blockify(plane))
    deq = true_round(coeffs / table) * table
    return stages.unblockify(stages.idct_blocks(deq), h, w)


def reference_float(
    img,
    quality: int,
    qt: QuantTables | None = None,
    cp: ColorParams | None = None,
    subsampling: str = "s420",
) -> np.ndarray:
    """Reference round trip up to (and including) the output clamp, before rounding."""
    img = check_image(img, channels=3)
    qt = standard_tables() if qt is None else qt
    cp = default_color_params() if cp is None else cp
    s = float(scale_factor_int(quality))
    luma_t = _scale_table(qt.luma, s)
    chroma_t = _scale_table(qt.chroma, s)

    _, h, w = img.shape
    x = stages.pad_edge(img)
    ycc = np.clip(stages.color_forward(cp.forward_matrix, cp.forward_offset, x), 0.0, 255.0)

    planes = [_quantize_plane(ycc[0], luma_t)]
    for c in (1, 2):
        if subsampling == "s420":
            low = _quantize_plane(stages.downsample(ycc[c]), chroma_t)
            planes.append(stages.upsample(low))
        else:
            planes.append(_quantize_plane(ycc[c], chroma_t))
    rec = stages.color_inverse(cp.forward_matrix, cp.forward_offset, np.stack(planes))
    return np.clip(rec[:, :h, :w], 0.0, 255.0)


def reference_encode_decode(
    img,
    quality: int,
    qt: QuantTables | None = None,
    cp: ColorParams | None = None,
    subsampling: str = "s420",
) -> np.ndarray:
    """JPEG-code an RGB (3, H, W) image; returns integer-valued float64 pixels."""
    return true_round(reference_float(img, quality, qt, cp, subsampling))
