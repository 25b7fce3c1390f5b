"""Shared data model: images, quantization tables, color parameters, configs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Images are plain float64 arrays of shape (C, H, W), nominal range [0, 255].
ImageTensor = np.ndarray

LEVELS = ("A", "B", "C", "D", "E", "F")
SURROGATES = ("polynomial", "linear", "sigmoid", "tanh", "fourier")
STE_BACKWARDS = ("surrogate", "constant")
QUALITY_MAPPINGS = ("standard", "shin")
SUBSAMPLINGS = ("s420", "none")

# ITU-T T.81 Annex K, tables K.1 and K.2.
_LUMA_K1 = [
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
]
_CHROMA_K2 = [
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
]


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def check_image(img: ImageTensor, channels: Optional[int] = None) -> np.ndarray:
    """Validate a (C, H, W) image and return it as C-contiguous float64.

    Contiguity matters: BLAS may sum in a layout-dependent order, and an
    ulp of difference can move a coefficient across a rounding boundary.
    """
    arr = np.ascontiguousarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"image must have shape (C, H, W), got {arr.shape}")
    if channels is not None and arr.shape[0] != channels:
        raise ValueError(f"expected {channels} channels, got {arr.shape[0]}")
    if arr.shape[1] == 0 or arr.shape[2] == 0:
        raise ValueError("image has a zero-sized dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    return arr


@dataclass(frozen=True)
class QuantTables:
    """Luma and chroma 8x8 quantization tables."""

    luma: np.ndarray
    chroma: np.ndarray

    def __post_init__(self):
        luma = _frozen(self.luma, (8, 8))
        chroma = _frozen(self.chroma, (8, 8))
        if np.any(luma <= 0) or np.any(chroma <= 0):
            raise ValueError("quantization tables must be positive")
        object.__setattr__(self, "luma", luma)
        object.__setattr__(self, "chroma", chroma)

    def replace(self, luma=None, chroma=None) -> "QuantTables":
        return QuantTables(
            self.luma if luma is None else luma,
            self.chroma if chroma is None else chroma,
        )


def standard_tables() -> QuantTables:
    """Annex K luma and chroma tables."""
    return QuantTables(_LUMA_K1, _CHROMA_K2)


@dataclass(frozen=True)
class ColorParams:
    """Affine RGB -> YCbCr map ``ycc = forward_matrix @ rgb + forward_offset``.

    The decoder uses the exact inverse of this map; it is derived on demand
    rather than stored so the twelve forward scalars are the only parameters.
    """

    forward_matrix: np.ndarray
    forward_offset: np.ndarray

    def __post_init__(self):
        m = _frozen(self.forward_matrix, (3, 3))
        b = _frozen(self.forward_offset, (3,))
        if abs(np.linalg.det(m)) <= 1e-8:
            raise ValueError("forward_matrix must be invertible")
        object.__setattr__(self, "forward_matrix", m)
        object.__setattr__(self, "forward_offset", b)

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.forward_matrix)

    def as_vector(self) -> np.ndarray:
        """Flatten to 12 scalars: matrix row-major, then offset."""
        return np.concatenate([self.forward_matrix.ravel(), self.forward_offset])

    @classmethod
    def from_vector(cls, v) -> "ColorParams":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (12,):
            raise ValueError(f"expected 12 color parameters, got shape {v.shape}")
        return cls(v[:9].reshape(3, 3), v[9:])

    def rgb_to_ycbcr(self, rgb: np.ndarray) -> np.ndarray:
        """Apply the forward map to a (3, ...) array."""
        rgb = np.asarray(rgb, dtype=np.float64)
        flat = rgb.reshape(3, -1)
        out = self.forward_matrix @ flat + self.forward_offset[:, None]
        return out.reshape(rgb.shape)

    def ycbcr_to_rgb(self, ycc: np.ndarray) -> np.ndarray:
        ycc = np.asarray(ycc, dtype=np.float64)
        flat = ycc.reshape(3, -1)
        out = self.inverse_matrix @ (flat - self.forward_offset[:, None])
        return out.reshape(ycc.shape)


def default_color_params() -> ColorParams:
    """BT.601 full-range (JFIF) coefficients."""
    return ColorParams(
        [
            [0.299, 0.587, 0.114],
            [-0.168736, -0.331264, 0.5],
            [0.5, -0.418688, -0.081312],
        ],
        [0.0, 128.0, 128.0],
    )


@dataclass(frozen=True)
class PipelineConfig:
    """Configuration of the differentiable pipeline.

    ``level`` walks the ablation ladder: A is the Shin et al. surrogate, B adds
    soft QT clipping, C the QT floor, D the scale-factor floor, E soft output
    clipping and F swaps every surrogate for its true function in the forward
    pass (straight-through estimation).

    ``hard_output_clip`` and ``ste_quantization`` exist only for the level-A
    baselines of Xing et al. and Xie et al. respectively.
    """

    quality: float = 50.0
    level: str = "E"
    rounding_surrogate: str = "polynomial"
    ste_backward: str = "surrogate"
    clip_gamma: float = 1e-3
    quality_mapping: Optional[str] = None
    subsampling: str = "s420"
    hard_output_clip: bool = False
    ste_quantization: bool = False

    def __post_init__(self):
        if not (1.0 <= float(self.quality) <= 99.0) or not np.isfinite(self.quality):
            raise ValueError(f"quality must lie in [1, 99], got {self.quality}")
        object.__setattr__(self, "quality", float(self.quality))
        if self.level not in LEVELS:
            raise ValueError(f"unknown config level {self.level!r}")
        if self.rounding_surrogate not in SURROGATES:
            raise ValueError(f"unknown surrogate {self.rounding_surrogate!r}")
        if self.ste_backward not in STE_BACKWARDS:
            raise ValueError(f"unknown STE backward mode {self.ste_backward!r}")
        if not (0.0 < self.clip_gamma <= 1.0):
            raise ValueError(f"clip_gamma must lie in (0, 1], got {self.clip_gamma}")
        if self.subsampling not in SUBSAMPLINGS:
            raise ValueError(f"unknown subsampling {self.subsampling!r}")

        expected = "shin" if self.level == "A" else "standard"
        if self.quality_mapping is None:
            object.__setattr__(self, "quality_mapping", expected)
        elif self.quality_mapping not in QUALITY_MAPPINGS:
            raise ValueError(f"unknown quality mapping {self.quality_mapping!r}")
        elif self.quality_mapping != expected:
            raise ValueError(
                f"level {self.level} requires quality_mapping={expected!r}"
            )

        if self.level != "A" and self.hard_output_clip:
            raise ValueError("hard_output_clip is only valid at level A")
        if self.level not in ("A", "F") and self.ste_quantization:
            raise ValueError("ste_quantization is only valid at levels A and F")
        if self.level == "F":
            object.__setattr__(self, "ste_quantization", True)

    @property
    def is_ste(self) -> bool:
        return self.level == "F"

    def with_quality(self, quality: float) -> "PipelineConfig":
        return dataclasses.replace(self, quality=quality)


@dataclass
class GradientBundle:
    """Cotangents of a scalar loss with respect to every pipeline input."""

    d_image: np.ndarray
    d_quality: float
    d_qt_luma: np.ndarray
    d_qt_chroma: np.ndarray
    d_color: np.ndarray = field(default_factory=lambda: np.zeros(12))

    def families(self) -> dict:
        return {
            "image": self.d_image,
            "quality": np.array([self.d_quality]),
            "qt_luma": self.d_qt_luma,
            "qt_chroma": self.d_qt_chroma,
            "color": self.d_color,
        }

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.families().values())
