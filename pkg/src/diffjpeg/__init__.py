"""Differentiable JPEG with a bit-exact reference codec as its oracle."""

__version__ = "0.1.0"

from .codec import (
    ForwardTape,
    diff_backward,
    diff_encode_decode,
    diff_scale_factor,
    diff_scale_qt,
    make_config,
    ours,
    ours_ste,
    shin_baseline,
    variant_config,
    xie_baseline,
    xing_baseline,
)
from .core import (
    ColorParams,
    GradientBundle,
    PipelineConfig,
    QuantTables,
    default_color_params,
    standard_tables,
)
from .metrics import psnr, ssim
from .reference import reference_encode_decode, reference_float, scale_factor_int, scale_qt_int

__all__ = [
    "ColorParams",
    "ForwardTape",
    "GradientBundle",
    "PipelineConfig",
    "QuantTables",
    "default_color_params",
    "diff_backward",
    "diff_encode_decode",
    "diff_scale_factor",
    "diff_scale_qt",
    "make_config",
    "ours",
    "ours_ste",
    "psnr",
    "reference_encode_decode",
    "reference_float",
    "scale_factor_int",
    "scale_qt_int",
    "shin_baseline",
    "ssim",
    "standard_tables",
    "variant_config",
    "xie_baseline",
    "xing_baseline",
]
