"""PSNR and SSIM on (C, H, W) images in the [0, 255] range."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / err))


@lru_cache(maxsize=4)
def gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian; the 2-D window is its outer product."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    g.setflags(write=False)
    return g


def _filter_valid(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation keeping only windows fully inside the image
    n = g.size
    rows = np.lib.stride_tricks.sliding_window_view(plane, n, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, n, axis=1) @ g


def _ssim_plane(x: np.ndarray, y: np.ndarray, g: np.ndarray, peak: float) -> float:
    c1 = (_K1 * peak) ** 2
    c2 = (_K2 * peak) ** 2
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b, peak: float = 255.0) -> float:
    """Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5).

    Only windows that lie entirely inside the image contribute, so there is
    no padding convention to agree on. Accepts (C, H, W) or (H, W) input.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ValueError(f"expected (C, H, W) or (H, W), got {a.shape}")
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ValueError(f"SSIM needs H, W >= {SSIM_WINDOW}, got {a.shape[1:]}")
    g = gaussian_kernel()
    vals = [_ssim_plane(a[c], b[c], g, peak) for c in range(a.shape[0])]
    return float(np.mean(vals))
