"""Linear stage kernels shared by the reference and differentiable codecs.

Both codecs call exactly these functions in the same order, which is what
makes the straight-through configuration reproduce the reference bit for bit.
Each kernel has an adjoint used by the reverse pass.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

BLOCK = 8
LEVEL_SHIFT = 128.0


@lru_cache(maxsize=None)
def dct_matrix() -> np.ndarray:
    """Orthonormal 8-point DCT-II matrix ``D[u, i]``.

    ``D @ P @ D.T`` equals the scaled transform with basis
    ``cos((2i+1) u pi / 16) cos((2j+1) v pi / 16)`` and weights
    ``alpha(u) alpha(v) / 4``.
    """
    u = np.arange(BLOCK)[:, None]
    i = np.arange(BLOCK)[None, :]
    basis = np.cos((2 * i + 1) * u * np.pi / 16.0)
    alpha = np.where(np.arange(BLOCK) == 0, 1.0 / np.sqrt(2.0), 1.0)
    d = 0.5 * alpha[:, None] * basis
    d.setflags(write=False)
    return d


def dct_blocks(blocks: np.ndarray) -> np.ndarray:
    """Level-shifted forward DCT of an (N, 8, 8) stack of pixel blocks."""
    d = dct_matrix()
    return d @ (blocks - LEVEL_SHIFT) @ d.T


def idct_blocks(coeffs: np.ndarray) -> np.ndarray:
    d = dct_matrix()
    return d.T @ coeffs @ d + LEVEL_SHIFT


def dct_blocks_adjoint(g: np.ndarray) -> np.ndarray:
    """Cotangent of the pixel blocks given the cotangent of the coefficients."""
    d = dct_matrix()
    return d.T @ g @ d


def idct_blocks_adjoint(g: np.ndarray) -> np.ndarray:
    d = dct_matrix()
    return d @ g @ d.T


def dct_8x8(patch) -> np.ndarray:
    """Forward DCT of a single 8x8 patch, level shift included."""
    return dct_blocks(np.asarray(patch, dtype=np.float64)[None])[0]


def idct_8x8(coeffs) -> np.ndarray:
    return idct_blocks(np.asarray(coeffs, dtype=np.float64)[None])[0]


def blockify(plane: np.ndarray) -> np.ndarray:
    """Split an (H, W) plane, H and W multiples of 8, into (N, 8, 8) blocks."""
    h, w = plane.shape
    return (
        plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
        .transpose(0, 2, 1, 3)
        .reshape(-1, BLOCK, BLOCK)
    )


def unblockify(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return (
        blocks.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK)
        .transpose(0, 2, 1, 3)
        .reshape(h, w)
    )


def padded_size(n: int, multiple: int = 16) -> int:
    return -(-n // multiple) * multiple


def pad_edge(img: np.ndarray, multiple: int = 16) -> np.ndarray:
    """Replicate the last row/column of a (C, H, W) image up to ``multiple``."""
    _, h, w = img.shape
    hp, wp = padded_size(h, multiple), padded_size(w, multiple)
    if (hp, wp) == (h, w):
        return img
    return np.pad(img, ((0, 0), (0, hp - h), (0, wp - w)), mode="edge")


def pad_edge_adjoint(g: np.ndarray, h: int, w: int) -> np.ndarray:
    out = g[:, :h, :w].copy()
    if g.shape[1] > h:
        out[:, h - 1, :] += g[:, h:, :w].sum(axis=1)
    if g.shape[2] > w:
        out[:, :, w - 1] += g[:, :h, w:].sum(axis=2)
        if g.shape[1] > h:
            out[:, h - 1, w - 1] += g[:, h:, w:].sum(axis=(1, 2))
    return out


@lru_cache(maxsize=64)
def downsample_matrix(n: int) -> np.ndarray:
    """(n/2, n) matrix averaging neighbouring pairs; n must be even."""
    m = np.zeros((n // 2, n))
    idx = np.arange(n // 2)
    m[idx, 2 * idx] = 0.5
    m[idx, 2 * idx + 1] = 0.5
    m.setflags(write=False)
    return m


@lru_cache(maxsize=64)
def upsample_matrix(n_low: int) -> np.ndarray:
    """(2n, n) bilinear interpolation matrix with half-pixel alignment.

    Output sample ``i`` sits at low-resolution coordinate ``i/2 - 1/4`` and
    interpolates its two nearest low-resolution samples; indices beyond the
    border are clamped (edge replication).
    """
    n = 2 * n_low
    m = np.zeros((n, n_low))
    pos = np.arange(n) / 2.0 - 0.25
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    rows = np.arange(n)
    np.add.at(m, (rows, np.clip(lo, 0, n_low - 1)), 1.0 - frac)
    np.add.at(m, (rows, np.clip(lo + 1, 0, n_low - 1)), frac)
    m.setflags(write=False)
    return m


def downsample(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return downsample_matrix(h) @ plane @ downsample_matrix(w).T


def downsample_adjoint(g: np.ndarray) -> np.ndarray:
    h, w = g.shape
    return downsample_matrix(2 * h).T @ g @ downsample_matrix(2 * w)


def upsample(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return upsample_matrix(h) @ plane @ upsample_matrix(w).T


def upsample_adjoint(g: np.ndarray) -> np.ndarray:
    h, w = g.shape
    return upsample_matrix(h // 2).T @ g @ upsample_matrix(w // 2)


def color_forward(matrix: np.ndarray, offset: np.ndarray, img: np.ndarray) -> np.ndarray:
    """Per-pixel affine map of a (3, H, W) image."""
    return np.einsum("ij,jhw->ihw", matrix, img) + offset[:, None, None]


def color_inverse(matrix: np.ndarray, offset: np.ndarray, ycc: np.ndarray) -> np.ndarray:
    """Inverse of :func:`color_forward` given the *forward* matrix and offset."""
    inv = np.linalg.inv(matrix)
    return np.einsum("ij,jhw->ihw", inv, ycc - offset[:, None, None])
