"""Differentiable surrogates for the discrete operations of JPEG.

Every function accepts scalars or numpy arrays and works elementwise. Each
surrogate comes with its exact analytic derivative; the integer reference
(``true_round`` or ``floor``) inside a surrogate is treated as piecewise
constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import STE_BACKWARDS, SURROGATES

FOURIER_TERMS = 10
SIGMOID_GAIN = 60.0
TANH_GAIN = 5.0
LINEAR_SLOPE = 0.1

_K = np.arange(1, FOURIER_TERMS + 1, dtype=np.float64)
_SIGNS = (-1.0) ** (_K + 1)


def true_round(x):
    """Round to the nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    t = np.trunc(x)
    # x - trunc(x) is exact, so the tie test is too
    out = t + np.where(np.abs(x - t) >= 0.5, np.sign(x), 0.0)
    return out if out.ndim else float(out)


def true_floor(x):
    out = np.floor(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def _scalar(out):
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class Surrogate:
    """A smooth stand-in for rounding (``mode="round"``) or flooring.

    Floor mode evaluates the rounding formula at ``x - 0.5``, using
    ``round(x - 0.5) == floor(x)``.
    """

    kind: str = "polynomial"
    mode: str = "round"

    def __post_init__(self):
        if self.kind not in SURROGATES:
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        if self.mode not in ("round", "floor"):
            raise ValueError(f"unknown surrogate mode {self.mode!r}")

    def _shift(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x - 0.5 if self.mode == "floor" else x

    def value(self, x, piece=None):
        """Surrogate value; ``piece`` pins the integer reference (see :meth:`branch`).

        With ``piece`` given, the formula of that piece is extended smoothly
        past its jump points instead of switching to the neighbouring piece.
        """
        x = self._shift(x)
        k = self.kind
        if k in ("polynomial", "linear"):
            n = true_round(x) if piece is None else piece
            t = x - n
            out = n + (t**3 if k == "polynomial" else LINEAR_SLOPE * t)
        elif k in ("sigmoid", "tanh"):
            f = np.floor(x) if piece is None else piece
            if k == "sigmoid":
                out = _sigmoid(SIGMOID_GAIN * (x - 0.5 - f)) + f
            else:
                out = 0.5 * np.tanh(TANH_GAIN * (x - 0.5 - f)) + 0.5 + f
        else:
            phase = 2.0 * np.pi * np.multiply.outer(x, _K)
            out = x - np.sum(_SIGNS / (_K * np.pi) * np.sin(phase), axis=-1)
        return _scalar(out)

    def derivative(self, x):
        x = self._shift(x)
        k = self.kind
        if k == "polynomial":
            out = 3.0 * (x - true_round(x)) ** 2
        elif k == "linear":
            out = np.full_like(x, LINEAR_SLOPE)
        elif k == "sigmoid":
            s = _sigmoid(SIGMOID_GAIN * (x - 0.5 - np.floor(x)))
            out = SIGMOID_GAIN * s * (1.0 - s)
        elif k == "tanh":
            th = np.tanh(TANH_GAIN * (x - 0.5 - np.floor(x)))
            out = 0.5 * TANH_GAIN * (1.0 - th * th)
        else:
            phase = 2.0 * np.pi * np.multiply.outer(x, _K)
            out = 1.0 - np.sum(2.0 * _SIGNS * np.cos(phase), axis=-1)
        return _scalar(out)

    def branch(self, x) -> np.ndarray:
        """Integer piece index of ``x``; the surrogate is smooth on each piece."""
        x = self._shift(x)
        if self.kind in ("polynomial", "linear"):
            return np.asarray(true_round(x))
        if self.kind in ("sigmoid", "tanh"):
            return np.floor(x)
        return np.zeros_like(x)

    def jump_points(self, lo: float, hi: float) -> np.ndarray:
        """Points in [lo, hi] where the surrogate may be discontinuous."""
        if self.kind == "fourier":
            return np.empty(0)
        offset = 0.5 if self.kind in ("polynomial", "linear") else 0.0
        if self.mode == "floor":
            offset += 0.5
        start = np.ceil(lo - offset)
        pts = np.arange(start, np.floor(hi - offset) + 1) + offset
        return pts


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def surrogate_value(s: Surrogate, x):
    return s.value(x)


def surrogate_derivative(s: Surrogate, x):
    """Analytic derivative of :func:`surrogate_value`.

    At jump points the right-hand piece is used; for the round-based kinds the
    left and right derivatives coincide there anyway.
    """
    return s.derivative(x)


def soft_clip(x, b_min: float, b_max: float, gamma: float):
    """Clip with slope ``gamma`` outside ``[b_min, b_max]`` instead of zero."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(
        x < b_min,
        b_min + gamma * (x - b_min),
        np.where(x > b_max, b_max + gamma * (x - b_max), x),
    )
    return _scalar(out)


def soft_clip_derivative(x, b_min: float, b_max: float, gamma: float):
    x = np.asarray(x, dtype=np.float64)
    out = np.where((x < b_min) | (x > b_max), gamma, 1.0)
    return _scalar(out)


def hard_clip(x, b_min: float, b_max: float):
    return _scalar(np.clip(np.asarray(x, dtype=np.float64), b_min, b_max))


def hard_clip_derivative(x, b_min: float, b_max: float):
    x = np.asarray(x, dtype=np.float64)
    return _scalar(np.where((x < b_min) | (x > b_max), 0.0, 1.0))


def clip_branch(x, b_min: float, b_max: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < b_min, -1, np.where(x > b_max, 1, 0))


def ste_apply(true_fn, surrogate: Surrogate, backward: str, x):
    """Straight-through estimate: true forward value, surrogate derivative.

    ``backward="constant"`` is the classic estimator with unit derivative.
    """
    if backward not in STE_BACKWARDS:
        raise ValueError(f"unknown STE backward mode {backward!r}")
    value = true_fn(x)
    if backward == "constant":
        deriv = _scalar(np.ones_like(np.asarray(x, dtype=np.float64)))
    else:
        deriv = surrogate.derivative(x)
    return value, deriv
