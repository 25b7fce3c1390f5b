"""Differentiable JPEG: surrogate forward pass and analytic reverse pass.

The forward pass mirrors :mod:`diffjpeg.reference` stage by stage and swaps
each discretization for the surrogate selected by the config level. It
returns the coded image together with a :class:`ForwardTape`, and
:func:`diff_backward` turns an output cotangent into a
:class:`~diffjpeg.core.GradientBundle` by applying the vector-Jacobian
product of every stage in reverse.

Straight-through (level F) discretizers return the true value in the forward
pass and the surrogate derivative in the backward pass. Passing
``frozen_offsets`` from a previous tape re-evaluates them as
``surrogate(x) + (true(x0) - surrogate(x0))`` with the surrogate held on the
piece it used at ``x0``. This stop-gradient form is smooth near ``x0`` and
its ordinary derivative equals the straight-through gradient there, which is
what the gradient checker differentiates numerically.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import stages
from .core import (
    ColorParams,
    GradientBundle,
    PipelineConfig,
    QuantTables,
    check_image,
    default_color_params,
    standard_tables,
)
from .ops import (
    Surrogate,
    clip_branch,
    hard_clip,
    hard_clip_derivative,
    soft_clip,
    soft_clip_derivative,
    true_floor,
    true_round,
)

QT_MIN, QT_MAX = 1.0, 255.0
PIX_MIN, PIX_MAX = 0.0, 255.0


class _Discretizer:
    """Applies round/floor/clip for one forward pass and records what it did."""

    def __init__(self, cfg: PipelineConfig, frozen: Optional[dict] = None):
        self.cfg = cfg
        self.frozen = frozen
        self.offsets: dict = {}
        self.branches: dict = {}
        self.round_s = Surrogate(cfg.rounding_surrogate, "round")
        self.floor_s = Surrogate(cfg.rounding_surrogate, "floor")

    def _ste(self, name, x, true_fn, surr_value, surr_deriv, piece=None):
        constant = self.cfg.ste_backward == "constant"
        if constant:
            surr_value, surr_deriv = (lambda v, p=None: v), (lambda v: np.ones_like(v))
        if self.frozen is not None and name in self.frozen:
            offset, piece = self.frozen[name]
            value = surr_value(x, piece) + offset
        else:
            value = true_fn(x)
            self.offsets[name] = (value - surr_value(x, piece), piece)
        return value, np.asarray(surr_deriv(x), dtype=np.float64)

    def _surrogate(self, name, surr: Surrogate, x, ste: bool, true_fn):
        x = np.asarray(x, dtype=np.float64)
        if not ste:
            self.branches[name] = surr.branch(x)
            return np.asarray(surr.value(x)), np.asarray(surr.derivative(x))
        self.branches[name + ".true"] = np.asarray(true_fn(x))
        if self.frozen is not None and name in self.frozen:
            # the frozen form stays on the base piece, so only true jumps matter
            return self._ste(name, x, true_fn, surr.value, surr.derivative)
        piece = surr.branch(x)
        return self._ste(name, x, true_fn, surr.value, surr.derivative, piece)

    def round(self, name, x, ste: bool):
        return self._surrogate(name, self.round_s, x, ste, true_round)

    def floor(self, name, x, ste: bool):
        return self._surrogate(name, self.floor_s, x, ste, true_floor)

    def clip(self, name, x, lo, hi, mode: str):
        """``mode`` is one of "soft", "hard", "ste" or "none"."""
        x = np.asarray(x, dtype=np.float64)
        if mode == "none":
            return x, np.ones_like(x)
        self.branches[name] = clip_branch(x, lo, hi)
        gamma = self.cfg.clip_gamma
        if mode == "soft":
            return np.asarray(soft_clip(x, lo, hi, gamma)), np.asarray(
                soft_clip_derivative(x, lo, hi, gamma)
            )
        if mode == "hard":
            return np.asarray(hard_clip(x, lo, hi)), np.asarray(hard_clip_derivative(x, lo, hi))
        return self._ste(
            name,
            x,
            lambda v: np.clip(v, lo, hi),
            lambda v, p=None: soft_clip(v, lo, hi, gamma),
            lambda v: soft_clip_derivative(v, lo, hi, gamma),
        )


# ---------------------------------------------------------------------------
# quality -> scale factor -> scaled tables


def _scale_factor(q: float, cfg: PipelineConfig, disc: _Discretizer):
    """Return (s, ds/dq)."""
    disc.branches["quality"] = np.asarray(q < 50.0)
    if cfg.quality_mapping == "shin":
        if q < 50.0:
            return 50.0 / q, -50.0 / q**2
        return 2.0 - 2.0 * q / 100.0, -0.02
    if q < 50.0:
        raw, draw = 5000.0 / q, -5000.0 / q**2
    else:
        raw, draw = 200.0 - 2.0 * q, -2.0
    if cfg.level in ("B", "C"):
        return raw, draw
    s, ds = disc.floor("scale", raw, ste=cfg.is_ste)
    return float(s), float(ds) * draw


def _scale_table(name: str, table: np.ndarray, s: float, cfg: PipelineConfig, disc: _Discretizer):
    """Return (scaled table, d table / d s, d table / d table_std)."""
    if cfg.level == "A":
        return s * table, table.copy(), np.full_like(table, s)
    u = (s * table + 50.0) / 100.0
    if cfg.level == "B":
        t, dt_du = disc.clip(name + ".clip", u, QT_MIN, QT_MAX, "soft")
    else:
        v, dv = disc.floor(name + ".floor", u, ste=cfg.is_ste)
        t, dc = disc.clip(name + ".clip", v, QT_MIN, QT_MAX, "ste" if cfg.is_ste else "soft")
        dt_du = dc * dv
    return t, dt_du * table / 100.0, dt_du * s / 100.0


def diff_scale_factor(quality: float, cfg: PipelineConfig) -> float:
    """Scale factor for a real-valued quality under ``cfg``'s level and mapping."""
    if not 1.0 <= quality <= 99.0:
        raise ValueError(f"quality must lie in [1, 99], got {quality}")
    return float(_scale_factor(float(quality), cfg, _Discretizer(cfg))[0])


def diff_scale_qt(qt: QuantTables, s: float, cfg: PipelineConfig) -> QuantTables:
    """Scale both standard tables by ``s`` with ``cfg``'s floor/clip treatment."""
    if s <= 0:
        raise ValueError("scale factor must be positive")
    disc = _Discretizer(cfg)
    luma = _scale_table("qt_luma", qt.luma, s, cfg, disc)[0]
    chroma = _scale_table("qt_chroma", qt.chroma, s, cfg, disc)[0]
    return QuantTables(luma, chroma)


# ---------------------------------------------------------------------------
# forward


@dataclass
class _PlaneRecord:
    table_id: str  # "luma" or "chroma"
    shape: tuple
    coeffs: np.ndarray
    ratio: np.ndarray
    qbar: np.ndarray
    dqbar: np.ndarray


@dataclass
class ForwardTape:
    """Primal values needed by :func:`diff_backward`."""

    cfg: PipelineConfig
    qt: QuantTables
    cp: ColorParams
    image_shape: tuple
    padded: np.ndarray
    ycc_raw: np.ndarray
    ycc_deriv: np.ndarray
    planes: list
    scale: float
    dscale_dq: float
    tables: dict  # "luma"/"chroma" -> (table, dT/ds, dT/dTstd)
    ycc_hat: np.ndarray
    pre_clip: np.ndarray
    out_deriv: np.ndarray
    output: np.ndarray
    offsets: dict = field(default_factory=dict)
    branches: dict = field(default_factory=dict)

    def replay(self) -> np.ndarray:
        """Recompute the output from the stored dequantized planes."""
        h, w = self.image_shape
        m, b = self.cp.forward_matrix, self.cp.forward_offset
        rgb = stages.color_inverse(m, b, self.ycc_hat)[:, :h, :w]
        mode = _output_clip_mode(self.cfg)
        disc = _Discretizer(self.cfg, frozen=self.offsets if self.cfg.is_ste else None)
        return disc.clip("output", rgb, PIX_MIN, PIX_MAX, mode)[0]


def _output_clip_mode(cfg: PipelineConfig) -> str:
    if cfg.level == "F":
        return "ste"
    if cfg.level == "E":
        return "soft"
    if cfg.hard_output_clip:
        return "hard"
    return "none"


def _code_plane(plane, table, table_id, name, cfg, disc):
    h, w = plane.shape
    coeffs = stages.dct_blocks(stages.blockify(plane))
    ratio = coeffs / table
    qbar, dqbar = disc.round(name, ratio, ste=cfg.ste_quantization)
    rec = stages.unblockify(stages.idct_blocks(qbar * table), h, w)
    return rec, _PlaneRecord(table_id, (h, w), coeffs, ratio, qbar, dqbar)


def diff_encode_decode(
    img,
    cfg: PipelineConfig,
    qt: QuantTables | None = None,
    cp: ColorParams | None = None,
    frozen_offsets: Optional[dict] = None,
):
    """Differentiable JPEG round trip of a (3, H, W) image at ``cfg.quality``.

    Returns ``(output, tape)``. The output is not rounded to integers.
    """
    img = check_image(img, channels=3)
    qt = standard_tables() if qt is None else qt
    cp = default_color_params() if cp is None else cp
    disc = _Discretizer(cfg, frozen=frozen_offsets)

    s, ds_dq = _scale_factor(cfg.quality, cfg, disc)
    tables = {
        "luma": _scale_table("qt_luma", qt.luma, s, cfg, disc),
        "chroma": _scale_table("qt_chroma", qt.chroma, s, cfg, disc),
    }

    _, h, w = img.shape
    m, b = cp.forward_matrix, cp.forward_offset
    x = stages.pad_edge(img)
    ycc_raw = stages.color_forward(m, b, x)
    ycc, ycc_deriv = disc.clip("ycc", ycc_raw, PIX_MIN, PIX_MAX, "hard")

    planes, records = [], []
    rec, r = _code_plane(ycc[0], tables["luma"][0], "luma", "q.y", cfg, disc)
    planes.append(rec)
    records.append(r)
    for c, name in ((1, "q.cb"), (2, "q.cr")):
        src = stages.downsample(ycc[c]) if cfg.subsampling == "s420" else ycc[c]
        rec, r = _code_plane(src, tables["chroma"][0], "chroma", name, cfg, disc)
        planes.append(stages.upsample(rec) if cfg.subsampling == "s420" else rec)
        records.append(r)
    ycc_hat = np.stack(planes)

    pre_clip = stages.color_inverse(m, b, ycc_hat)[:, :h, :w]
    out, out_deriv = disc.clip("output", pre_clip, PIX_MIN, PIX_MAX, _output_clip_mode(cfg))

    tape = ForwardTape(
        cfg=cfg,
        qt=qt,
        cp=cp,
        image_shape=(h, w),
        padded=x,
        ycc_raw=ycc_raw,
        ycc_deriv=ycc_deriv,
        planes=records,
        scale=s,
        dscale_dq=ds_dq,
        tables=tables,
        ycc_hat=ycc_hat,
        pre_clip=pre_clip,
        out_deriv=out_deriv,
        output=out,
        offsets=disc.offsets,
        branches=disc.branches,
    )
    return out, tape


# ---------------------------------------------------------------------------
# reverse


def diff_backward(tape: ForwardTape, cotangent) -> GradientBundle:
    """Vector-Jacobian product of the coded image with ``cotangent``."""
    g_out = np.asarray(cotangent, dtype=np.float64)
    if g_out.shape != tape.output.shape:
        raise ValueError(
            f"cotangent shape {g_out.shape} does not match output {tape.output.shape}"
        )
    h, w = tape.image_shape
    m = tape.cp.forward_matrix
    b = tape.cp.forward_offset
    inv = np.linalg.inv(m)

    # output clip, crop
    g = g_out * tape.out_deriv
    g_rgb = np.zeros_like(tape.ycc_hat)
    g_rgb[:, :h, :w] = g

    # rgb = inv @ (ycc_hat - b)
    centered = tape.ycc_hat - b[:, None, None]
    g_inv = np.einsum("ihw,jhw->ij", g_rgb, centered)
    g_ycc_hat = np.einsum("ji,jhw->ihw", inv, g_rgb)
    g_offset = -g_ycc_hat.sum(axis=(1, 2))
    g_matrix = -inv.T @ g_inv @ inv.T

    g_tables = {"luma": np.zeros((8, 8)), "chroma": np.zeros((8, 8))}
    g_ycc = np.empty_like(tape.ycc_raw)
    s420 = tape.cfg.subsampling == "s420"
    for c, rec in enumerate(tape.planes):
        g_plane = g_ycc_hat[c]
        if c > 0 and s420:
            g_plane = stages.upsample_adjoint(g_plane)
        table = tape.tables[rec.table_id][0]
        g_deq = stages.idct_blocks_adjoint(stages.blockify(g_plane))
        g_qbar = g_deq * table
        g_tab = np.sum(g_deq * rec.qbar, axis=0)
        g_ratio = g_qbar * rec.dqbar
        g_coeffs = g_ratio / table
        g_tab -= np.sum(g_ratio * rec.coeffs, axis=0) / table**2
        g_tables[rec.table_id] += g_tab
        g_in = stages.unblockify(stages.dct_blocks_adjoint(g_coeffs), *rec.shape)
        if c > 0 and s420:
            g_in = stages.downsample_adjoint(g_in)
        g_ycc[c] = g_in

    g_ycc *= tape.ycc_deriv
    # ycc_raw = m @ x + b
    g_matrix += np.einsum("ihw,jhw->ij", g_ycc, tape.padded)
    g_offset += g_ycc.sum(axis=(1, 2))
    g_x = np.einsum("ji,jhw->ihw", m, g_ycc)
    d_image = stages.pad_edge_adjoint(g_x, h, w)

    g_s = 0.0
    d_std = {}
    for key, (_, dt_ds, dt_dstd) in tape.tables.items():
        g_s += float(np.sum(g_tables[key] * dt_ds))
        d_std[key] = g_tables[key] * dt_dstd

    return GradientBundle(
        d_image=d_image,
        d_quality=g_s * tape.dscale_dq,
        d_qt_luma=d_std["luma"],
        d_qt_chroma=d_std["chroma"],
        d_color=np.concatenate([g_matrix.ravel(), g_offset]),
    )


# ---------------------------------------------------------------------------
# named configurations


def make_config(level: str = "E", quality: float = 50.0, **kwargs) -> PipelineConfig:
    return PipelineConfig(quality=quality, level=level, **kwargs)


def ours(quality: float = 50.0, **kwargs) -> PipelineConfig:
    """Full differentiable surrogate (level E, polynomial, gamma 1e-3)."""
    return PipelineConfig(quality=quality, level="E", **kwargs)


def ours_ste(quality: float = 50.0, ste_backward: str = "surrogate", **kwargs) -> PipelineConfig:
    return PipelineConfig(quality=quality, level="F", ste_backward=ste_backward, **kwargs)


def shin_baseline(quality: float = 50.0, **kwargs) -> PipelineConfig:
    return PipelineConfig(quality=quality, level="A", rounding_surrogate="polynomial", **kwargs)


def xing_baseline(quality: float = 50.0, **kwargs) -> PipelineConfig:
    """Fourier rounding with a hard output clamp (zero gradient when clipped)."""
    return PipelineConfig(
        quality=quality, level="A", rounding_surrogate="fourier", hard_output_clip=True, **kwargs
    )


def xie_baseline(quality: float = 50.0, **kwargs) -> PipelineConfig:
    """True rounding forward, tanh-surrogate derivative backward, Shin/Xing mapping."""
    return PipelineConfig(
        quality=quality, level="A", rounding_surrogate="tanh", ste_quantization=True, **kwargs
    )


VARIANTS = {
    "ours": ours,
    "ours-ste": ours_ste,
    "shin": shin_baseline,
    "xing": xing_baseline,
    "xie": xie_baseline,
}


def variant_config(name: str, quality: float = 50.0, **kwargs) -> PipelineConfig:
    """Config for a variant name: a baseline name or a bare level letter."""
    if name in VARIANTS:
        return VARIANTS[name](quality, **kwargs)
    if name in ("A", "B", "C", "D", "E", "F"):
        return PipelineConfig(quality=quality, level=name, **kwargs)
    raise ValueError(f"unknown variant {name!r}")


def with_quality(cfg: PipelineConfig, quality: float) -> PipelineConfig:
    return dataclasses.replace(cfg, quality=quality)
