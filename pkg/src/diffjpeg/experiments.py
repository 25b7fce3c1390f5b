"""Evaluation protocols shared by the CLI and the acceptance tests.

Everything here is a pure function of its inputs. Work is split per image so
that sweeps can run in worker processes; results are put back into canonical
order (variant, image, quality) before anyone sees them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .codec import diff_backward, diff_encode_decode, variant_config
from .core import LEVELS, ColorParams, QuantTables, default_color_params, standard_tables
from .io import list_images, read_ppm
from .metrics import psnr, ssim
from .reference import reference_encode_decode

Q_RANGES = {"1-99": (1, 99), "1-10": (1, 10), "11-99": (11, 99)}
BASELINES = ("ours", "ours-ste", "shin", "xing", "xie")
VARIANT_NAMES = ("reference",) + BASELINES + LEVELS


def data_dir() -> str:
    return str(resources.files("diffjpeg") / "data")


def load_images(directory=None, prefix: str | None = None) -> list:
    """``[(name, image), ...]`` sorted by file name; bundled corpus by default."""
    directory = data_dir() if directory is None else directory
    paths = list_images(directory)
    if prefix is not None:
        paths = [p for p in paths if os.path.basename(p).startswith(prefix)]
    if not paths:
        raise FileNotFoundError(f"no .ppm/.pgm images in {directory}")
    out = []
    for p in paths:
        img = read_ppm(p)
        if img.shape[0] == 1:
            img = np.repeat(img, 3, axis=0)
        out.append((os.path.splitext(os.path.basename(p))[0], img))
    return out


def make_cfg(variant: str, quality: float, surrogate: str | None = None,
             gamma: float | None = None, ste_backward: str | None = None):
    """Pipeline config for a variant name with optional overrides."""
    kwargs = {}
    if surrogate is not None:
        kwargs["rounding_surrogate"] = surrogate
    if gamma is not None:
        kwargs["clip_gamma"] = gamma
    if ste_backward is not None:
        kwargs["ste_backward"] = ste_backward
    return variant_config(variant, quality, **kwargs)


@dataclass(frozen=True)
class VariantSpec:
    """A named pipeline configuration; ``label`` is what appears in CSVs."""

    label: str
    variant: str
    surrogate: str | None = None
    gamma: float | None = None
    ste_backward: str | None = None

    def config(self, quality: float):
        return make_cfg(self.variant, quality, self.surrogate, self.gamma, self.ste_backward)


def code(img, spec: VariantSpec, quality: float, qt=None, cp=None) -> np.ndarray:
    """Code an image with a variant; ``reference`` needs an integer quality."""
    if spec.variant == "reference":
        return reference_encode_decode(img, int(quality), qt, cp)
    return diff_encode_decode(img, spec.config(quality), qt, cp)[0]


@dataclass(frozen=True)
class PointResult:
    image: str
    variant: str
    quality: int
    psnr_db: float
    ssim: float = float("nan")
    grad_q_norm: float = float("nan")
    grad_qt_norm: float = float("nan")


def forward_point(img, ref, spec: VariantSpec, quality: int, qt, cp, with_ssim=True):
    out = code(img, spec, quality, qt, cp)
    return psnr(out, ref), (ssim(out, ref) if with_ssim else float("nan"))


def vanish_point(img, ref, spec: VariantSpec, quality: int, qt, cp):
    """Gradient norms of the mean L1 distance to the reference at integer ``quality``."""
    out, tape = diff_encode_decode(img, spec.config(quality), qt, cp)
    bundle = diff_backward(tape, np.sign(out - ref) / out.size)
    qt_norm = math.sqrt(float(np.sum(bundle.d_qt_luma ** 2) + np.sum(bundle.d_qt_chroma ** 2)))
    return abs(float(bundle.d_quality)), qt_norm, psnr(out, ref)


def _image_task(args):
    name, img, specs, qualities, mode, qt, cp, with_ssim = args
    rows = []
    for q in qualities:
        ref = reference_encode_decode(img, q, qt, cp)
        for spec in specs:
            if mode == "forward":
                p, s = forward_point(img, ref, spec, q, qt, cp, with_ssim)
                rows.append(PointResult(name, spec.label, q, p, s))
            else:
                gq, gt, p = vanish_point(img, ref, spec, q, qt, cp)
                rows.append(PointResult(name, spec.label, q, p, float("nan"), gq, gt))
    return rows


def run_sweep(images, specs, qualities, mode: str = "forward", jobs: int = 1,
              qt: QuantTables | None = None, cp: ColorParams | None = None,
              with_ssim: bool = True) -> list:
    """Evaluate every (image, variant, quality) triple.

    ``mode`` is ``"forward"`` (PSNR/SSIM against the reference) or
    ``"vanish"`` (gradient norms of the L1 distance to the reference).
    """
    if mode not in ("forward", "vanish"):
        raise ValueError(f"unknown sweep mode {mode!r}")
    if not images:
        raise ValueError("no images to evaluate")
    qt = standard_tables() if qt is None else qt
    cp = default_color_params() if cp is None else cp
    qualities = sorted(set(int(q) for q in qualities))
    tasks = [(n, im, tuple(specs), qualities, mode, qt, cp, with_ssim) for n, im in images]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_image_task, tasks))
    else:
        chunks = [_image_task(t) for t in tasks]
    order = {s.label: i for i, s in enumerate(specs)}
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (order[r.variant], r.image, r.quality))
    return rows


def _mean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def per_quality_means(rows) -> list:
    """Average over images: one row per (variant, quality) in input order."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.variant, r.quality), []).append(r)
    out = []
    for (variant, q), group in groups.items():
        out.append(PointResult(
            "*", variant, q,
            _mean(g.psnr_db for g in group), _mean(g.ssim for g in group),
            _mean(g.grad_q_norm for g in group), _mean(g.grad_qt_norm for g in group),
        ))
    return out


@dataclass(frozen=True)
class RangeSummary:
    variant: str
    q_range: str
    psnr_db: float
    ssim: float
    grad_q_norm: float
    grad_qt_norm: float
    count: int


def range_means(rows) -> list:
    """Per-variant means over the 1-99, 1-10 and 11-99 quality ranges."""
    variants = list(dict.fromkeys(r.variant for r in rows))
    out = []
    for v in variants:
        for label, (lo, hi) in Q_RANGES.items():
            sel = [r for r in rows if r.variant == v and lo <= r.quality <= hi]
            if not sel:
                continue
            out.append(RangeSummary(
                v, label, _mean(r.psnr_db for r in sel), _mean(r.ssim for r in sel),
                _mean(r.grad_q_norm for r in sel), _mean(r.grad_qt_norm for r in sel), len(sel),
            ))
    return out


def summary_lookup(summary, variant: str, q_range: str) -> RangeSummary:
    for s in summary:
        if s.variant == variant and s.q_range == q_range:
            return s
    raise KeyError((variant, q_range))


@dataclass
class InversionResult:
    q_hat: float
    true_quality: float
    trajectory: list = field(default_factory=list)  # (step, q, loss, grad)
    converged_step: int | None = None
    diverged: bool = False

    @property
    def error(self) -> float:
        return abs(self.q_hat - self.true_quality)


def invert_quality(img, target, spec: VariantSpec, true_quality: float, q0: float,
                   steps: int = 200, lr: float = 1.0, tolerance: float = 2.0,
                   qt=None, cp=None) -> InversionResult:
    """Plain gradient descent on q for the mean squared error to ``target``.

    q is clipped to [1, 99] after every step. ``converged_step`` is the first
    step at which |q - q*| <= tolerance and stays so for the rest of the run.
    """
    qt = standard_tables() if qt is None else qt
    cp = default_color_params() if cp is None else cp
    target = np.asarray(target, dtype=np.float64)
    q = float(np.clip(q0, 1.0, 99.0))
    result = InversionResult(q, float(true_quality))
    for step in range(steps + 1):
        out, tape = diff_encode_decode(img, spec.config(q), qt, cp)
        resid = out - target
        loss = float(np.mean(resid * resid))
        grad = float(diff_backward(tape, 2.0 * resid / resid.size).d_quality)
        result.trajectory.append((step, q, loss, grad))
        if not (math.isfinite(loss) and math.isfinite(grad)):
            result.diverged = True
            break
        if step == steps:
            break
        q = float(np.clip(q - lr * grad, 1.0, 99.0))
    result.q_hat = result.trajectory[-1][1]
    for step, qs, _, _ in result.trajectory:
        if abs(qs - true_quality) > tolerance:
            result.converged_step = None
        elif result.converged_step is None:
            result.converged_step = step
    return result
