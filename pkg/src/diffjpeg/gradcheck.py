"""Finite-difference validation of the analytic reverse pass."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .codec import diff_backward, diff_encode_decode
from .core import ColorParams, PipelineConfig, QuantTables, default_color_params, standard_tables
from .reference import reference_encode_decode

FAMILIES = ("image", "quality", "qt_luma", "qt_chroma", "color")
PIPELINE_STEP = 1e-3
SCALAR_STEP = 1e-6
QUALITY_MARGIN = 0.01
NOISE_FACTOR = 16.0
_EPS = float(np.finfo(np.float64).eps)


def central_diff(f: Callable[[float], float], x: float, h: float) -> float:
    if h <= 0:
        raise ValueError("step must be positive")
    return (f(x + h) - f(x - h)) / (2.0 * h)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def quality_is_checkable(q: float, margin: float = QUALITY_MARGIN) -> bool:
    """False near integers (floors jump there) and near the q=50 branch switch."""
    return abs(q - round(q)) >= margin and abs(q - 50.0) >= margin


@dataclass
class CheckEntry:
    family: str
    coordinate: str
    analytic: float
    numeric: float
    rel_error: float
    status: str  # "pass", "fail" or "skipped"


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def checked(self, family: str) -> list:
        return [e for e in self.entries if e.family == family and e.status != "skipped"]

    def max_error(self, family: str) -> float:
        errs = [e.rel_error for e in self.checked(family)]
        return max(errs) if errs else float("nan")

    def count(self, family: str) -> int:
        return len(self.checked(family))

    @property
    def passed(self) -> bool:
        return not any(e.status == "fail" for e in self.entries)

    def merge(self, other: "GradCheckReport") -> "GradCheckReport":
        self.entries.extend(other.entries)
        self.notes.extend(other.notes)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["family", "coordinate", "analytic", "numeric", "rel_error", "status"])
        for e in self.entries:
            writer.writerow(
                [e.family, e.coordinate, f"{e.analytic:.6g}", f"{e.numeric:.6g}",
                 f"{e.rel_error:.6g}", e.status]
            )
        return buf.getvalue()

    def summary(self) -> str:
        lines = []
        for fam in FAMILIES:
            n = self.count(fam)
            skipped = sum(1 for e in self.entries if e.family == fam and e.status == "skipped")
            if n == 0:
                lines.append(f"{fam:10s} not checked ({skipped} skipped)")
                continue
            ok = all(e.status == "pass" for e in self.checked(fam))
            lines.append(
                f"{fam:10s} {'PASS' if ok else 'FAIL'} n={n:4d} skipped={skipped:3d} "
                f"max_rel_err={self.max_error(fam):.3e} (tol {self.tolerance:g})"
            )
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def _same_branches(a: dict, b: dict) -> bool:
    if a.keys() != b.keys():
        return False
    return all(np.array_equal(a[k], b[k]) for k in a)


class _Problem:
    """A scalar loss of all pipeline inputs, evaluated with fixed straight-through offsets."""

    def __init__(self, img, cfg, qt, cp, loss, seed=0):
        self.img = np.asarray(img, dtype=np.float64)
        self.cfg, self.qt, self.cp, self.loss = cfg, qt, cp, loss
        out, self.tape = diff_encode_decode(self.img, cfg, qt, cp)
        self.frozen = self.tape.offsets or None
        self.target = None
        self.weights = None
        if loss == "sum":
            cot = np.ones_like(out)
        elif loss == "weighted":
            self.weights = np.random.default_rng(seed).standard_normal(out.shape)
            cot = self.weights
        elif loss == "l1_vs_reference":
            self.target = reference_encode_decode(self.img, int(round(cfg.quality)), qt, cp)
            cot = np.sign(out - self.target) / out.size
        else:
            raise ValueError(f"unknown loss {loss!r}")
        self.base_branches = self._branches(out, self.tape)
        self.bundle = diff_backward(self.tape, cot)

    def _branches(self, out, tape):
        br = dict(tape.branches)
        if self.target is not None:
            br["loss.sign"] = np.sign(out - self.target)
        return br

    def evaluate(self, img=None, cfg=None, qt=None, cp=None):
        """Return (per-pixel loss terms, same_branch_as_base)."""
        out, tape = diff_encode_decode(
            self.img if img is None else img,
            self.cfg if cfg is None else cfg,
            self.qt if qt is None else qt,
            self.cp if cp is None else cp,
            frozen_offsets=self.frozen,
        )
        if self.weights is not None:
            terms = self.weights * out
        elif self.target is None:
            terms = out
        else:
            terms = np.abs(out - self.target) / out.size
        return terms, _same_branches(self.base_branches, self._branches(out, tape))


def _fd_terms(evaluate: Callable, h: float, side: int = 0, base=None):
    """One difference quotient: central if ``side`` is 0, else one-sided towards ``side``."""
    if side == 0:
        plus, ok_p = evaluate(+h)
        minus, ok_m = evaluate(-h)
        width = 2.0 * h
    else:
        plus, ok_p = evaluate(side * h)
        minus, ok_m = base, True
        plus, minus = (plus, minus) if side > 0 else (minus, plus)
        width = h
    # subtract before summing so unchanged pixels cancel exactly
    est = float(np.sum(plus - minus)) / width
    noise = _EPS * np.sqrt(plus.size) * float(np.max(np.abs(plus))) / width
    return est, noise, ok_p and ok_m


def _ridders(evaluate: Callable, h: float, levels: int, shrink: float, side: int, base):
    # central differences have an even error series, one-sided ones a full one
    ratio = shrink * shrink if side == 0 else shrink
    est, noise, ok = _fd_terms(evaluate, h, side, base)
    prev = [est]
    best, err = est, np.inf
    step = h
    for i in range(1, levels):
        step /= shrink
        est, noise, ok_i = _fd_terms(evaluate, step, side, base)
        ok = ok and ok_i
        row = [est]
        fac = ratio
        for j in range(1, i + 1):
            row.append((row[j - 1] * fac - prev[j - 1]) / (fac - 1.0))
            fac *= ratio
            errt = max(abs(row[j] - row[j - 1]), abs(row[j] - prev[j - 1]))
            if errt <= err:
                err, best = errt, row[j]
        if abs(row[i] - prev[i - 1]) >= 2.0 * err:
            break
        prev = row
    return best, max(err, NOISE_FACTOR * noise), ok


def extrapolated_diff(evaluate: Callable, h: float, levels: int = 5, shrink: float = 2.0):
    """Central differences at h, h/2, ... combined by Richardson extrapolation.

    ``evaluate(d)`` returns ``(per-term values, same_branch)``. Returns
    ``(estimate, error_estimate, ok)`` following Ridders' tableau; the error
    estimate includes float64 round-off of the differenced sum.

    When the base point sits on the edge of its piece, so that one side
    leaves it, the derivative of that piece is still defined from the other
    side. The one-sided tableau is then used instead.
    """
    result = _ridders(evaluate, h, levels, shrink, 0, None)
    if result[2]:
        return result
    base, ok = evaluate(0.0)
    if not ok:
        return result
    for side in (+1, -1):
        if evaluate(side * h)[1]:
            one = _ridders(evaluate, h, levels + 2, shrink, side, base)
            if one[2]:
                return one
    return result


def check_bundle(
    img,
    cfg: PipelineConfig,
    qt: QuantTables | None = None,
    cp: ColorParams | None = None,
    loss: str = "sum",
    tolerance: float = 1e-4,
    samples: int = 10,
    h: float = PIPELINE_STEP,
    seed: int = 0,
    max_attempts: int = 4,
) -> GradCheckReport:
    """Compare every gradient family with central differences at sampled coordinates.

    ``loss`` is ``"sum"`` (sum of output pixels), ``"weighted"`` (fixed
    Gaussian random weights, which also probes the AC table entries that a
    plain sum cannot see) or ``"l1_vs_reference"``.

    Coordinates whose perturbation would move any surrogate, clip or rounding
    onto a different piece are skipped (and resampled): the loss is only
    piecewise smooth and the finite difference is meaningless across a jump.
    So are coordinates whose gradient is too small for the difference to
    certify ``tolerance`` given float64 round-off in the summed output.
    """
    qt = standard_tables() if qt is None else qt
    cp = default_color_params() if cp is None else cp
    rng = np.random.default_rng(seed)
    prob = _Problem(img, cfg, qt, cp, loss, seed)
    report = GradCheckReport(tolerance)
    grads = prob.bundle.families()

    def record(family, coord, analytic, fn, step=h):
        numeric, err, ok = extrapolated_diff(fn, step)
        if not ok or err > 0.5 * tolerance * max(abs(analytic), abs(numeric)):
            # crosses a jump, or the oracle cannot certify the tolerance here
            report.entries.append(CheckEntry(family, coord, analytic, numeric, float("nan"), "skipped"))
            return False
        err = relative_error(analytic, numeric)
        status = "pass" if err < tolerance else "fail"
        report.entries.append(CheckEntry(family, coord, analytic, numeric, err, status))
        return True

    def sample_family(family, candidates, make_fn, analytic_of, step_of=lambda co: h):
        order = rng.permutation(len(candidates))
        done = tried = 0
        for idx in order:
            if done >= samples or tried >= samples * max_attempts:
                break
            coord = candidates[idx]
            tried += 1
            done += record(
                family, str(coord), float(analytic_of(coord)), make_fn(coord), step_of(coord)
            )

    # image
    c, hh, ww = prob.img.shape
    pix = [(k, i, j) for k in range(c) for i in range(hh) for j in range(ww)]

    def image_fn(coord):
        def f(d):
            x = prob.img.copy()
            x[coord] += d
            return prob.evaluate(img=x)
        return f

    sample_family("image", pix, image_fn, lambda co: grads["image"][co])

    # quality
    if quality_is_checkable(cfg.quality):
        record("quality", "q", float(prob.bundle.d_quality),
               lambda d: prob.evaluate(cfg=cfg.with_quality(cfg.quality + d)))
    else:
        report.notes.append(f"quality {cfg.quality:g} is at a branch point; quality check skipped")

    # tables
    cells = [(u, v) for u in range(8) for v in range(8)]
    for family, attr in (("qt_luma", "luma"), ("qt_chroma", "chroma")):
        def table_fn(coord, attr=attr):
            def f(d):
                t = getattr(qt, attr).copy()
                t[coord] += d
                return prob.evaluate(qt=qt.replace(**{attr: t}))
            return f
        sample_family(family, cells, table_fn, lambda co, fam=family: grads[fam][co])

    # color parameters
    base_vec = cp.as_vector()

    def color_fn(k):
        def f(d):
            v = base_vec.copy()
            v[k] += d
            return prob.evaluate(cp=ColorParams.from_vector(v))
        return f

    # matrix entries multiply pixel values, so their step is scaled to pixel units
    sample_family(
        "color", list(range(12)), color_fn, lambda k: grads["color"][k],
        step_of=lambda k: h / 255.0 if k < 9 else h,
    )
    return report


def random_test_image(rng: np.random.Generator, size: int = 16) -> np.ndarray:
    """Either uniform noise or a smooth color ramp with mild noise, in [0, 255]."""
    if rng.random() < 0.5:
        return rng.uniform(0.0, 255.0, (3, size, size))
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    base = []
    for _ in range(3):
        a, b, c = rng.uniform(-1.0, 1.0, 3)
        base.append(127.5 + 127.5 * np.tanh(a * xx + b * yy + c))
    img = np.stack(base) + rng.normal(0.0, 8.0, (3, size, size))
    return np.clip(img, 0.0, 255.0)


def random_quality(rng: np.random.Generator) -> float:
    while True:
        q = float(rng.uniform(1.0, 99.0))
        if quality_is_checkable(q):
            return q


def check_config(
    cfg: PipelineConfig,
    min_coords: int = 50,
    size: int = 16,
    seed: int = 0,
    loss: str = "weighted",
    tolerance: float = 1e-4,
    per_point: int = 2,
    max_points: int = 400,
) -> GradCheckReport:
    """Check ``cfg`` (its quality is resampled) at fresh random base points.

    Base points are added until every family has at least ``min_coords``
    checked coordinates, or ``max_points`` is reached.
    """
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance)
    for _ in range(max_points):
        if all(report.count(f) >= min_coords for f in FAMILIES):
            break
        img = random_test_image(rng, size)
        point_cfg = cfg.with_quality(random_quality(rng))
        sub = check_bundle(
            img, point_cfg, loss=loss, tolerance=tolerance, samples=per_point,
            seed=int(rng.integers(2**31)),
        )
        report.merge(sub)
    return report
