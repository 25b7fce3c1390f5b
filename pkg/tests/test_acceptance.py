"""Acceptance criteria on the bundled corpus.

Every test prints one ``CRITERION n: PASS|FAIL ...`` line with the measured
numbers, then asserts. Thresholds are the contract values; nothing is tuned
per run.
"""

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diffjpeg.codec import diff_encode_decode, ours_ste
from diffjpeg.core import LEVELS, SURROGATES, PipelineConfig
from diffjpeg.experiments import (
    VariantSpec,
    invert_quality,
    load_images,
    range_means,
    run_sweep,
    summary_lookup,
)
from diffjpeg.gradcheck import FAMILIES, check_config
from diffjpeg.io import decode_ppm, encode_ppm
from diffjpeg.metrics import ssim
from diffjpeg.ops import Surrogate, soft_clip, surrogate_value
from diffjpeg.reference import reference_encode_decode, reference_float
from diffjpeg.stages import dct_blocks, idct_blocks

LOW = range(1, 11)
ALL_Q = range(1, 100)


@pytest.fixture(scope="module")
def images():
    return load_images()


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return emit


def _fmt(d):
    return " ".join(f"{k}={v:.3f}" for k, v in d.items())


def test_criterion_1_oracle_equality(images, report):
    start = time.time()
    mismatches = []
    for name, img in images:
        for q in ALL_Q:
            out, _ = diff_encode_decode(img, ours_ste(q))
            if not np.array_equal(out, reference_float(img, q)):
                mismatches.append((name, q))
    elapsed = time.time() - start
    ok = not mismatches and elapsed < 60
    report(1, ok, f"{len(images)} images x 99 qualities, {len(mismatches)} mismatches, "
                  f"{elapsed:.1f}s")


def test_criterion_2_gradient_correctness(report):
    start = time.time()
    worst, fewest, failures = 0.0, None, []
    for level in ("A", "E", "F"):
        for sur in SURROGATES:
            rep = check_config(PipelineConfig(level=level, rounding_surrogate=sur), min_coords=50)
            for fam in FAMILIES:
                n = rep.count(fam)
                fewest = n if fewest is None else min(fewest, n)
                if n:
                    worst = max(worst, rep.max_error(fam))
            if not rep.passed or any(rep.count(f) < 50 for f in FAMILIES):
                failures.append(f"{level}/{sur}")
    elapsed = time.time() - start
    ok = not failures and worst < 1e-4 and elapsed < 300
    report(2, ok, f"15 configs, max rel err {worst:.2e}, min coords per family {fewest}, "
                  f"failing {failures or 'none'}, {elapsed:.1f}s")


def test_criterion_3_ablation_ordering(images, report):
    start = time.time()
    specs = [VariantSpec(lv, lv, "polynomial") for lv in LEVELS]
    rows = run_sweep(images, specs, LOW, with_ssim=False)
    m = {s.variant: s.psnr_db for s in range_means(rows) if s.q_range == "1-10"}
    a, b, c, d, e, f = (m[lv] for lv in LEVELS)
    checks = {"A<B": a < b, "B<C": b < c, "C<=D": c <= d, "D<E": d < e, "E<=F": e <= f,
              "E-A>=3": e - a >= 3.0}
    failed = [k for k, v in checks.items() if not v]
    elapsed = time.time() - start
    report(3, not failed and elapsed < 300,
           f"mean PSNR q1-10 {_fmt(m)}; violated {failed or 'none'}; {elapsed:.1f}s")


def test_criterion_4_low_quality_gap(images, report):
    natural = [(n, im) for n, im in images if n.startswith("natural_")]
    rows = run_sweep(natural, [VariantSpec("E", "ours"), VariantSpec("A", "shin")], [1],
                     with_ssim=False)
    by = {(r.variant, r.image): r.psnr_db for r in rows}
    worst_gap = min(by[("E", n)] - by[("A", n)] for n, _ in natural)
    worst_e = min(by[("E", n)] for n, _ in natural)
    ok = worst_gap >= 8.0 and worst_e >= 30.0
    report(4, ok, f"{len(natural)} natural images at q=1: min E-A gap {worst_gap:.2f} dB, "
                  f"min E {worst_e:.2f} dB")


def test_criterion_5_high_quality_convergence(images, report):
    names = ("ours", "ours-ste", "shin", "xing", "xie")
    rows = run_sweep(images, [VariantSpec(v, v) for v in names], [90], with_ssim=False)
    lowest = {v: min(r.psnr_db for r in rows if r.variant == v) for v in names}
    mean = {v: float(np.mean([r.psnr_db for r in rows if r.variant == v])) for v in names}
    gap = mean["ours"] - mean["shin"]
    ok = min(lowest.values()) >= 35.0 and gap <= 3.0
    report(5, ok, f"q=90 lowest per-image PSNR {_fmt(lowest)}; "
                  f"mean ours-shin gap {gap:.2f} dB (limit 3)")


def test_criterion_6_vanishing_gradient(images, report):
    names = ("ours-ste", "ours", "shin", "xie", "xing")
    rows = run_sweep(images, [VariantSpec(v, v) for v in names], ALL_Q, mode="vanish")
    summary = range_means(rows)
    g = {v: summary_lookup(summary, v, "1-99").grad_q_norm for v in names}
    checks = {
        "ours-ste<ours": g["ours-ste"] < g["ours"],
        "2*ours<=shin": 2.0 * g["ours"] <= g["shin"],
        "shin<xie": g["shin"] < g["xie"],
        "xie<=xing": g["xie"] <= g["xing"],
    }
    failed = [k for k, v in checks.items() if not v]
    low = {v: summary_lookup(summary, v, "1-10").grad_q_norm for v in names}
    report(6, not failed, f"mean |dL1/dq| q1-99 {_fmt(g)}; violated {failed or 'none'}; "
                          f"largest on q1-10: {max(low, key=low.get)}")


def test_criterion_7_surrogate_ablation(images, report):
    specs = [VariantSpec(s, "ours", s) for s in SURROGATES]
    rows = run_sweep(images, specs, ALL_Q, with_ssim=False)
    m = {s.variant: s.psnr_db for s in range_means(rows) if s.q_range == "1-99"}
    poly = m["polynomial"]
    ok = all(poly >= m[k] for k in ("sigmoid", "tanh", "fourier")) and poly - m["tanh"] >= 2.0
    report(7, ok, f"config E mean PSNR q1-99 {_fmt(m)}; poly-tanh {poly - m['tanh']:.2f} dB")


def test_criterion_8_quality_inversion(images, report):
    start = time.time()
    img = dict(images)["natural_astronaut"]
    target = reference_encode_decode(img, 30)
    # plain GD with a fixed step; report the best of a small step-size grid
    errors = {}
    for lr in (0.1, 1.0, 10.0, 100.0):
        res = invert_quality(img, target, VariantSpec("ours", "ours"), 30, 70, steps=200, lr=lr)
        errors[f"E(lr={lr:g})"] = res.error
    recovered = min(errors.values()) <= 2.0
    sur = invert_quality(img, target, VariantSpec("ste", "ours-ste"), 30, 70, 200, 1.0)
    const = invert_quality(img, target, VariantSpec("ste", "ours-ste", ste_backward="constant"),
                           30, 70, 200, 1.0)
    better = sur.error < const.error
    elapsed = time.time() - start
    ok = recovered and better and elapsed < 60
    report(8, ok, f"|q_hat-30| {_fmt(errors)}; STE surrogate {sur.error:.2f} vs constant "
                  f"{const.error:.2f}; {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# invariant suites, run as property tests inside one criterion

blocks = arrays(np.float64, (3, 8, 8), elements=st.floats(-128, 127, allow_nan=False))


@settings(max_examples=50, deadline=None)
@given(blocks)
def _dct_round_trip(x):
    assert np.max(np.abs(idct_blocks(dct_blocks(x)) - x)) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.floats(-100, 100), st.floats(0.5, 300), st.floats(1e-4, 1.0))
def _soft_clip_continuity(lo, width, gamma):
    hi = lo + width
    for b in (lo, hi):
        left = soft_clip(np.nextafter(b, -np.inf), lo, hi, gamma)
        right = soft_clip(np.nextafter(b, np.inf), lo, hi, gamma)
        assert abs(left - right) < 1e-12 * max(1.0, abs(b))


@settings(max_examples=50, deadline=None)
@given(st.integers(-1000, 1000), st.sampled_from(["polynomial", "linear"]))
def _surrogate_fixed_points(n, kind):
    assert surrogate_value(Surrogate(kind), float(n)) == n


images_small = arrays(np.float64, (2, 11, 12), elements=st.floats(0, 255, allow_nan=False))


@settings(max_examples=40, deadline=None)
@given(images_small, images_small)
def _ssim_symmetry(a, b):
    s = ssim(a, b)
    assert abs(s - ssim(b, a)) <= 1e-12 and -1.0 <= s <= 1.0 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.data())
def _ppm_round_trip(h, w, data):
    raw = b"P6\n%d %d\n255\n" % (w, h) + data.draw(st.binary(min_size=3 * h * w,
                                                            max_size=3 * h * w))
    assert encode_ppm(decode_ppm(raw)) == raw


def _rows_identical(a, b):
    # NaN-aware exact equality; the vanish mode leaves SSIM as NaN
    return len(a) == len(b) and all(
        (x.image, x.variant, x.quality) == (y.image, y.variant, y.quality)
        and np.array_equal(
            [x.psnr_db, x.ssim, x.grad_q_norm, x.grad_qt_norm],
            [y.psnr_db, y.ssim, y.grad_q_norm, y.grad_qt_norm], equal_nan=True)
        for x, y in zip(a, b)
    )


def _parallel_determinism(images):
    subset = [(n, im[:, :64, :64]) for n, im in images[:3]]
    specs = [VariantSpec("ours", "ours"), VariantSpec("shin", "shin")]
    for mode in ("forward", "vanish"):
        serial = run_sweep(subset, specs, [1, 37, 90], mode=mode, jobs=1)
        parallel = run_sweep(subset, specs, [1, 37, 90], mode=mode, jobs=2)
        assert _rows_identical(serial, parallel)


def test_criterion_9_invariants(images, report):
    start = time.time()
    suites = {
        "dct_round_trip": _dct_round_trip,
        "soft_clip_continuity": _soft_clip_continuity,
        "surrogate_fixed_points": _surrogate_fixed_points,
        "ssim_symmetry": _ssim_symmetry,
        "ppm_round_trip": _ppm_round_trip,
        "parallel_determinism": lambda: _parallel_determinism(images),
    }
    failed = []
    for name, fn in suites.items():
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - any failure fails the suite
            failed.append(f"{name}: {type(exc).__name__}")
    elapsed = time.time() - start
    report(9, not failed and elapsed < 120,
           f"{len(suites)} suites, failing {failed or 'none'}, {elapsed:.1f}s")
