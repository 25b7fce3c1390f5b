import numpy as np
import pytest

from diffjpeg.codec import ours, shin_baseline
from diffjpeg.gradcheck import (
    FAMILIES,
    central_diff,
    check_bundle,
    check_config,
    extrapolated_diff,
    quality_is_checkable,
    relative_error,
)
from diffjpeg.ops import Surrogate, soft_clip, surrogate_value


def test_central_diff_examples():
    assert central_diff(lambda x: x * x, 3.0, 1e-5) == pytest.approx(6.0, abs=1e-8)
    poly = Surrogate("polynomial")
    assert central_diff(lambda x: surrogate_value(poly, x), 1.2, 1e-6) == pytest.approx(0.12, abs=1e-5)
    assert central_diff(lambda x: soft_clip(x, 1, 255, 1e-3), 300.0, 1e-6) == pytest.approx(
        1e-3, abs=1e-8)


def test_relative_error():
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(2.0, 1.0) == 0.5
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 0.0) == pytest.approx(0.1)


def test_extrapolation_beats_plain_difference():
    # a steep smooth function where a single central difference at h=1e-3 is off
    f = lambda d: (np.array([np.exp(40.0 * d)]), True)  # noqa: E731
    plain = central_diff(lambda d: f(d)[0][0], 0.0, 1e-3)
    best, err, ok = extrapolated_diff(f, 1e-3)
    assert ok and abs(best - 40.0) < 1e-9 < abs(plain - 40.0)
    assert err < 1e-6


def test_extrapolated_diff_reports_branch_changes():
    f = lambda d: (np.array([abs(d)]), d < 0)  # noqa: E731
    assert not extrapolated_diff(f, 1e-3)[2]


def test_quality_margin():
    assert not quality_is_checkable(50.0)
    assert not quality_is_checkable(50.005)
    assert not quality_is_checkable(12.0)
    assert not quality_is_checkable(11.995)
    assert quality_is_checkable(12.02)


def test_quality_fifty_is_skipped_and_noted(rng):
    img = rng.uniform(0, 255, (3, 16, 16))
    rep = check_bundle(img, ours(50), samples=2)
    assert rep.count("quality") == 0
    assert any("quality 50" in n for n in rep.notes)
    assert "quality" in rep.summary() and "note:" in rep.summary()


def test_zero_image_passes():
    rep = check_bundle(np.zeros((3, 16, 16)), ours(33.3), samples=10)
    assert rep.count("image") >= 5 and rep.passed


def test_random_image_all_families(rng):
    img = rng.uniform(0, 255, (3, 32, 32))
    rep = check_bundle(img, ours(37.3), samples=10, loss="weighted")
    assert rep.passed, rep.summary()
    for fam in FAMILIES:
        assert rep.count(fam) >= 1, fam
        assert rep.max_error(fam) < 1e-4


def test_unknown_loss():
    with pytest.raises(ValueError):
        check_bundle(np.zeros((3, 8, 8)), ours(20.5), loss="l2")


def test_report_csv_and_merge(rng):
    img = rng.uniform(0, 255, (3, 16, 16))
    a = check_bundle(img, shin_baseline(70.3), samples=2)
    b = check_bundle(img, shin_baseline(20.3), samples=2)
    n = len(a.entries) + len(b.entries)
    merged = a.merge(b)
    lines = merged.to_csv().splitlines()
    assert lines[0] == "family,coordinate,analytic,numeric,rel_error,status"
    assert len(lines) == n + 1
    assert {ln.rsplit(",", 1)[1] for ln in lines[1:]} <= {"pass", "fail", "skipped"}


def test_check_config_reaches_coverage():
    rep = check_config(ours(), min_coords=5, seed=11)
    assert rep.passed
    assert all(rep.count(f) >= 5 for f in FAMILIES)
