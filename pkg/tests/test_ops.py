import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffjpeg.core import SURROGATES
from diffjpeg.gradcheck import SCALAR_STEP, central_diff
from diffjpeg.ops import (
    Surrogate,
    hard_clip,
    soft_clip,
    soft_clip_derivative,
    ste_apply,
    surrogate_derivative,
    surrogate_value,
    true_floor,
    true_round,
)

POLY = Surrogate("polynomial", "round")
finite = st.floats(-1e6, 1e6, allow_nan=False)


@pytest.mark.parametrize("x, expected", [(1.5, 2.0), (-1.5, -2.0), (1.2, 1.0), (2.5, 3.0),
                                         (-0.5, -1.0), (0.49999999999999994, 0.0)])
def test_true_round_ties_away_from_zero(x, expected):
    assert true_round(x) == expected


def test_true_round_arrays_and_floor():
    x = np.array([-2.5, -0.4, 0.5, 3.7])
    assert np.array_equal(true_round(x), [-3.0, -0.0, 1.0, 4.0])
    assert np.array_equal(true_floor(x), [-3.0, -1.0, 0.0, 3.0])


@pytest.mark.parametrize(
    "kind, mode, x, expected",
    [
        ("polynomial", "round", 1.2, 1.008),
        ("polynomial", "round", 2.0, 2.0),
        ("polynomial", "floor", 2.7, 2.008),
        ("fourier", "round", 0.0, 0.0),
        ("linear", "round", 3.4, 3.04),
    ],
)
def test_surrogate_values(kind, mode, x, expected):
    assert surrogate_value(Surrogate(kind, mode), x) == pytest.approx(expected, abs=1e-12)


def test_surrogate_derivative_examples():
    assert surrogate_derivative(POLY, 1.2) == pytest.approx(0.12, abs=1e-12)
    assert surrogate_derivative(POLY, 2.0) == 0.0
    assert surrogate_derivative(Surrogate("linear"), 7.3) == pytest.approx(0.1)
    fd = central_diff(lambda v: surrogate_value(POLY, v), 1.2, SCALAR_STEP)
    assert fd == pytest.approx(0.12, abs=1e-5)


def test_sigmoid_and_tanh_track_rounding():
    for kind in ("sigmoid", "tanh"):
        s = Surrogate(kind)
        assert surrogate_value(s, 3.0) == pytest.approx(3.0, abs=1e-2 if kind == "tanh" else 1e-12)
        assert surrogate_value(s, 0.7) == pytest.approx(1.0, abs=0.2)
        assert surrogate_value(s, 5.5) == pytest.approx(5.5)


def test_unknown_surrogate_rejected():
    with pytest.raises(ValueError):
        Surrogate("cubic")
    with pytest.raises(ValueError):
        Surrogate("polynomial", "ceil")


@pytest.mark.parametrize("kind", SURROGATES)
@pytest.mark.parametrize("mode", ["round", "floor"])
def test_derivative_matches_finite_difference_on_grid(kind, mode):
    s = Surrogate(kind, mode)
    xs = np.linspace(-5.0, 5.0, 2001)
    jumps = s.jump_points(-6.0, 6.0)
    # half-integer neighbourhoods, plus each kind's own jump points
    half = np.abs((xs - 0.5) - np.round(xs - 0.5))
    keep = half >= 0.05
    if jumps.size:
        keep &= np.min(np.abs(xs[:, None] - jumps[None, :]), axis=1) >= 0.05
    xs = xs[keep]
    h = SCALAR_STEP
    fd = (s.value(xs + h) - s.value(xs - h)) / (2 * h)
    assert np.max(np.abs(s.derivative(xs) - fd)) < 1e-5


@pytest.mark.parametrize("kind", ["polynomial", "linear"])
def test_integer_fixed_points(kind):
    n = np.arange(-10, 11, dtype=float)
    assert np.array_equal(surrogate_value(Surrogate(kind), n), n)


@given(finite)
def test_polynomial_error_bound(x):
    assert abs(surrogate_value(POLY, x) - true_round(x)) <= 0.125 + 1e-9 * max(1.0, abs(x))


@given(st.sampled_from(SURROGATES), st.floats(-50, 50, allow_nan=False))
def test_piece_pinning_matches_on_own_piece(kind, x):
    s = Surrogate(kind, "round")
    assert s.value(x, s.branch(x)) == pytest.approx(s.value(x), abs=1e-12)


def test_soft_clip_examples():
    assert soft_clip(300, 1, 255, 1e-3) == pytest.approx(255.045)
    assert soft_clip(100, 1, 255, 1e-3) == 100
    assert soft_clip(-2, 0, 255, 1e-3) == pytest.approx(-0.002)
    assert soft_clip_derivative(300, 1, 255, 1e-3) == pytest.approx(1e-3)
    assert soft_clip_derivative(100, 1, 255, 1e-3) == 1.0
    assert soft_clip_derivative(255, 1, 255, 1e-3) == 1.0
    assert central_diff(lambda v: soft_clip(v, 1, 255, 1e-3), 300, 1e-5) == pytest.approx(
        1e-3, abs=1e-8
    )


@given(st.floats(-100, 100), st.floats(0.5, 300), st.floats(1e-4, 1.0))
def test_soft_clip_continuity(lo, width, gamma):
    hi = lo + width
    for b in (lo, hi):
        left = soft_clip(np.nextafter(b, -np.inf), lo, hi, gamma)
        right = soft_clip(np.nextafter(b, np.inf), lo, hi, gamma)
        assert abs(left - right) < 1e-12 * max(1.0, abs(b))
        assert abs(soft_clip(b, lo, hi, gamma) - b) == 0.0


def test_ste_examples():
    assert ste_apply(true_round, POLY, "surrogate", 1.2) == (1.0, pytest.approx(0.12))
    assert ste_apply(true_round, POLY, "constant", 1.2) == (1.0, 1.0)
    assert ste_apply(true_round, POLY, "surrogate", 2.0) == (2.0, 0.0)
    with pytest.raises(ValueError):
        ste_apply(true_round, POLY, "bogus", 1.0)


@settings(max_examples=50)
@given(st.sampled_from(SURROGATES), st.lists(finite, min_size=1, max_size=20))
def test_ste_value_bit_identical(kind, xs):
    x = np.array(xs)
    for fn in (true_round, true_floor, lambda v: hard_clip(v, 0, 255)):
        value, _ = ste_apply(fn, Surrogate(kind), "surrogate", x)
        assert np.array_equal(value, fn(x))
