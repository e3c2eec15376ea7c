import pytest
from hypothesis import given
from hypothesis import strategies as st

from yukawa_scattering.extrapolation import INVERSE_PARAM, PARAM_SQUARED, extrapolate


@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(0.5, 4.0))
def test_exact_power_law_small_parameter(c, A, p):
    pts = [(x, c + A * x**p) for x in (0.2, 0.1, 0.05)]
    r = extrapolate(pts)
    assert r.estimate == pytest.approx(c, abs=1e-8 * (1 + abs(c) + A))
    assert r.order == pytest.approx(p, rel=1e-6)
    assert r.flags == ()


@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(0.5, 4.0))
def test_exact_power_law_large_parameter(c, A, p):
    pts = [(lam, c + A * lam**-p) for lam in (2.0, 4.0, 8.0)]
    r = extrapolate(pts, INVERSE_PARAM)
    assert r.estimate == pytest.approx(c, abs=1e-8 * (1 + abs(c) + A))
    assert r.order == pytest.approx(p, rel=1e-6)


def test_point_order_is_irrelevant():
    pts = [(x, 1.0 + x**2) for x in (0.2, 0.1, 0.05)]
    assert extrapolate(pts[::-1]).estimate == pytest.approx(extrapolate(pts).estimate, abs=1e-14)


def test_quadratic_width_vanishes_at_exact_order():
    r = extrapolate([(x, 3.0 - 2.0 * x**2) for x in (0.2, 0.1, 0.05)])
    assert r.width < 1e-12
    assert r.covers(3.0, 1e-6)


def test_constant_data_is_indeterminate():
    r = extrapolate([(x, 0.7) for x in (0.2, 0.1, 0.05)])
    assert r.flags == ("indeterminate",)
    assert r.ok and r.estimate == 0.7 and r.width == 0.0


def test_non_monotone_flag():
    r = extrapolate([(0.2, 1.0), (0.1, 1.1), (0.05, 0.9)])
    assert "non_monotone" in r.flags
    assert not r.ok
    assert r.width == pytest.approx(0.2)


def test_growing_differences_flagged():
    r = extrapolate([(2, 1.0), (4, 1.1), (8, 1.3)], INVERSE_PARAM)
    assert "non_monotone" in r.flags


@pytest.mark.parametrize("pts", [
    [(0.1, 1.0), (0.2, 1.0)],
    [(0.2, 1.0), (0.2, 1.1), (0.1, 1.2)],
    [(0.2, 1.0), (0.05, 1.1), (0.1, 1.2)],
    [(-0.2, 1.0), (-0.1, 1.1), (-0.05, 1.15)],
])
def test_invalid_points(pts):
    with pytest.raises(ValueError):
        extrapolate(pts)


def test_unknown_model():
    with pytest.raises(ValueError):
        extrapolate([(0.2, 1), (0.1, 2), (0.05, 2.5)], "linear")


def test_covers_rule():
    r = extrapolate([(x, 1.0 + x**3 + 0.1 * x**4) for x in (0.2, 0.1, 0.05)])
    assert r.width > 0
    assert r.covers(1.0, 1e-2)
    # a width larger than the tolerance fails even when the estimate is close
    assert not r.covers(r.estimate, r.width / 2)


def test_slow_convergence_has_wide_band():
    # order ~0.4 data as seen for the NLS lambda ratio
    r = extrapolate([(lam, 0.3125 + 0.05 * lam**-0.4) for lam in (2.0, 4.0, 8.0)], INVERSE_PARAM)
    assert r.order == pytest.approx(0.4, rel=1e-6)
    assert r.width > 1e-3
