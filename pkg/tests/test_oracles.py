import math

import numpy as np
import pytest

from yukawa_scattering import ComplexField, Grid3
from yukawa_scattering.oracles import (CUBIC_LATTICE_ZETA, RadialQuadrature, brute_convolution,
                                       gaussian_free_closed_form, implicit_stepper,
                                       kernel_check_table, smoothed_yukawa)
from yukawa_scattering.propagators import HamiltonianSpec
from yukawa_scattering.yukawa import YukawaParams, yukawa_symbol


def test_quadrature_integrates_exponential():
    val, err = RadialQuadrature().integrate(lambda r: np.exp(-r))
    assert val == pytest.approx(1.0, rel=1e-13)
    assert err < 1e-11


def test_quadrature_handles_inverse_sqrt_endpoint():
    val, _ = RadialQuadrature().integrate(lambda r: np.exp(-r) / np.sqrt(r))
    assert val == pytest.approx(math.sqrt(math.pi), rel=1e-11)


def test_kernel_check_table_all_rows_tight():
    rows = kernel_check_table()
    names = [r[0] for r in rows]
    for want in ("l1_norm", "l3_2_norm", "kato_norm", "kato_convolution_at_1", "embedding_margin",
                 "rollnik_bound", "lp_norm_p2.5"):
        assert want in names
    for name, closed, numeric, rel in rows:
        assert rel < 1e-8, name


def test_smoothed_kernel_tends_to_kernel():
    p = YukawaParams(1.3, 0.8)
    r = np.array([0.5, 1.0, 3.0])
    assert np.allclose(smoothed_yukawa(p, r, 1e-3), 1.3 * np.exp(-0.8 * r) / r, rtol=1e-5)


def test_smoothed_kernel_far_field():
    # beyond the smoothing scale a Gaussian blur multiplies e^{-mu r} by e^{mu^2 s^2 / 2}
    p = YukawaParams(1.0, 1.0)
    s = 0.5
    assert smoothed_yukawa(p, 6.0, s) == pytest.approx(math.exp(0.125) * math.exp(-6.0) / 6.0, rel=1e-8)


def test_smoothed_kernel_rejects_origin():
    with pytest.raises(ValueError):
        smoothed_yukawa(YukawaParams(1.0, 1.0), 0.0, 0.5)


def _smooth_field(g, seed=3):
    rng = np.random.default_rng(seed)
    k = 2 * np.pi / g.box_length
    x, y, z = g.coords()
    vals = np.zeros(g.shape, dtype=complex)
    for m in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (0, 1, -1)]:
        c = rng.standard_normal() + 1j * rng.standard_normal()
        vals += c * np.exp(1j * k * (m[0] * x + m[1] * y + m[2] * z))
    return ComplexField(g, vals)


def test_brute_convolution_matches_spectral():
    g = Grid3(16, 16.0)
    f = _smooth_field(g)
    kern = YukawaParams(1.0, 0.3)
    brute = brute_convolution(f, kern, singular="lattice", images=2)
    spec = np.fft.ifftn(np.fft.fftn(f.values) * yukawa_symbol(kern, g.xi2))
    rel = np.linalg.norm(brute.values - spec) / np.linalg.norm(spec)
    assert rel < 1e-3


def test_brute_convolution_guards():
    with pytest.raises(ValueError):
        brute_convolution(ComplexField(Grid3(18, 10.0), np.zeros((18,) * 3)), YukawaParams(1, 1))
    with pytest.raises(ValueError):
        brute_convolution(ComplexField(Grid3(8, 10.0), np.zeros((8,) * 3)), YukawaParams(1, 1),
                          singular="other")


def test_lattice_zeta_value():
    assert CUBIC_LATTICE_ZETA == pytest.approx(-2.8372974794806, abs=1e-12)


def test_gaussian_closed_form_at_zero_time():
    x = np.linspace(-2, 2, 5)
    assert np.allclose(gaussian_free_closed_form(1.5, 0.0, x, 0 * x, 0 * x), np.exp(-x * x / 3.0))


def test_gaussian_closed_form_conserves_mass():
    g = Grid3(64, 40.0)
    x, y, z = g.coords()
    for t in (0.0, 0.5, 1.0):
        u = gaussian_free_closed_form(1.0, t, x, y, z)
        assert g.cell_volume * np.sum(np.abs(u) ** 2) == pytest.approx(math.pi**1.5, rel=1e-9)


def test_implicit_stepper_free_flow_is_second_order():
    g = Grid3(32, 24.0)
    x, y, z = g.coords()
    phi = ComplexField(g, gaussian_free_closed_form(1.0, 0.0, x, y, z))
    exact = gaussian_free_closed_form(1.0, 0.5, x, y, z)
    errs = []
    for dt in (0.05, 0.025):
        u = implicit_stepper(HamiltonianSpec.free(), phi, 0.5, dt)
        errs.append(np.max(np.abs(u.values - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_implicit_stepper_rejects_nonlinear():
    from yukawa_scattering.models import default_model
    g = Grid3(8, 10.0)
    with pytest.raises(ValueError):
        implicit_stepper(HamiltonianSpec.nls(default_model()), ComplexField(g, np.zeros((8,) * 3)), 1.0, 0.1)
