import numpy as np
import pytest

from yukawa_scattering import BoundaryError, ComplexField, Gaussian, Grid3, ModelParams, dilate, inner, norm
from yukawa_scattering.extrapolation import extrapolate
from yukawa_scattering.propagators import HamiltonianSpec, evolve_linear
from yukawa_scattering.scattering import (NonContractionError, ScatterConfig, SmallnessError,
                                          amplitude_pairing, born_functional, duhamel_picard,
                                          free_l44, phi_capacity, s_free_frame, s_full, s_srh,
                                          scaled_born, srh_scaled_born, wave_operator)
from yukawa_scattering.yukawa import YukawaParams

NLS = ModelParams.nls(0.5, 1.0, 1.25, 2.0)
SRH = ModelParams.srh(1.0, 1.0)
GRID = Grid3(24, 24.0)


@pytest.fixture(scope="module")
def cfg():
    # the small box wraps over the window; these checks are discrete identities on the torus
    return ScatterConfig(grid=GRID, T=4.0, dt=0.02, tail_budget=1.0)


@pytest.fixture(scope="module")
def phi():
    return dilate(Gaussian(1.0, normalized=True), 1.0, GRID)


def test_config_guards():
    with pytest.raises(ValueError):
        ScatterConfig(grid=GRID, T=2.0)
    with pytest.raises(ValueError):
        ScatterConfig(grid=GRID, dt=0.05)
    with pytest.raises(ValueError):
        ScatterConfig(grid=GRID, T=4.0, dt=0.015)


def test_scaled_config_tracks_base_units(cfg):
    big = cfg.scaled(2.0)
    assert big.grid.box_length == 48.0 and big.T == 16.0 and big.dt == 0.08
    assert big.steps == cfg.steps


def test_linear_equation_has_trivial_scattering(cfg, phi):
    m = ModelParams.nls(0.5, 1.0, 0.0, 2.0)
    res = s_full(m, cfg, 0.1 * phi)
    assert norm(res.phi_plus - 0.1 * phi) < 1e-10


def test_zero_datum(cfg):
    res = s_full(NLS, cfg, ComplexField(GRID, np.zeros(GRID.shape)))
    assert norm(res.phi_plus) == 0.0


def test_norm_preservation(cfg, phi):
    res = s_full(NLS, cfg, 0.2 * phi)
    assert res.diagnostics["norm_drift"] < 1e-8
    assert res.defect >= 0 and res.horizon_sensitivity >= 0


def test_smallness_refusal(cfg, phi):
    with pytest.raises(SmallnessError):
        s_full(NLS, cfg, 0.5 * phi)


def test_boundary_refusal(phi):
    tight = ScatterConfig(grid=GRID, T=4.0, dt=0.02)
    with pytest.raises(BoundaryError, match="suggested box_length"):
        s_full(NLS, tight, 0.1 * phi)


def test_family_checks(cfg, phi):
    with pytest.raises(ValueError):
        s_full(SRH, cfg, phi * 0.1)
    with pytest.raises(ValueError):
        s_srh(NLS, cfg, phi * 0.1)


@pytest.fixture(scope="module")
def pairings(cfg, phi):
    eps = (0.2, 0.1, 0.05)
    return eps, [amplitude_pairing(NLS, cfg, phi, e)[0] for e in eps]


def test_cubic_leading_order(pairings):
    eps, ps = pairings
    v = [e**3 * abs(p) for e, p in zip(eps, ps)]
    slope = np.polyfit(np.log(eps), np.log(v), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.05)


def test_born_matches_small_amplitude_limit(cfg, phi, pairings):
    eps, ps = pairings
    K = born_functional(NLS, cfg, phi)
    assert abs(ps[1].real - K) / abs(K) < 0.1
    lim = extrapolate([(e, p.real) for e, p in zip(eps, ps)])
    assert lim.order == pytest.approx(2.0, abs=0.05)
    assert abs(lim.estimate - K) / abs(K) < 1e-2


def test_born_sign_follows_coupling(cfg, phi):
    assert born_functional(NLS, cfg, phi) > 0
    flipped = ModelParams.nls(0.5, 1.0, -1.25, 2.0)
    assert born_functional(flipped, cfg, phi) == pytest.approx(-born_functional(NLS, cfg, phi), rel=1e-12)


def test_born_homogeneity(cfg, phi):
    assert born_functional(NLS, cfg, 2.0 * phi) == pytest.approx(16 * born_functional(NLS, cfg, phi), rel=1e-10)


def test_born_vanishes_without_kernel(cfg, phi):
    assert born_functional(ModelParams.nls(0.5, 1.0, 0.0, 2.0), cfg, phi) == 0.0


def test_scaled_born_unit_dilation_is_born(cfg, phi):
    free = ModelParams.nls(0.0, 1.0, 1.25, 2.0)
    assert scaled_born(free, cfg, phi, 1.0) == pytest.approx(born_functional(free, cfg, phi), rel=1e-12)


def test_scaled_born_tends_to_ratio_limit(cfg):
    wide = dilate(Gaussian(4.0, normalized=True), 1.0, GRID)
    target = 4 * np.pi * 1.25 / 4.0 * free_l44(cfg, wide)
    gaps = [abs(scaled_born(NLS, cfg, wide, lam) - target) / target for lam in (2.0, 4.0, 8.0)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02


def test_srh_scaled_born_monotone_defect(cfg, phi):
    target = 4 * np.pi * free_l44(cfg, phi, half_laplacian=True)
    gaps = [abs(srh_scaled_born(SRH, cfg, phi, lam) - target) for lam in (2.0, 4.0, 8.0)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_srh_scattering(cfg, phi):
    res = s_srh(ModelParams.srh(0.0, 1.0), cfg, 0.1 * phi)
    assert norm(res.phi_plus - 0.1 * phi) < 1e-10
    p, _ = amplitude_pairing(SRH, cfg, phi, 0.1)
    K = born_functional(SRH, cfg, phi)
    assert abs(p.real - K) / abs(K) < 0.1


def test_wave_operator_identity_without_potential(cfg, phi):
    out = wave_operator(-1, YukawaParams(0.0, 1.0), cfg, phi)
    assert norm(out - phi) < 1e-12


def test_wave_operator_isometry_and_roundtrip(phi):
    c8 = ScatterConfig(grid=GRID, T=8.0, dt=0.02, tail_budget=1.0)
    v0 = NLS.v0
    for sign in (-1, 1):
        w = wave_operator(sign, v0, c8, phi)
        assert abs(norm(w) / norm(phi) - 1) < 1e-3
        back = wave_operator(sign, v0, c8, w, adjoint=True)
        assert norm(back - phi) < 2e-3


def test_free_frame_map_without_potential(cfg, phi):
    free = ModelParams.nls(0.0, 1.0, 1.25, 2.0)
    a = s_free_frame(free, cfg, 0.1 * phi).phi_plus
    b = s_full(free, cfg, 0.1 * phi).phi_plus
    assert norm(a - b) < 1e-12


def test_free_frame_factorization(cfg, phi):
    res = s_free_frame(NLS, cfg, 0.1 * phi, check=True)
    assert res.diagnostics["factorization_gap"] < 5e-3


def test_picard_zeroth_iterate_is_linear(cfg, phi):
    res = duhamel_picard(NLS, cfg, 0.1 * phi, 0)
    lin = evolve_linear(HamiltonianSpec.yukawa(NLS.v0), 0.1 * phi, 4.0, 0.02).final
    assert norm(res.final - lin) < 1e-10


def test_picard_contracts_and_converges(cfg, phi):
    res = duhamel_picard(NLS, cfg, 0.1 * phi, 3)
    inc = res.diagnostics["increments"]
    assert inc[0] > inc[1] > inc[2]
    direct = s_full(NLS, cfg, 0.1 * phi).phi_plus
    assert norm(res.diagnostics["phi_plus"][-1] - direct) < 1e-4 * 0.1


def test_picard_first_iterate_order(cfg, phi):
    eps = (0.2, 0.1, 0.05)
    gaps = []
    for e in eps:
        res = duhamel_picard(NLS, cfg, e * phi, 1)
        direct = s_full(NLS, cfg.replace(horizon_check=False), e * phi).phi_plus
        gaps.append(norm(res.diagnostics["phi_plus"][1] - direct))
    slope = np.polyfit(np.log(eps), np.log(gaps), 1)[0]
    assert slope == pytest.approx(5.0, abs=0.5)


def test_picard_iteration_bounds(cfg, phi):
    with pytest.raises(ValueError):
        duhamel_picard(NLS, cfg, 0.1 * phi, 6)


def test_capacity_at_origin_is_free_l44(cfg, phi):
    free = YukawaParams(0.0, 1.0)
    assert phi_capacity(free, cfg, phi, 1.0) == pytest.approx(free_l44(cfg, phi), rel=1e-10)


def test_capacity_is_bounded_over_sweep(cfg, phi):
    vals = [phi_capacity(NLS.v0, cfg, phi, lam, (y, 0.0, 0.0)) for lam in (1.0, 2.0, 4.0) for y in (0.0, 2.0)]
    assert max(vals) < 2 * free_l44(cfg, phi)
