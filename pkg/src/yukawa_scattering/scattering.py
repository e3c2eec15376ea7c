"""Forward scattering maps, wave operators and Born-type functionals.

All maps are realised on the finite window ``[-T, T]``.  The nonlinear
scattering map dresses with the linear Strang flow:
``u(-T) = L^{-N} phi_-``, nonlinear steps to ``+T``, then
``phi_+ = L^{-N} u(T)`` with ``L`` one linear step and ``N = T / dt``.

The Born functionals are Riemann sums over the midpoint times of the same
scheme.  With ``t = 0`` on a step boundary they are exactly the first-order
term of the discrete scattering map, so the small-amplitude limit of
``i eps^-3 <(S - id)(eps phi), phi>`` converges to them with no time-step
bias.  Each linear density time series is reduced to its time-integrated
power spectrum once; any radial kernel pairing is then a single weighted sum.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import BoundaryError, ComplexField, Grid3, inner, norm, translate
from .models import ModelParams
from .propagators import EvolutionResult, HamiltonianSpec, SplitStep, half_weights, half_xi2
from .yukawa import YukawaParams, yukawa_symbol

__all__ = [
    "ScatterConfig",
    "ScatterResult",
    "SmallnessError",
    "NonContractionError",
    "DensitySpectrum",
    "s_full",
    "s_srh",
    "wave_operator",
    "s_free_frame",
    "duhamel_picard",
    "amplitude_pairing",
    "density_spectrum",
    "born_functional",
    "scaled_born",
    "srh_scaled_born",
    "phi_capacity",
    "free_l44",
    "tail_fraction",
    "linear_spec",
    "psi_symbol",
]

_TOL_STEPS = 1e-9


def psi_symbol(alpha: float, xi2):
    """Symbol of convolution by ``alpha e^{-sqrt|alpha| r} / r``."""
    return 4.0 * np.pi * alpha / (abs(alpha) + xi2)


class SmallnessError(ValueError):
    """Scattering datum too large for the contraction regime."""


class NonContractionError(ArithmeticError):
    """Picard iterates stopped contracting."""


@dataclass(frozen=True)
class ScatterConfig:
    """Window, step and guards for one scattering computation.

    ``time_unit`` marks a commensurate rescaled frame: the horizon and step
    limits ``T >= 4`` and ``dt <= 0.02`` are checked on ``T / time_unit`` and
    ``dt / time_unit``, the values they correspond to in the base frame.
    """

    grid: Grid3 = field(default_factory=lambda: Grid3(48, 40.0))
    T: float = 4.0
    dt: float = 0.005
    epsilon: float = 0.1
    lam: float = 1.0
    richardson: bool = True
    smallness: float = 0.25
    tail_budget: float = 1e-8
    tail_margin: float = 2.0
    horizon_check: bool = True
    time_unit: float = 1.0

    def __post_init__(self):
        if self.T / self.time_unit < 4.0 - 1e-12:
            raise ValueError(f"horizon T={self.T} is below 4 (in base-frame units)")
        if not 0 < self.dt / self.time_unit <= 0.02 + 1e-15:
            raise ValueError(f"dt={self.dt} must be in (0, 0.02] (in base-frame units)")
        m = self.T / self.dt
        if abs(m - round(m)) > _TOL_STEPS * max(1.0, m):
            raise ValueError(f"T/dt = {m} must be an integer so t = 0 is a step boundary")

    @property
    def steps(self) -> int:
        """Steps per half window."""
        return int(round(self.T / self.dt))

    def replace(self, **kw) -> "ScatterConfig":
        return dataclasses.replace(self, **kw)

    def scaled(self, factor: float, time_power: int = 2) -> "ScatterConfig":
        """Commensurate frame: box and tail margin times ``factor``, ``T`` and ``dt`` times ``factor**time_power``."""
        s = factor**time_power
        return dataclasses.replace(self, grid=self.grid.scaled(factor), T=self.T * s,
                                   dt=self.dt * s, time_unit=self.time_unit * s,
                                   tail_margin=self.tail_margin * factor)


@dataclass
class ScatterResult:
    """``phi_plus`` with its truncation diagnostics.

    ``defect`` estimates the Duhamel mass left outside the window as
    ``(T/2) (||F(u(-T))|| + ||F(u(T))||)``, the tail integral of a forcing
    decaying like ``t^-3``.  ``horizon_sensitivity`` is
    ``||phi_plus(T) - phi_plus(T/2)||`` (``nan`` when not computed).
    """

    phi_plus: ComplexField
    defect: float
    horizon_sensitivity: float
    diagnostics: dict = field(default_factory=dict)


def linear_spec(model: ModelParams) -> HamiltonianSpec:
    """The linear flow dressing a model's scattering map."""
    if model.family == "nls":
        return HamiltonianSpec.yukawa(model.v0)
    return HamiltonianSpec.semirel(1.0)


def _nonlinear_spec(model: ModelParams) -> HamiltonianSpec:
    return HamiltonianSpec.nls(model) if model.family == "nls" else HamiltonianSpec.srh(model)


def tail_fraction(grid: Grid3, spec: HamiltonianSpec, phi: ComplexField, T: float,
                  margin: float = 2.0) -> float:
    """Largest relative mass outside ``|x| > L/2 - margin`` at ``t = -T, 0, T``.

    The potential-free part of ``spec`` propagates exactly, which is how far
    the in/out states spread.
    """
    m = norm(phi) ** 2
    if m == 0:
        return 0.0
    free = HamiltonianSpec(spec.kind if spec.kind != "yukawa" else "free", scale=spec.scale,
                           mass=spec.mass)
    outside = grid.radius > 0.5 * grid.box_length - margin
    ph = sfft.fftn(phi.values)
    omega = free.dispersion(grid.xi2)
    worst = 0.0
    for t in (-T, 0.0, T):
        u = sfft.ifftn(ph * np.exp(-1j * t * omega))
        worst = max(worst, grid.cell_volume * float(np.sum(np.abs(u[outside]) ** 2)) / m)
    return worst


def _guard(cfg: ScatterConfig, spec: HamiltonianSpec, phi: ComplexField) -> dict:
    if phi.grid != cfg.grid:
        raise ValueError("datum lives on a different grid than the configuration")
    n = norm(phi)
    if n > cfg.smallness:
        raise SmallnessError(f"||phi_-|| = {n:.4g} exceeds the smallness threshold {cfg.smallness:g}")
    tail = tail_fraction(cfg.grid, spec, phi, cfg.T, cfg.tail_margin)
    if tail > cfg.tail_budget:
        grow = max(2.0, math.sqrt(math.log(tail / cfg.tail_budget) + 1.0))
        raise BoundaryError(
            f"tail mass {tail:.3g} beyond |x| > L/2 - {cfg.tail_margin:g} exceeds the budget "
            f"{cfg.tail_budget:.3g}; suggested box_length >= {grow * cfg.grid.box_length:.4g}")
    return {"tail_mass": tail, "norm_in": n}


def _forcing_norm(stepper: SplitStep, u: np.ndarray) -> float:
    rho_hat = stepper.density_hat(u)
    f = stepper.hartree_potential(rho_hat) * u
    return math.sqrt(stepper.grid.cell_volume * float(np.sum(np.abs(f) ** 2)))


def _scatter_raw(spec: HamiltonianSpec, grid: Grid3, phi: np.ndarray, T: float, dt: float):
    n = int(round(T / dt))
    back = SplitStep(spec.linear_part(), grid, -dt)
    nl = SplitStep(spec, grid, dt)
    u = back.run(phi, n)
    f_in = _forcing_norm(nl, u)
    u = nl.run(u, 2 * n)
    f_out = _forcing_norm(nl, u)
    return back.run(u, n), 0.5 * T * (f_in + f_out)


def _scatter(spec: HamiltonianSpec, cfg: ScatterConfig, phi_minus: ComplexField) -> ScatterResult:
    phi_minus = phi_minus.physical()
    diag = _guard(cfg, spec.linear_part(), phi_minus)
    out, defect = _scatter_raw(spec, cfg.grid, phi_minus.values, cfg.T, cfg.dt)
    phi_plus = ComplexField(cfg.grid, out)
    sens = float("nan")
    if cfg.horizon_check:
        half = cfg.T / 2
        m = half / cfg.dt
        if abs(m - round(m)) < _TOL_STEPS * max(1.0, m):
            short, _ = _scatter_raw(spec, cfg.grid, phi_minus.values, half, cfg.dt)
            sens = math.sqrt(cfg.grid.cell_volume * float(np.sum(np.abs(out - short) ** 2)))
    n_in = diag["norm_in"]
    diag["norm_drift"] = abs(norm(phi_plus) - n_in) / n_in if n_in else 0.0
    return ScatterResult(phi_plus, defect, sens, diag)


def s_full(model: ModelParams, cfg: ScatterConfig, phi_minus: ComplexField) -> ScatterResult:
    """Scattering map of the Yukawa-Hartree equation with the linear Yukawa potential."""
    if model.family != "nls":
        raise ValueError("s_full needs an nls model; use s_srh")
    return _scatter(HamiltonianSpec.nls(model), cfg, phi_minus)


def s_srh(model: ModelParams, cfg: ScatterConfig, phi_minus: ComplexField) -> ScatterResult:
    """Scattering map of the semi-relativistic Hartree equation."""
    if model.family != "srh":
        raise ValueError("s_srh needs an srh model")
    return _scatter(HamiltonianSpec.srh(model), cfg, phi_minus)


def amplitude_pairing(model: ModelParams, cfg: ScatterConfig, phi: ComplexField, eps: float):
    """``i eps^-3 <(S - id)(eps phi), phi>`` and the underlying :class:`ScatterResult`."""
    scatter = s_full if model.family == "nls" else s_srh
    res = scatter(model, cfg, eps * phi)
    return 1j * inner(res.phi_plus - eps * phi, phi) / eps**3, res


def _free_flow(phi: np.ndarray, t: float, grid: Grid3) -> np.ndarray:
    return sfft.ifftn(sfft.fftn(phi) * np.exp(-1j * t * grid.xi2))


def _wave_raw(sign: int, v0: YukawaParams, cfg: ScatterConfig, phi: np.ndarray, adjoint: bool):
    g, T, n = cfg.grid, cfg.T, cfg.steps
    spec = HamiltonianSpec.yukawa(v0)
    # Omega_sign = e^{i sign T H} e^{-i sign T H_0}: free flow to sign*T, then H back to 0.
    # The adjoint runs the composition in reverse.
    if not adjoint:
        u = _free_flow(phi, sign * T, g)
        if not spec.has_potential:
            return _free_flow(u, -sign * T, g)
        return SplitStep(spec, g, -sign * cfg.dt).run(u, n)
    if not spec.has_potential:
        u = _free_flow(phi, sign * T, g)
    else:
        u = SplitStep(spec, g, sign * cfg.dt).run(phi, n)
    return _free_flow(u, -sign * T, g)


def wave_operator(sign: int, v0: YukawaParams, cfg: ScatterConfig, phi: ComplexField,
                  adjoint: bool = False) -> ComplexField:
    """Finite-window wave operator ``Omega_sign`` (or its adjoint) applied to ``phi``.

    ``Omega_- phi``: free flow back to ``-T``, then the ``H`` flow forward to 0.
    ``Omega_+`` mirrors it at ``+T``.  Both are exactly unitary on the grid.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    phi = phi.physical()
    if phi.grid != cfg.grid:
        raise ValueError("datum lives on a different grid than the configuration")
    return ComplexField(cfg.grid, _wave_raw(sign, v0, cfg, phi.values, adjoint))


def s_free_frame(model: ModelParams, cfg: ScatterConfig, phi_minus: ComplexField,
                 check: bool = False) -> ScatterResult:
    """``S_1 = Omega_+^* S_F Omega_-``.

    With ``check=True`` also evaluates ``Omega_+ S_1 Omega_-^* phi`` against
    ``S_F phi`` and stores the distance as ``diagnostics["factorization_gap"]``.
    """
    v0 = model.v0
    inner_cfg = cfg.replace(horizon_check=False)
    mapped = wave_operator(-1, v0, cfg, phi_minus)
    res = s_full(model, inner_cfg, mapped)
    out = wave_operator(1, v0, cfg, res.phi_plus, adjoint=True)
    diag = dict(res.diagnostics)
    if check:
        pre = wave_operator(-1, v0, cfg, phi_minus, adjoint=True)
        s1 = wave_operator(1, v0, cfg, s_full(model, inner_cfg, wave_operator(-1, v0, cfg, pre)).phi_plus,
                           adjoint=True)
        recon = wave_operator(1, v0, cfg, s1)
        direct = s_full(model, inner_cfg, phi_minus).phi_plus
        diag["factorization_gap"] = norm(recon - direct)
    return ScatterResult(out, res.defect, res.horizon_sensitivity, diag)


def duhamel_picard(model: ModelParams, cfg: ScatterConfig, phi_minus: ComplexField, k: int):
    """``k``-th Picard iterate of the Duhamel map on the window ``[-T, T]``.

    All iterates are stepped jointly: iterate ``j + 1`` is the linear flow plus
    the Hartree increment of iterate ``j``, discretised so that the fixed
    point is the Strang solution of :func:`s_full`.  Returns an
    :class:`~yukawa_scattering.propagators.EvolutionResult` with
    ``final = u^(k)(T)``; ``diagnostics`` holds the successive increments
    ``||u^(j+1)(T) - u^(j)(T)||`` and the dressed ``phi_plus`` of every iterate.
    """
    if not 0 <= k <= 5:
        raise ValueError("iteration count must be in 0..5")
    phi_minus = phi_minus.physical()
    spec = _nonlinear_spec(model)
    diag = _guard(cfg, spec.linear_part(), phi_minus)
    g, n, dt = cfg.grid, cfg.steps, cfg.dt
    lin = SplitStep(spec.linear_part(), g, dt)
    nl = SplitStep(spec, g, dt)
    start = SplitStep(spec.linear_part(), g, -dt).run(phi_minus.values, n)
    half, vphase = lin.half, lin.vphase
    us = [start.copy() for _ in range(k + 1)]
    for _ in range(2 * n):
        a = [sfft.ifftn(sfft.fftn(u) * half) for u in us]
        new = []
        for j in range(k + 1):
            w = a[j]
            if j > 0:
                e = np.exp(-1j * dt * nl.hartree_potential(nl.density_hat(a[j - 1])))
                w = w + (e - 1.0) * a[j - 1]
            if vphase is not None:
                w = w * vphase
            new.append(sfft.ifftn(sfft.fftn(w) * half))
        us = new
    back = SplitStep(spec.linear_part(), g, -dt)
    h3 = g.cell_volume
    increments = [math.sqrt(h3 * float(np.sum(np.abs(us[j + 1] - us[j]) ** 2))) for j in range(k)]
    contracting = all(increments[j + 1] < increments[j] for j in range(len(increments) - 1))
    if not contracting:
        raise NonContractionError(f"Picard increments do not contract: {increments}")
    diag.update(increments=increments,
                phi_plus=[ComplexField(g, back.run(u, n)) for u in us])
    return EvolutionResult(final=ComplexField(g, us[-1]), diagnostics=diag)


@dataclass(frozen=True)
class DensitySpectrum:
    """Time-integrated power spectrum of ``|w(t)|^2`` along a linear flow.

    ``power`` lives on the real-FFT half lattice and already carries the
    multiplicities, ``h^3 / N`` and ``dt``, so for any radial kernel symbol
    ``K`` the spacetime pairing ``int <K * |w|^2, |w|^2> dt`` is
    ``sum(K * power)``.
    """

    grid: Grid3
    power: np.ndarray
    T: float
    dt: float
    physical: tuple = ()

    def pair(self, symbol) -> float:
        return float(np.sum(symbol * self.power))

    def pair_kernel(self, params: YukawaParams) -> float:
        return self.pair(yukawa_symbol(params, half_xi2(self.grid)))

    def l44(self) -> float:
        """``||w||^4_{L^4_t L^4_x}`` over the window."""
        return float(np.sum(self.power))

    def psi(self, alpha: float) -> float:
        """Pairing with ``alpha e^{-sqrt|alpha| r} / r``: symbol ``4 pi alpha / (|alpha| + xi^2)``."""
        if alpha == 0:
            return 0.0
        return self.pair(psi_symbol(alpha, half_xi2(self.grid)))


def density_spectrum(spec: HamiltonianSpec, grid: Grid3, phi: ComplexField, T: float, dt: float,
                     physical_symbols: Sequence[np.ndarray] = ()) -> DensitySpectrum:
    """Run the linear flow ``spec`` from ``t = 0`` forward and backward to ``+-T``.

    Midpoint densities of the backward run coincide with those of a forward
    run started at ``-T``.  ``physical_symbols`` are additionally paired in
    physical space, ``h^3 sum_x rho (K * rho)``, and returned in ``physical``.
    """
    if spec.nonlinear:
        raise ValueError("density spectra are defined for linear flows")
    n = int(round(T / dt))
    if abs(T / dt - n) > _TOL_STEPS * max(1.0, n):
        raise ValueError("T/dt must be an integer")
    phi = phi.physical()
    power = np.zeros((grid.n, grid.n, grid.n // 2 + 1))
    phys = np.zeros(len(physical_symbols))
    h3 = grid.cell_volume

    def observe(_k, w, rho_hat):
        power[...] += rho_hat.real**2 + rho_hat.imag**2
        if len(physical_symbols):
            rho = w.real**2 + w.imag**2
            for i, s in enumerate(physical_symbols):
                phys[i] += h3 * float(np.sum(rho * sfft.irfftn(s * rho_hat, s=grid.shape)))

    for sgn in (1.0, -1.0):
        SplitStep(spec, grid, sgn * dt).run(phi.values, n, observe, need_density=True)
    power *= half_weights(grid) * dt
    return DensitySpectrum(grid, power, T, dt, tuple(float(p * dt) for p in phys))


def born_functional(model: ModelParams, cfg: ScatterConfig, phi: ComplexField) -> float:
    """``K[phi] = int <(K1 * |v|^2) v, v> dt`` with ``v`` the linear flow of ``phi``."""
    spec = linear_spec(model)
    return density_spectrum(spec, cfg.grid, phi, cfg.T, cfg.dt).pair_kernel(model.v1)


def _scaled_kernel(v1: YukawaParams, lam: float) -> YukawaParams:
    # lam^2 * Q1 e^{-lam mu1 r} / r
    return YukawaParams(lam**2 * v1.Q, lam * v1.mu)


def scaled_born(model: ModelParams, cfg: ScatterConfig, phi: ComplexField, lam: float) -> float:
    """``B(lam) = int <(lam^2 Q1 e^{-lam mu1 r}/r) * |w|^2, |w|^2> dt``, ``w = e^{-itH(lam)} phi``."""
    if model.family != "nls":
        raise ValueError("scaled_born needs an nls model; use srh_scaled_born")
    if lam < 1:
        raise ValueError("lam must be >= 1")
    spec = HamiltonianSpec.yukawa(model.v0, scale=lam)
    ds = density_spectrum(spec, cfg.grid, phi, cfg.T, cfg.dt)
    return ds.pair_kernel(_scaled_kernel(model.v1, lam))


def srh_scaled_born(model: ModelParams, cfg: ScatterConfig, phi: ComplexField, lam: float) -> float:
    """Scaled-frame Born functional along ``U^lam(t) = e^{it(lam^2 - lam sqrt(lam^2 - Lap))}``."""
    if model.family != "srh":
        raise ValueError("srh_scaled_born needs an srh model")
    if not lam >= 1:
        raise ValueError("lam must be >= 1")
    spec = HamiltonianSpec.semirel_scaled(lam)
    ds = density_spectrum(spec, cfg.grid, phi, cfg.T, cfg.dt)
    return ds.pair_kernel(_scaled_kernel(model.v1, lam))


def free_l44(cfg: ScatterConfig, phi: ComplexField, half_laplacian: bool = False) -> float:
    """``||e^{itLap} phi||^4_{(4,4)}`` (or with ``e^{i(t/2)Lap}``) on the window."""
    spec = HamiltonianSpec.semirel_scaled(math.inf) if half_laplacian else HamiltonianSpec.free()
    return density_spectrum(spec, cfg.grid, phi, cfg.T, cfg.dt).l44()


def phi_capacity(v0: YukawaParams, cfg: ScatterConfig, phi: ComplexField, lam: float,
                 y=(0.0, 0.0, 0.0)) -> float:
    """``int |e^{-itH(lam,y)} tau_{y/lam} phi|^2 |e^{-itH(lam)} phi|^2 d(t, x)``."""
    g = cfg.grid
    phi = phi.physical()
    shifted = translate(phi, np.asarray(y, dtype=float) / lam)
    specs = (HamiltonianSpec.yukawa(v0, scale=lam, shift=y), HamiltonianSpec.yukawa(v0, scale=lam))
    total = 0.0
    h3 = g.cell_volume
    for sgn in (1.0, -1.0):
        a, b = (SplitStep(s, g, sgn * cfg.dt) for s in specs)
        wa = sfft.ifftn(sfft.fftn(shifted.values) * a.half)
        wb = sfft.ifftn(sfft.fftn(phi.values) * b.half)
        for _ in range(cfg.steps):
            total += h3 * float(np.sum(np.abs(wa) ** 2 * np.abs(wb) ** 2))
            if a.vphase is not None:
                wa = wa * a.vphase
            if b.vphase is not None:
                wb = wb * b.vphase
            wa = sfft.ifftn(sfft.fftn(wa) * a.full)
            wb = sfft.ifftn(sfft.fftn(wb) * b.full)
    return total * cfg.dt
