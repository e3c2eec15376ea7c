"""Recovering the nonlinear Yukawa pair from the scattering map.

Pipeline for the Hartree nonlinearity ``Q e^{-mu r}/r``:

1. ``ratio = Q / mu^2`` from the high-dilation limit of the cubic pairing,
   normalised by ``4 pi ||e^{it Lap} phi||^4_{(4,4)}``.
2. With ``b = |ratio|^{1/2}`` the weighted small-amplitude limit ``a`` of the
   pairing against ``phi_b`` equals ``Psi(Q)``, where ``Psi`` pairs the kernel
   ``alpha e^{-sqrt|alpha| r}/r`` along the flow of ``H(b)``.  ``Psi`` is odd
   and increasing, so ``|Q|`` is read off digit by digit.
3. ``mu = sqrt(|Q| / |ratio|)``.

The semi-relativistic equation follows the same steps with the flows
``U^lam`` and ``e^{-it sqrt(d^2 - Lap)}`` and the weight ``d^-6``.

Dilated data live on commensurate grids (same ``n``, box scaled), on which
the dilated problem is discretely identical to the rescaled one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .extrapolation import INVERSE_PARAM, PARAM_SQUARED, ExtrapolationResult, extrapolate
from .grid import ComplexField, dilate, norm
from .models import ModelParams
from .propagators import HamiltonianSpec, half_xi2
from .scattering import (ScatterConfig, amplitude_pairing, born_functional, density_spectrum,
                         free_l44, psi_symbol, s_free_frame, scaled_born, srh_scaled_born,
                         wave_operator)
from .yukawa import YukawaParams

__all__ = [
    "LimitProtocol",
    "DigitState",
    "RatioEstimate",
    "ReconReport",
    "PsiEvaluator",
    "CapExceededError",
    "NonMonotoneError",
    "ConvergenceError",
    "sv0_extract",
    "sv0_direct",
    "recon_ratio",
    "psi1",
    "psi1_evaluator",
    "psi2_evaluator",
    "digit_extract",
    "epsilon_limit",
    "recon_q1",
    "recon_srh",
    "recon_full",
]


class CapExceededError(ValueError):
    """The target lies beyond ``Psi(cap)``."""


class NonMonotoneError(ValueError):
    """The evaluator is not odd and strictly increasing where sampled."""


class ConvergenceError(ArithmeticError):
    """A limit sequence does not settle."""


@dataclass(frozen=True)
class LimitProtocol:
    """Measurements ``(parameter, value)`` feeding one numerical limit.

    ``extrapolation`` is ``"richardson"`` (fitted order), ``"last_value"``
    (the measurement closest to the limit, width = its last increment) or
    ``"auto"``: Richardson when the fit is clean with order at least one,
    otherwise the last value.  A fitted order below one means the data are
    not yet in their asymptotic regime and the extrapolant overshoots.
    """

    values: tuple
    mode: str = "epsilon_cubed"
    extrapolation: str = "richardson"

    def __post_init__(self):
        if self.mode not in ("epsilon_cubed", "lambda_ratio"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.extrapolation not in ("richardson", "last_value", "auto"):
            raise ValueError(f"unknown extrapolation {self.extrapolation!r}")
        p = np.array([v[0] for v in self.values], dtype=float)
        if len(p) < 1 or (len(p) > 1 and not (np.all(np.diff(p) > 0) or np.all(np.diff(p) < 0))):
            raise ValueError("parameters must be strictly monotone")
        if self.extrapolation != "last_value" and len(p) < 3:
            raise ValueError(f"{self.extrapolation} extrapolation needs at least three points")

    def _last_value(self, flags=()) -> ExtrapolationResult:
        pts = sorted(self.values, key=lambda pv: pv[0], reverse=self.mode == "epsilon_cubed")
        last = float(pts[-1][1])
        width = abs(last - float(pts[-2][1])) if len(pts) > 1 else 0.0
        return ExtrapolationResult(last, None, tuple(float(v) - last for _, v in pts), width,
                                   tuple(flags), tuple(pts))

    def evaluate(self) -> ExtrapolationResult:
        if self.extrapolation == "last_value":
            return self._last_value()
        model = PARAM_SQUARED if self.mode == "epsilon_cubed" else INVERSE_PARAM
        ex = extrapolate(self.values, model)
        if self.extrapolation == "richardson":
            return ex
        if not ex.flags and ex.order is not None and ex.order >= 1.0:
            return ex
        if ex.flags == ("indeterminate",):
            return ex
        return self._last_value(("fallback_last_value",) + ex.flags)


@dataclass
class DigitState:
    """Integer part and binary digits of ``Psi^{-1}(target)``.

    ``trusted_depth`` counts the leading digits whose decision margin
    ``|Psi(candidate) - Psi(partial)|`` exceeded the stated measurement noise.
    """

    target: float
    m0: int
    digits: list
    depth: int
    psi_evaluations: list = field(default_factory=list)
    trusted_depth: int = 0

    @property
    def value(self) -> float:
        return self.m0 + sum(q * 2.0 ** -(j + 1) for j, q in enumerate(self.digits))

    def partial_sums(self) -> list:
        out, s = [float(self.m0)], float(self.m0)
        for j, q in enumerate(self.digits):
            s += q * 2.0 ** -(j + 1)
            out.append(s)
        return out


@dataclass
class RatioEstimate:
    """Extrapolated ``Q / mu^2`` with its per-dilation table."""

    value: float
    width: float
    extrapolation: ExtrapolationResult
    table: list
    denominator: float

    def __float__(self) -> float:
        return float(self.value)


@dataclass
class ReconReport:
    ratio: float
    coupling: float
    screening: Optional[float]
    digits: Optional[DigitState]
    coupling_width: float = 0.0
    screening_width: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def _field_on(profile, grid, lam=1.0) -> ComplexField:
    if isinstance(profile, ComplexField):
        if lam != 1.0:
            raise TypeError("dilation needs an analytic profile, not sampled values")
        if profile.grid != grid:
            raise ValueError("sampled profile lives on another grid")
        return profile
    return dilate(profile, lam, grid)


def sv0_direct(model: ModelParams, cfg: ScatterConfig, phi: ComplexField) -> ComplexField:
    """Linear scattering operator ``Omega_+^* Omega_- phi``."""
    return wave_operator(1, model.v0, cfg, wave_operator(-1, model.v0, cfg, phi), adjoint=True)


def sv0_extract(model: ModelParams, cfg: ScatterConfig, phi: ComplexField,
                eps: Sequence[float] = (0.2, 0.1, 0.05)) -> ComplexField:
    """``lim eps^-1 S_1(eps phi)`` by fieldwise Richardson extrapolation.

    The order is fitted from the norms of successive differences.
    """
    eps = list(eps)
    if len(eps) < 2 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps list must be strictly decreasing with at least two entries")
    cfg = cfg.replace(horizon_check=False)
    fields = [s_free_frame(model, cfg, e * phi).phi_plus * (1.0 / e) for e in eps]
    diffs = [norm(a - b) for a, b in zip(fields, fields[1:])]
    scale = max(norm(fields[-1]), 1e-300)
    if all(d <= 1e-13 * scale for d in diffs):
        return fields[-1]
    if len(fields) < 3:
        return fields[-1]
    if not all(b < a for a, b in zip(diffs, diffs[1:])):
        raise ConvergenceError(f"successive differences do not decrease: {diffs}")
    x1, x2, x3 = eps[-3:]
    ratio = diffs[-2] / diffs[-1]
    try:
        p = brentq(lambda q: (x1**q - x2**q) / (x2**q - x3**q) - ratio, 0.05, 30.0)
    except ValueError:
        p = 2.0
    f2, f3 = fields[-2], fields[-1]
    return f3 + (f3 - f2) * (x3**p / (x2**p - x3**p))


def recon_ratio(model: ModelParams, cfg: ScatterConfig, phi, lams: Sequence[float] = (2, 4, 8),
                mode: str = "born", extrapolation: str = "auto",
                eps: Sequence[float] = (0.2, 0.1, 0.05)) -> RatioEstimate:
    """Estimate ``Q / mu^2`` of the nonlinear kernel from the dilation limit.

    ``mode="born"`` evaluates the scaled-frame Born functional (production).
    ``mode="literal"`` evaluates ``i lam^4 <(S - id)(lam^-3 phi_lam), phi_lam>``
    with the full scattering map on the commensurate grid.
    ``mode="double_limit"`` takes the small-amplitude limit of
    ``i eps^-3 <(S - id)(eps phi_lam), phi_lam>`` first and weights by
    ``lam^-5``; it needs a model without linear potential.
    The two non-Born modes need an analytic profile for ``phi``.
    """
    lams = [float(l) for l in lams]
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("dilations must be increasing")
    if mode not in ("born", "literal", "double_limit"):
        raise ValueError(f"unknown mode {mode!r}")
    srh = model.family == "srh"
    base = _field_on(phi, cfg.grid)
    denom = 4.0 * math.pi * free_l44(cfg, base, half_laplacian=srh)
    if denom < 1e-12:
        raise ValueError(f"denominator {denom:.3g} is degenerate")
    table = []
    for lam in lams:
        if mode == "born":
            num = (srh_scaled_born if srh else scaled_born)(model, cfg, base, lam)
            table.append({"lam": lam, "numerator": num})
            continue
        big = cfg.scaled(lam).replace(horizon_check=False)
        phi_lam = _field_on(phi, big.grid, lam)
        if mode == "literal":
            p, res = amplitude_pairing(model, big, phi_lam, lam**-3.0)
            num = lam**-5.0 * p.real
            table.append({"lam": lam, "numerator": num, "imag": lam**-5.0 * p.imag,
                          "defect": res.defect})
        else:
            if model.v0.Q != 0:
                raise ValueError("the double-limit formula assumes no linear potential")
            lim = epsilon_limit(model, big, phi_lam, eps)
            num = lam**-5.0 * lim.estimate
            table.append({"lam": lam, "numerator": num, "eps_width": lam**-5.0 * lim.width})
    for row in table:
        row["ratio"] = row["numerator"] / denom
    proto = LimitProtocol(tuple((r["lam"], r["ratio"]) for r in table), "lambda_ratio",
                          extrapolation)
    ex = proto.evaluate()
    return RatioEstimate(ex.estimate, ex.width, ex, table, denom)


@dataclass
class PsiEvaluator:
    """Odd increasing functional ``Psi(alpha)`` on a cached density spectrum."""

    spectrum: object
    parseval_gap: float = 0.0
    log: list = field(default_factory=list)

    def __call__(self, alpha: float) -> float:
        return self.spectrum.psi(alpha)

    def symbol(self, alpha: float):
        return psi_symbol(alpha, half_xi2(self.spectrum.grid))

    def derivative(self, alpha: float) -> float:
        """``Psi'(alpha)`` in closed form: symbol ``4 pi xi^2 / (|alpha| + xi^2)^2``."""
        xi2 = half_xi2(self.spectrum.grid)
        return self.spectrum.pair(4.0 * np.pi * xi2 / (abs(alpha) + xi2) ** 2)

    def inverse(self, value: float) -> float:
        """``Psi^{-1}(value)`` by bracketing; for diagnostics, not extraction."""
        if value == 0:
            return 0.0
        s = math.copysign(1.0, value)
        hi = 1.0
        while self(hi) < abs(value):
            hi *= 2.0
            if hi > 1e8:
                raise CapExceededError("value outside the range of Psi")
        return s * brentq(lambda a: self(a) - abs(value), 0.0, hi, xtol=1e-14)


def _psi_from_flow(spec: HamiltonianSpec, cfg: ScatterConfig, phi: ComplexField,
                   check_alphas: Sequence[float]) -> PsiEvaluator:
    xi2 = half_xi2(cfg.grid)
    syms = [psi_symbol(a, xi2) for a in check_alphas]
    ds = density_spectrum(spec, cfg.grid, phi, cfg.T, cfg.dt, physical_symbols=syms)
    gap = 0.0
    for a, phys in zip(check_alphas, ds.physical):
        freq = ds.psi(a)
        gap = max(gap, abs(phys - freq) / max(abs(freq), 1e-300))
    if gap > 1e-10:
        raise ArithmeticError(f"physical and frequency forms of Psi disagree by {gap:.3g}")
    return PsiEvaluator(ds, gap)


def psi1_evaluator(b: float, v0: YukawaParams, cfg: ScatterConfig, phi,
                   check_alphas: Sequence[float] = (1.0, -1.0, 2.5)) -> PsiEvaluator:
    """``Psi_1`` along ``e^{-itH(b)} phi``; one linear solve, cached for all ``alpha``."""
    if not b > 0:
        raise ValueError("b must be positive")
    spec = HamiltonianSpec.yukawa(v0, scale=b)
    return _psi_from_flow(spec, cfg, _field_on(phi, cfg.grid), check_alphas)


def psi2_evaluator(d: float, cfg: ScatterConfig, phi,
                   check_alphas: Sequence[float] = (1.0, -1.0, 2.5)) -> PsiEvaluator:
    """``Psi_2`` along ``e^{-it sqrt(d^2 - Lap)} phi``."""
    if not d > 0:
        raise ValueError("d must be positive")
    return _psi_from_flow(HamiltonianSpec.semirel(d), cfg, _field_on(phi, cfg.grid), check_alphas)


def psi1(alpha: float, b: float, v0: YukawaParams, cfg: ScatterConfig, phi) -> float:
    """Single evaluation of ``Psi_1``; build :func:`psi1_evaluator` for repeated use."""
    if alpha == 0:
        return 0.0
    return psi1_evaluator(b, v0, cfg, phi, check_alphas=(alpha,))(alpha)


def _verify_monotone(psi: Callable[[float], float], log: list,
                     samples: Sequence[float] = (0.25, 0.5, 1.0, 2.0)) -> None:
    prev = 0.0
    for a in sorted(samples):
        p, m = psi(a), psi(-a)
        log += [(a, p), (-a, m)]
        if abs(p + m) > 1e-12 * max(abs(p), 1e-300):
            raise NonMonotoneError(f"Psi is not odd at {a}: {p} vs {m}")
        if not p > prev:
            raise NonMonotoneError(f"Psi is not increasing near {a}")
        prev = p


def digit_extract(psi: Callable[[float], float], target: float, J: int = 8, cap: int = 64,
                  noise: float = 0.0, verify: bool = True,
                  samples: Sequence[float] = (0.25, 0.5, 1.0, 2.0),
                  tie_rtol: float = 1e-12) -> DigitState:
    """Largest ``m0 + sum q_j 2^-j`` with ``Psi`` of every partial sum ``<= target``.

    ``m0`` comes from a linear scan up to ``cap``; ties accept, where a tie
    is agreement to ``tie_rtol`` relative (roundoff of two evaluation
    paths of the same quantity).  With
    ``verify`` the oddness and monotonicity of ``Psi`` are checked at
    ``+-samples`` first.
    """
    if not (target >= 0 and math.isfinite(target)):
        raise ValueError("target must be a finite nonnegative number")
    if J < 0:
        raise ValueError("depth must be nonnegative")
    log: list = []
    if verify:
        _verify_monotone(psi, log, samples)
    bound = target * (1.0 + tie_rtol)
    prev = 0.0
    m0 = None
    for m in range(1, cap + 1):
        val = psi(float(m))
        log.append((float(m), val))
        if not val > prev:
            raise NonMonotoneError(f"Psi({m}) = {val} does not exceed Psi({m - 1}) = {prev}")
        if val > bound:
            m0 = m - 1
            break
        prev = val
    if m0 is None:
        raise CapExceededError(f"target {target:.6g} >= Psi({cap}) = {prev:.6g}")
    partial, psi_partial = float(m0), prev
    digits, trusted, still = [], 0, True
    for j in range(1, J + 1):
        cand = partial + 2.0**-j
        val = psi(cand)
        log.append((cand, val))
        if still and abs(val - psi_partial) > noise:
            trusted = j
        else:
            still = False
        if val <= bound:
            digits.append(1)
            partial, psi_partial = cand, val
        else:
            digits.append(0)
    return DigitState(float(target), m0, digits, J, log, trusted)


def epsilon_limit(model: ModelParams, cfg: ScatterConfig, phi: ComplexField,
                  eps: Sequence[float], weight: float = 1.0,
                  extrapolation: str = "richardson") -> ExtrapolationResult:
    """``lim weight * i eps^-3 <(S - id)(eps phi), phi>`` over the given amplitudes."""
    cfg = cfg.replace(horizon_check=False)
    vals = []
    for e in eps:
        p, _ = amplitude_pairing(model, cfg, phi, e)
        vals.append((float(e), weight * p.real))
    return LimitProtocol(tuple(vals), "epsilon_cubed", extrapolation).evaluate()


def _coupling_from_target(psi: PsiEvaluator, ratio: float, target: float, J: int, cap: int,
                          noise: float, ratio_width: float, diag: dict, alphas):
    digits = digit_extract(psi, abs(target), J, cap, noise, samples=alphas)
    coupling = math.copysign(digits.value, ratio)
    # Noise in the target moves the inverse by about noise / Psi'.
    slope = psi.derivative(max(digits.value, 1e-12))
    width_target = noise / slope if slope > 0 else math.inf
    # A relative error delta in the ratio rescales the kernel screening to
    # Q (1 + delta); propagate it through the cached spectrum.
    width_ratio = 0.0
    if ratio_width > 0 and digits.value > 0:
        q, rel = digits.value, ratio_width / abs(ratio)
        for delta in (-rel, rel):
            shifted = psi.spectrum.pair(4.0 * np.pi * q / (q * (1 + delta) + half_xi2(psi.spectrum.grid)))
            try:
                width_ratio = max(width_ratio, abs(psi.inverse(shifted) - q))
            except CapExceededError:
                width_ratio = math.inf
    width = 2.0**-J + width_target + width_ratio
    diag.update(width_digits=2.0**-J, width_target=width_target, width_ratio=width_ratio)
    if coupling == 0:
        return digits, coupling, None, width, math.inf
    screening = math.sqrt(abs(coupling) / abs(ratio))
    rel = 0.5 * (width / abs(coupling) + ratio_width / abs(ratio))
    return digits, coupling, screening, width, screening * rel


def _recover(model, cfg, phi, ratio, eps, J, target, ratio_width, cap, srh,
             alphas=(0.25, 0.5, 1.0, 2.0)):
    diag: dict = {}
    if ratio == 0:
        diag["screening_undetermined"] = True
        return ReconReport(0.0, 0.0, None, None, 0.0, math.inf, diag)
    s = math.sqrt(abs(ratio))
    power, weight_exp = (1, 6) if srh else (2, 7)
    big = cfg.scaled(s, time_power=power).replace(horizon_check=False)
    phi_s = _field_on(phi, big.grid, s)
    a_born = s**-weight_exp * born_functional(model, big, phi_s)
    diag.update(scale=s, a_born=a_born)
    noise = 0.0
    a_eps = None
    if eps:
        lim = epsilon_limit(model, big, phi_s, eps, weight=s**-weight_exp)
        a_eps = lim.estimate
        noise = max(abs(a_eps - a_born), lim.width)
        diag.update(a_eps=a_eps, a_eps_width=lim.width, a_eps_order=lim.order,
                    a_path_gap=abs(a_eps - a_born) / max(abs(a_born), 1e-300),
                    eps_table=list(lim.points))
    if target == "epsilon":
        if a_eps is None:
            raise ValueError("target='epsilon' needs an eps list")
        a = a_eps
    elif target == "born":
        a = a_born
    else:
        raise ValueError(f"unknown target {target!r}")
    if srh:
        psi = psi2_evaluator(s, cfg, phi)
    else:
        psi = psi1_evaluator(s, model.v0, cfg, phi)
    diag["parseval_gap"] = psi.parseval_gap
    digits, coupling, screening, width, swidth = _coupling_from_target(
        psi, ratio, a, J, cap, noise, ratio_width, diag, alphas)
    diag["target"] = a
    return ReconReport(ratio, coupling, screening, digits, width, swidth, diag)


def recon_q1(model: ModelParams, cfg: ScatterConfig, phi, ratio: float,
             eps: Sequence[float] = (0.2, 0.1, 0.05), J: int = 8, target: str = "born",
             ratio_width: float = 0.0, cap: int = 64,
             alphas: Sequence[float] = (0.25, 0.5, 1.0, 2.0)) -> ReconReport:
    """Coupling and screening of the Hartree kernel given ``ratio = Q1 / mu1^2``.

    Both the Born path ``b^-7 K[phi_b]`` and, when ``eps`` is non-empty, the
    small-amplitude limit are evaluated; ``target`` selects which one feeds
    the digit extraction and their gap sets the noise guard.
    """
    if model.family != "nls":
        raise ValueError("recon_q1 needs an nls model")
    return _recover(model, cfg, phi, ratio, eps, J, target, ratio_width, cap, False, alphas)


def recon_srh(model: ModelParams, cfg: ScatterConfig, phi, lams: Sequence[float] = (2, 4, 8),
              eps: Sequence[float] = (0.2, 0.1, 0.05), J: int = 8, target: str = "born",
              mode: str = "born", cap: int = 64, extrapolation: str = "auto",
              coupling_phi=None, alphas: Sequence[float] = (0.25, 0.5, 1.0, 2.0)) -> ReconReport:
    """Ratio, coupling and screening of the semi-relativistic Hartree kernel.

    ``coupling_phi`` (default ``phi``) is the profile used for the digit stage.
    """
    if model.family != "srh":
        raise ValueError("recon_srh needs an srh model")
    est = recon_ratio(model, cfg, phi, lams, mode=mode, extrapolation=extrapolation)
    phi2 = phi if coupling_phi is None else coupling_phi
    rep = _recover(model, cfg, phi2, est.value, eps, J, target, est.width, cap, True, alphas)
    rep.diagnostics.update(ratio_width=est.width, ratio_table=est.table,
                           denominator=est.denominator, ratio_order=est.extrapolation.order)
    return rep


def recon_full(model: ModelParams, cfg: ScatterConfig, phi, lams: Sequence[float] = (2, 4, 8),
               eps: Sequence[float] = (0.2, 0.1, 0.05), J: int = 8, target: str = "born",
               mode: str = "born", cap: int = 64, extrapolation: str = "auto",
               coupling_phi=None, alphas: Sequence[float] = (0.25, 0.5, 1.0, 2.0)) -> ReconReport:
    """Ratio then coupling and screening for either family.

    The ratio limit converges fastest for wide profiles while the digit stage
    is best conditioned for narrow ones, so ``coupling_phi`` may differ from
    ``phi``.
    """
    if model.family == "srh":
        return recon_srh(model, cfg, phi, lams, eps, J, target, mode, cap, extrapolation,
                         coupling_phi, alphas)
    est = recon_ratio(model, cfg, phi, lams, mode=mode, extrapolation=extrapolation)
    phi2 = phi if coupling_phi is None else coupling_phi
    rep = recon_q1(model, cfg, phi2, est.value, eps, J, target, est.width, cap, alphas)
    rep.diagnostics.update(ratio_width=est.width, ratio_table=est.table,
                           denominator=est.denominator, ratio_order=est.extrapolation.order)
    return rep
