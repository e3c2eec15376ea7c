"""Closed-form analytics of the Yukawa kernel ``Q exp(-mu r) / r``.

Everything here works with the positive-form kernel.  The minus sign that
turns it into the linear potential ``V0 = -Q0 exp(-mu0 r)/r`` is applied in
:mod:`yukawa_scattering.propagators` and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Multiplier

__all__ = [
    "YukawaParams",
    "KernelNorms",
    "Constants",
    "Smallness",
    "yukawa_value",
    "yukawa_multiplier",
    "yukawa_symbol",
    "lp_norm_closed",
    "constants",
    "kernel_norms",
    "convolution_identity",
    "check_smallness",
]


@dataclass(frozen=True)
class YukawaParams:
    """Coupling ``Q`` and screening ``mu > 0`` of ``Q exp(-mu r) / r``."""

    Q: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"screening mu must be positive, got {self.mu}")

    @property
    def ratio(self) -> float:
        """``Q / mu^2``, the quantity the lambda-limit recovers."""
        return self.Q / self.mu**2

    def scaled(self, lam: float) -> "YukawaParams":
        """Pair for ``lam^2 K(lam x)`` with ``K = Q e^{-mu r}/r``: ``(lam Q, lam mu)``."""
        return YukawaParams(lam * self.Q, lam * self.mu)


def yukawa_value(params: YukawaParams, r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("Yukawa kernel is singular at r <= 0")
    out = params.Q * np.exp(-params.mu * r) / r
    return float(out) if out.ndim == 0 else out


def yukawa_symbol(params: YukawaParams, xi2):
    """``4 pi Q / (mu^2 + |xi|^2)`` -- Fourier symbol of convolution by the kernel."""
    return 4.0 * np.pi * params.Q / (params.mu**2 + xi2)


def yukawa_multiplier(params: YukawaParams) -> Multiplier:
    return Multiplier.radial_symbol(lambda xi2: yukawa_symbol(params, xi2),
                                    f"yukawa(Q={params.Q:g},mu={params.mu:g})")


def lp_norm_closed(p: float) -> float:
    """``||e^{-r}/r||_p = (4 pi p^{p-3} Gamma(3 - p))^{1/p}`` for ``1 <= p < 3``."""
    if p >= 3:
        raise ValueError("e^{-r}/r is not in L^p for p >= 3")
    if p < 1:
        raise ValueError("p must be >= 1")
    return (4.0 * math.pi * p ** (p - 3.0) * math.gamma(3.0 - p)) ** (1.0 / p)


@dataclass(frozen=True)
class Constants:
    C_b: float
    HLS: float
    rollnik_bound: float
    kato: float
    embedding_margin: float


def constants() -> Constants:
    """Sobolev, HLS, Rollnik, Kato and embedding constants for ``e^{-r}/r``."""
    # Sharp Sobolev constant for ||u||_6 <= C_b ||grad u||: C_b^2 = (4/sqrt(pi))^{2/3} / (3 pi).
    c_b = math.sqrt((4.0 / math.sqrt(math.pi)) ** (2.0 / 3.0) / (3.0 * math.pi))
    return Constants(
        C_b=c_b,
        HLS=2.0 ** (2.0 / 3.0) * math.pi ** (4.0 / 3.0),
        rollnik_bound=4.0 * math.pi * math.pi ** (2.0 / 3.0) / 3.0,
        kato=4.0 * math.pi,
        embedding_margin=c_b**2 * lp_norm_closed(1.5),
    )


@dataclass(frozen=True)
class KernelNorms:
    l1: float
    l3_2: float
    rollnik_bound: float
    kato: float

    def lp(self, p: float) -> float:
        return lp_norm_closed(p)


def kernel_norms() -> KernelNorms:
    c = constants()
    return KernelNorms(lp_norm_closed(1.0), lp_norm_closed(1.5), c.rollnik_bound, c.kato)


def convolution_identity(r: float) -> float:
    """``(e^{-r}/r * 1/r)(x) = 4 pi (1 - e^{-|x|}) / |x|``; its sup (at 0) is the Kato norm."""
    if r <= 0:
        raise ValueError("use constants().kato for the r -> 0 limit")
    return 4.0 * math.pi * -math.expm1(-r) / r


@dataclass(frozen=True)
class Smallness:
    ok: bool
    rk_margin: float
    rk_e_margin: float


def check_smallness(v0: YukawaParams) -> Smallness:
    """Condition ``|Q0| < mu0`` and its Rollnik/Kato form.

    ``rk_e_margin`` is ``(|Q0| / mu0) / (4 pi min(1/R, 1/K))`` with the Rollnik
    upper bound ``R`` and the exact Kato norm ``K``; it is below one whenever
    ``ok`` holds because both norms are at most ``4 pi``.
    """
    c = constants()
    rk = abs(v0.Q) / v0.mu
    threshold = 4.0 * math.pi * min(1.0 / c.rollnik_bound, 1.0 / c.kato)
    return Smallness(ok=rk < 1.0, rk_margin=rk, rk_e_margin=rk / threshold)
