"""Slow, independent reference computations used to validate the fast paths.

Nothing here shares convolution or stepping code with the production
modules: the direct sums, the implicit stepper (``numpy.fft``, its own
symbols and potential sampling) and the quadratures are written from scratch.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .grid import ComplexField, Grid3
from .yukawa import YukawaParams

__all__ = [
    "CUBIC_LATTICE_ZETA",
    "RadialQuadrature",
    "brute_convolution",
    "implicit_stepper",
    "gaussian_free_closed_form",
    "radial_inverse_transform",
    "kernel_check_table",
    "smoothed_yukawa",
    "OracleError",
]

# Analytically continued sum over nonzero j in Z^3 of 1/|j|.  The Riemann sum
# h^3 sum' f(hj)/|hj| misses the singular cell by -CUBIC_LATTICE_ZETA h^2 f(0).
CUBIC_LATTICE_ZETA = -2.8372974794806


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialQuadrature:
    """Adaptive QUADPACK integration on ``[0, 1]`` and ``[1, inf)``.

    The extrapolating rule on the finite piece absorbs the algebraic
    endpoint behaviour ``r^(2-p)`` of the radial ``L^p`` integrands.
    """

    tol: float = 1e-13
    limit: int = 200

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
        """``(value, error estimate)`` of ``int_0^inf f(r) dr``."""
        total, err = 0.0, 0.0
        for a, b in ((0.0, 1.0), (1.0, np.inf)):
            val, e = integrate.quad(lambda r: float(f(np.float64(r))), a, b, epsabs=0.0,
                                    epsrel=self.tol, limit=self.limit)
            total += val
            err += e
        if err > 1e3 * self.tol * max(abs(total), 1.0):
            raise OracleError(f"radial quadrature error estimate {err:.3g} too large")
        return total, err

    def lp_norm(self, radial: Callable[[np.ndarray], np.ndarray], p: float) -> float:
        """``|| g(|x|) ||_{L^p(R^3)}``."""
        val, _ = self.integrate(lambda r: 4.0 * np.pi * r * r * np.abs(radial(r)) ** p)
        return val ** (1.0 / p)


def radial_inverse_transform(symbol: Callable[[float], float], r: float) -> float:
    """``(2 pi)^-3 int e^{i x xi} g(|xi|) dxi`` at ``|x| = r`` for a radial symbol.

    Reduces to ``(2 pi^2 r)^-1 int_0^inf k g(k) sin(k r) dk``, integrated with
    the oscillatory sine weight.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    val, _ = integrate.quad(lambda k: k * symbol(k), 0.0, np.inf, weight="sin", wvar=r,
                            limlst=200)
    return val / (2.0 * np.pi**2 * r)


def brute_convolution(f: ComplexField, kernel: YukawaParams, singular: str = "half_spacing",
                      images: int = 1) -> ComplexField:
    """Direct periodic sum ``h^3 sum_y K(x - y) f(y)`` over ``(2 images + 1)^3`` periods.

    ``singular`` picks the value used at zero separation:
    ``"half_spacing"`` evaluates the kernel at ``r = h/2``;
    ``"lattice"`` uses the lattice-corrected weight ``Q(-zeta/h - mu)`` that
    makes the sum exact to second order for smooth ``f``.
    """
    g = f.grid
    if g.n > 16:
        raise ValueError("brute-force convolution is limited to n <= 16")
    if singular not in ("half_spacing", "lattice"):
        raise ValueError(f"unknown singular treatment {singular!r}")
    f = f.physical()
    n, h, L = g.n, g.spacing, g.box_length
    Q, mu = kernel.Q, kernel.mu
    # Periodic kernel at offset class c: sum over images of K(c h + m L),
    # with m running over a window symmetric about the nearest copy.
    off = np.arange(n) * h
    table = np.zeros((n, n, n))
    ms = range(-images - 1, images + 1)
    for ix, iy, iz in itertools.product(ms, repeat=3):
        sx = off[:, None, None] + ix * L
        sy = off[None, :, None] + iy * L
        sz = off[None, None, :] + iz * L
        r = np.sqrt(sx * sx + sy * sy + sz * sz)
        safe = np.where(r > 0, r, 1.0)
        table += np.where(r > 0, Q * np.exp(-mu * safe) / safe, 0.0)
    if singular == "half_spacing":
        table[0, 0, 0] += Q * math.exp(-mu * h / 2) / (h / 2)
    else:
        table[0, 0, 0] += Q * (-CUBIC_LATTICE_ZETA / h - mu)
    idx = np.arange(n)
    vals = f.values
    out = np.zeros((n, n, n), dtype=np.complex128)
    for i, j, l in itertools.product(range(n), repeat=3):
        shifted = table[(i - idx)[:, None, None] % n, (j - idx)[None, :, None] % n,
                        (l - idx)[None, None, :] % n]
        out[i, j, l] = g.cell_volume * np.sum(shifted * vals)
    return ComplexField(g, out)


def gaussian_free_closed_form(a: float, t: float, x, y, z):
    """``e^{it Lap} e^{-|x|^2/(2a)}`` = ``(a/(a + 2it))^{3/2} e^{-|x|^2 / (2(a + 2it))}``."""
    if not a > 0:
        raise ValueError("width must be positive")
    c = a + 2j * t
    r2 = x * x + y * y + z * z
    return (a / c) ** 1.5 * np.exp(-r2 / (2.0 * c))


def _axis(n: int, L: float) -> np.ndarray:
    return -0.5 * L + (L / n) * np.arange(n)


def implicit_stepper(spec, phi: ComplexField, t: float, dt: float, tol: float = 1e-12,
                     max_iter: int = 200) -> ComplexField:
    """Crank-Nicolson ``(1 + i dt H/2) u' = (1 - i dt H/2) u`` for a linear spec.

    ``H = omega(-i grad) + V``; the implicit equation is solved by fixed-point
    iteration preconditioned with the exact kinetic inverse.  ``V`` is sampled
    independently of the production code, with the same ``h/2`` floor.
    """
    if spec.nonlinear:
        raise ValueError("the implicit stepper handles linear flows only")
    g = phi.grid
    n, L = g.n, g.box_length
    h = L / n
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    xi2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
    if spec.kind in ("free", "yukawa"):
        omega = xi2
    elif spec.kind == "semirel":
        omega = np.sqrt(spec.mass**2 + xi2)
    else:
        lam = spec.scale
        omega = 0.5 * xi2 if math.isinf(lam) else lam * np.sqrt(lam**2 + xi2) - lam**2
    v = np.zeros((n, n, n))
    if spec.kind == "yukawa" and spec.v0 is not None and spec.v0.Q != 0:
        lam = spec.scale
        Q, mu = lam * spec.v0.Q, lam * spec.v0.mu
        c = np.asarray(spec.shift, dtype=float) / lam
        ax = _axis(n, L)
        dx = [np.mod(ax - c[i] + L / 2, L) - L / 2 for i in range(3)]
        r = np.sqrt(dx[0][:, None, None] ** 2 + dx[1][None, :, None] ** 2 + dx[2][None, None, :] ** 2)
        r = np.maximum(r, h / 2)
        v = -Q * np.exp(-mu * r) / r
    m = int(round(abs(t) / dt))
    if m == 0:
        return phi
    step = t / m
    plus = 1.0 + 0.5j * step * omega
    minus = 1.0 - 0.5j * step * omega

    def apply_rhs(u):
        return np.fft.ifftn(minus * np.fft.fftn(u)) - 0.5j * step * v * u

    u = np.array(phi.physical().values)
    for _ in range(m):
        rhs = apply_rhs(u)
        new = u
        for it in range(max_iter):
            nxt = np.fft.ifftn(np.fft.fftn(rhs - 0.5j * step * v * new) / plus)
            delta = np.linalg.norm(nxt - new)
            new = nxt
            if delta <= tol * max(np.linalg.norm(new), 1e-300):
                break
        else:
            raise OracleError(f"implicit solve stalled with update {delta:.3g}")
        u = new
    return ComplexField(g, u)


def _yukawa_unit(r):
    return np.exp(-r) / r


def kernel_check_table(ps=(1.0, 1.25, 1.5, 2.0, 2.5), quad: RadialQuadrature = RadialQuadrature()):
    """Closed-form kernel constants against independent radial quadrature.

    Rows are ``(name, closed_form, numeric, rel_err)``.  The Kato row uses the
    shell theorem ``(g * 1/r)(x) = 4 pi int g(R) R^2 / max(|x|, R) dR`` at
    ``x = 0`` and at ``|x| = 1``.
    """
    from .yukawa import constants, convolution_identity, lp_norm_closed

    c = constants()
    rows = []

    def add(name, closed, numeric):
        rows.append((name, float(closed), float(numeric), abs(numeric - closed) / abs(closed)))

    add("l1_norm", 4.0 * math.pi, quad.lp_norm(_yukawa_unit, 1.0))
    l32 = quad.lp_norm(_yukawa_unit, 1.5)
    add("l3_2_norm", 2.0 ** (5.0 / 3.0) * math.pi / 3.0, l32)
    for p in ps:
        add(f"lp_norm_p{p:g}", lp_norm_closed(p), quad.lp_norm(_yukawa_unit, p))
    kato0, _ = quad.integrate(lambda r: 4.0 * math.pi * r * np.exp(-r) / r)
    add("kato_norm", c.kato, kato0)
    inner_part, _ = integrate.quad(lambda r: r * math.exp(-r), 0.0, 1.0, epsabs=0, epsrel=1e-13)
    outer_part, _ = integrate.quad(lambda r: math.exp(-r), 1.0, np.inf, epsabs=0, epsrel=1e-13)
    shell = 4.0 * math.pi * (inner_part + outer_part)
    add("kato_convolution_at_1", convolution_identity(1.0), shell)
    add("embedding_margin", 8.0 * math.pi ** (-1.0 / 3.0) / 9.0, c.C_b**2 * l32)
    add("rollnik_bound", c.rollnik_bound, math.sqrt(c.HLS) * l32)
    return rows


def smoothed_yukawa(params: YukawaParams, r, s: float):
    """Closed form of ``(Q e^{-mu r}/r) * G_s`` for the unit Gaussian ``G_s`` of per-axis spread ``s``.

    ``(Q e^{mu^2 s^2/2} / 2r) [e^{-mu r} erfc((mu s^2 - r)/(s sqrt 2))
    - e^{mu r} erfc((mu s^2 + r)/(s sqrt 2))]``, with the second term through
    ``erfcx`` to avoid overflow.  Its symbol is ``4 pi Q / (mu^2 + xi^2) e^{-s^2 xi^2 / 2}``.
    """
    from scipy.special import erfc, erfcx

    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or not s > 0:
        raise ValueError("need r > 0 and s > 0")
    mu, c = params.mu, s * math.sqrt(2.0)
    a = (mu * s * s - r) / c
    b = (mu * s * s + r) / c
    pre = math.exp(0.5 * mu * mu * s * s)
    first = np.exp(-mu * r) * erfc(a)
    second = erfcx(b) * np.exp(mu * r - b * b)
    return params.Q * pre * (first - second) / (2.0 * r)
