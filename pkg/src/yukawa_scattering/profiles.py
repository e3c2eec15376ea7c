"""Analytic test profiles that can be re-sampled exactly under dilation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

__all__ = ["Gaussian", "RingBump"]


@dataclass(frozen=True)
class Gaussian:
    """``amplitude * exp(-|x - center|^2 / (2 a))``.

    ``normalized=True`` rescales the amplitude so the continuum L2 norm is one.
    """

    width: float = 1.0
    amplitude: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    normalized: bool = False

    @property
    def scale(self) -> float:
        if self.normalized:
            return self.amplitude * (np.pi * self.width) ** -0.75
        return self.amplitude

    def __call__(self, x, y, z):
        cx, cy, cz = self.center
        r2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
        return self.scale * np.exp(-r2 / (2.0 * self.width))

    def l2_norm(self) -> float:
        return abs(self.scale) * (np.pi * self.width) ** 0.75

    def radius(self, tol: float) -> float:
        """Radius beyond which the relative L2 mass is below ``tol``."""
        # |phi|^2 is a Gaussian with per-axis variance a/2: chi(3) tail.
        s = np.sqrt(self.width / 2.0)
        r = s * np.sqrt(special.gammainccinv(1.5, tol) * 2.0)
        return r + float(np.linalg.norm(self.center))


@dataclass(frozen=True)
class RingBump:
    """Smooth bump supported on the shell ``|r - r0| < w``; vanishes near 0.

    ``exp(1 - 1 / (1 - s^2))`` with ``s = (r - r0) / w``, so the peak value is
    ``amplitude``.  Requires ``w < r0``.
    """

    r0: float = 2.0
    w: float = 1.0
    amplitude: float = 1.0
    normalized: bool = False

    def __post_init__(self):
        if not 0 < self.w < self.r0:
            raise ValueError("need 0 < w < r0 so the support avoids the origin")

    def _shape(self, r):
        s = (r - self.r0) / self.w
        inside = np.abs(s) < 1
        out = np.zeros_like(np.asarray(r, dtype=float))
        si = s[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
        return out

    @property
    def scale(self) -> float:
        if not self.normalized:
            return self.amplitude
        m, _ = integrate.quad(lambda r: 4 * np.pi * r * r * self._shape(np.array([r]))[0] ** 2,
                              self.r0 - self.w, self.r0 + self.w, epsabs=0, epsrel=1e-12)
        return self.amplitude / np.sqrt(m)

    def __call__(self, x, y, z):
        r = np.sqrt(x * x + y * y + z * z)
        r = np.broadcast_to(r, np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(z)))
        return self.scale * self._shape(np.array(r))

    def radius(self, tol: float) -> float:
        return self.r0 + self.w
