"""Periodic 3D grid, fields, Fourier multipliers and discrete norms.

Conventions
-----------
Physical points are ``x_j = -L/2 + j h`` for ``j = 0..n-1`` on each axis, so the
origin is the grid point with index ``n // 2``.  Frequencies follow the FFT
layout ``xi_k = 2 pi k / L`` with ``k`` in ``{-n/2, ..., n/2 - 1}``.

Frequency-space values approximate the continuum transform
``F phi(xi) = (2 pi)^(-3/2) int exp(-i x.xi) phi(x) dx``.  With the discrete
measures ``h^3`` (physical) and ``(2 pi / L)^3`` (frequency) the transform pair
is exactly unitary, so every norm below is representation independent.

The inner product is linear in the first slot and conjugate-linear in the
second: ``inner(f, g) = h^3 sum f conj(g)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid3",
    "ComplexField",
    "Multiplier",
    "RepresentationError",
    "BoundaryError",
    "fft_forward",
    "fft_inverse",
    "apply_multiplier",
    "dilate",
    "translate",
    "norm",
    "inner",
    "spacetime_norm",
    "save_field",
    "load_field",
]

PHYSICAL = "physical"
FREQUENCY = "frequency"
FIELD_MAGIC = b"YKFIELD1"


class RepresentationError(ValueError):
    """Field handed to an operation expecting the other representation."""


class BoundaryError(ValueError):
    """A profile or state does not fit in the periodic box."""


def _is_fft_friendly(n: int) -> bool:
    m = n
    for p in (2, 3, 5):
        while m % p == 0:
            m //= p
    return m == 1


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic grid ``[-L/2, L/2)^3`` with ``n`` points per axis."""

    n: int
    box_length: float

    def __post_init__(self):
        if self.n < 8 or self.n % 2 or not _is_fft_friendly(self.n):
            raise ValueError(f"n={self.n}: need an even, 2/3/5-smooth size >= 8")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.box_length

    @cached_property
    def axis(self) -> np.ndarray:
        return -0.5 * self.box_length + self.spacing * np.arange(self.n)

    @cached_property
    def freq_axis(self) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.spacing)

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (x, y, z)."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    def freqs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.freq_axis
        return k[:, None, None], k[None, :, None], k[None, None, :]

    @cached_property
    def radius(self) -> np.ndarray:
        x, y, z = self.coords()
        return np.sqrt(x * x + y * y + z * z)

    @cached_property
    def xi2(self) -> np.ndarray:
        kx, ky, kz = self.freqs()
        return kx * kx + ky * ky + kz * kz

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i L xi_k / 2) = (-1)^k per axis, from the -L/2 grid offset.
        k = np.rint(self.freq_axis * self.box_length / (2.0 * np.pi)).astype(int)
        s = np.where(k % 2 == 0, 1.0, -1.0)
        return s[:, None, None] * s[None, :, None] * s[None, None, :]

    def scaled(self, factor: float) -> "Grid3":
        """Same point count, box scaled by ``factor`` (commensurate grid)."""
        return Grid3(self.n, self.box_length * factor)

    def origin_index(self) -> tuple[int, int, int]:
        c = self.n // 2
        return (c, c, c)


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Immutable complex samples on a :class:`Grid3`."""

    grid: Grid3
    values: np.ndarray
    space: str = PHYSICAL

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if self.space not in (PHYSICAL, FREQUENCY):
            raise ValueError(f"unknown representation {self.space!r}")
        if v is self.values:
            v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid3, func: Callable) -> "ComplexField":
        x, y, z = grid.coords()
        return cls(grid, np.broadcast_to(func(x, y, z), grid.shape).astype(np.complex128))

    @property
    def measure(self) -> float:
        return self.grid.cell_volume if self.space == PHYSICAL else self.grid.dxi**3

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self.grid, values, self.space)

    def physical(self) -> "ComplexField":
        return self if self.space == PHYSICAL else fft_inverse(self)

    def __add__(self, other: "ComplexField") -> "ComplexField":
        _check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        _check_compatible(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c: complex) -> "ComplexField":
        return self.with_values(self.values * c)

    __rmul__ = __mul__


def _check_compatible(f: ComplexField, g: ComplexField) -> None:
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    if f.space != g.space:
        raise RepresentationError("fields are in different representations")


def _fft_scale(grid: Grid3) -> float:
    return (grid.spacing / np.sqrt(2.0 * np.pi)) ** 3


def fft_forward(f: ComplexField) -> ComplexField:
    """Physical -> frequency samples of the continuum-normalized transform."""
    if f.space != PHYSICAL:
        raise RepresentationError("fft_forward expects a physical-space field")
    g = f.grid
    out = sfft.fftn(f.values) * (_fft_scale(g) * g._phase)
    return ComplexField(g, out, FREQUENCY)


def fft_inverse(f: ComplexField) -> ComplexField:
    """Frequency -> physical; exact inverse of :func:`fft_forward`."""
    if f.space != FREQUENCY:
        raise RepresentationError("fft_inverse expects a frequency-space field")
    g = f.grid
    out = sfft.ifftn(f.values * g._phase) / _fft_scale(g)
    return ComplexField(g, out, PHYSICAL)


@dataclass(frozen=True)
class Multiplier:
    """Fourier multiplier given as a function of the frequency components."""

    symbol: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    label: str = ""
    radial: bool = field(default=True, compare=False)

    @classmethod
    def radial_symbol(cls, func: Callable[[np.ndarray], np.ndarray], label: str = "") -> "Multiplier":
        """Multiplier depending on ``|xi|^2`` only."""
        return cls(lambda kx, ky, kz: func(kx * kx + ky * ky + kz * kz), label, True)

    def on(self, grid: Grid3) -> np.ndarray:
        kx, ky, kz = grid.freqs()
        s = np.broadcast_to(self.symbol(kx, ky, kz), grid.shape)
        bad = ~np.isfinite(s)
        if bad.any():
            i = tuple(int(v[0]) for v in np.nonzero(bad))
            xi = (grid.freq_axis[i[0]], grid.freq_axis[i[1]], grid.freq_axis[i[2]])
            raise FloatingPointError(f"multiplier {self.label!r} is not finite at xi={xi}")
        return s

    def __mul__(self, other: "Multiplier") -> "Multiplier":
        return Multiplier(lambda kx, ky, kz: self.symbol(kx, ky, kz) * other.symbol(kx, ky, kz),
                          f"{self.label}*{other.label}", self.radial and other.radial)


def apply_multiplier(f: ComplexField, m: Multiplier) -> ComplexField:
    """Pointwise product in frequency space; output keeps the input representation."""
    s = m.on(f.grid)
    if f.space == FREQUENCY:
        return f.with_values(f.values * s)
    return ComplexField(f.grid, sfft.ifftn(sfft.fftn(f.values) * s), PHYSICAL)


def dilate(profile, lam: float, grid: Grid3, tail_tol: float = 1e-10) -> ComplexField:
    """Sample ``phi(x / lam)`` exactly from an analytic profile.

    ``profile`` must be callable on coordinate arrays and expose
    ``radius(tol)``: the radius outside of which its relative L2 mass is below
    ``tol``.  Refuses when the dilated profile does not fit in the box.
    """
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    reach = lam * profile.radius(tail_tol)
    if reach > 0.5 * grid.box_length:
        raise BoundaryError(
            f"dilated profile reaches radius {reach:.3g} > L/2 = {0.5 * grid.box_length:.3g}; "
            f"use box_length >= {2 * reach:.3g}")
    x, y, z = grid.coords()
    vals = np.broadcast_to(profile(x / lam, y / lam, z / lam), grid.shape)
    return ComplexField(grid, vals.astype(np.complex128), PHYSICAL)


def translate(f: ComplexField, z: Sequence[float]) -> ComplexField:
    """``f(x - z)`` by the spectral phase ``exp(-i z.xi)``."""
    z = np.asarray(z, dtype=float)
    if not z.any():
        return f
    m = Multiplier(lambda a, b, c: np.exp(-1j * (z[0] * a + z[1] * b + z[2] * c)), "shift", False)
    return apply_multiplier(f, m)


def norm(f: ComplexField, p: float = 2) -> float:
    """Discrete L^p norm (Riemann sum); ``p = inf`` gives the max norm."""
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.abs(f.values)
    if np.isinf(p):
        return float(a.max())
    return float((f.measure * np.sum(a**p)) ** (1.0 / p))


def inner(f: ComplexField, g: ComplexField) -> complex:
    _check_compatible(f, g)
    return complex(f.measure * np.vdot(g.values, f.values))


def spacetime_norm(series: Iterable[ComplexField], p: float, q: float, dt: float) -> float:
    """``L^p_t L^q_x`` norm of uniformly sampled fields by Riemann sums."""
    if p < 1 or q < 1:
        raise ValueError("exponents must be >= 1")
    norms = np.array([norm(f, q) for f in series])
    if np.isinf(p):
        return float(norms.max())
    return float((dt * np.sum(norms**p)) ** (1.0 / p))


def save_field(path, f: ComplexField) -> None:
    """Binary dump: magic, n (int64), L (float64), then n^3 complex128, x slowest."""
    f = f.physical()
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<qd", f.grid.n, f.grid.box_length))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def load_field(path) -> ComplexField:
    with open(path, "rb") as fh:
        magic = fh.read(len(FIELD_MAGIC))
        if magic != FIELD_MAGIC:
            raise ValueError(f"{path}: not a field dump")
        n, box = struct.unpack("<qd", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != n**3:
        raise ValueError(f"{path}: expected {n**3} samples, found {data.size}")
    return ComplexField(Grid3(int(n), float(box)), data.reshape(n, n, n))
