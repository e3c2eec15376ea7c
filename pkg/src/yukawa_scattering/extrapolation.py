"""Fitted-order Richardson extrapolation for numerical limits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = ["ExtrapolationResult", "extrapolate", "PARAM_SQUARED", "INVERSE_PARAM"]

PARAM_SQUARED = "power_in_param_squared"
INVERSE_PARAM = "power_in_inverse_param"
_NOMINAL = {PARAM_SQUARED: 2.0, INVERSE_PARAM: None}


@dataclass(frozen=True)
class ExtrapolationResult:
    """Limit estimate with its fitted order and a confidence width.

    ``width`` is the spread of the fitted limit and the pairwise extrapolants
    of consecutive points at the rounded (and, if any, nominal) order.
    ``flags`` may contain ``"indeterminate"`` (constant data),
    ``"non_monotone"`` (differences do not shrink) or ``"order_fit_failed"``.
    """

    estimate: float
    order: Optional[float]
    residuals: tuple
    width: float
    flags: tuple = ()
    points: tuple = field(default=(), repr=False)

    @property
    def ok(self) -> bool:
        return not self.flags or self.flags == ("indeterminate",)

    def covers(self, truth: float, tolerance: float) -> bool:
        """``|estimate - truth| <= max(tolerance, 2 width)`` and ``width <= tolerance``."""
        return abs(self.estimate - truth) <= max(tolerance, 2 * self.width) and self.width <= tolerance


def _pair_limit(x1, v1, x2, v2, p):
    a, b = x1**p, x2**p
    return (v2 * a - v1 * b) / (a - b)


def extrapolate(points: Sequence[tuple[float, float]], model: str = PARAM_SQUARED) -> ExtrapolationResult:
    """Limit of ``v`` as the parameter goes to 0 (``PARAM_SQUARED``) or infinity (``INVERSE_PARAM``).

    Fits ``v = c + A x^p`` through the last three points, with ``x`` the
    parameter itself or its inverse.  The order ``p`` is solved from the ratio
    of successive differences and reported.
    """
    if model not in _NOMINAL:
        raise ValueError(f"unknown extrapolation model {model!r}")
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise ValueError("need at least three points")
    params = np.array([p for p, _ in pts])
    steps = np.diff(params)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("parameters must be strictly monotone")
    x = params if model == PARAM_SQUARED else 1.0 / params
    if np.any(x <= 0):
        raise ValueError("parameters must be positive")
    order_idx = np.argsort(-x)  # approach the limit x -> 0
    x = x[order_idx]
    v = np.array([pts[i][1] for i in order_idx])
    pts = tuple(pts[i] for i in order_idx)

    scale = max(np.max(np.abs(v)), 1e-300)
    d = np.diff(v)
    if np.all(np.abs(d) <= 1e-14 * scale):
        return ExtrapolationResult(float(v[-1]), None, tuple(0.0 for _ in v), 0.0,
                                   ("indeterminate",), pts)

    x1, x2, x3 = x[-3:]
    v1, v2, v3 = v[-3:]
    d1, d2 = v1 - v2, v2 - v3
    if d1 * d2 <= 0 or abs(d2) >= abs(d1):
        wide = float(np.max(v) - np.min(v))
        return ExtrapolationResult(float(v[-1]), None, tuple(float(r) for r in v - v[-1]), wide, ("non_monotone",), pts)

    ratio = d1 / d2

    def gap(p):
        return (x1**p - x2**p) / (x2**p - x3**p) - ratio

    flags = []
    try:
        p = brentq(gap, 0.05, 30.0, xtol=1e-12)
    except ValueError:
        p = _NOMINAL[model]
        flags.append("order_fit_failed")
        if p is None:
            wide = float(abs(d2))
            return ExtrapolationResult(float(v[-1]), None, tuple(float(r) for r in v - v[-1]), wide, tuple(flags), pts)
    amp = d2 / (x2**p - x3**p)
    c = v3 - amp * x3**p
    residuals = tuple(float(r) for r in v - (c + amp * x**p))

    candidates = [c]
    orders = {round(2 * p) / 2}
    if _NOMINAL[model] is not None:
        orders.add(_NOMINAL[model])
    for q in orders:
        if q <= 0:
            continue
        for i in range(len(x) - 1):
            candidates.append(_pair_limit(x[i], v[i], x[i + 1], v[i + 1], q))
    width = float(max(candidates) - min(candidates))
    return ExtrapolationResult(float(c), float(p), residuals, width, tuple(flags), pts)
