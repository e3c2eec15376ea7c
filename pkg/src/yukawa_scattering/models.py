"""Equation specification shared by the propagators and the scattering engine."""

from __future__ import annotations

from dataclasses import dataclass

from .yukawa import YukawaParams, check_smallness

__all__ = ["ModelParams", "default_model"]


@dataclass(frozen=True)
class ModelParams:
    """Linear pair ``v0`` (Q0, mu0), nonlinear pair ``v1`` and the family.

    ``family="nls"``:  i u_t + Lap u + Q0 e^{-mu0 r}/r u - (Q1 e^{-mu1 r}/r * |u|^2) u = 0
    ``family="srh"``:  i w_t - sqrt(1 - Lap) w = (Q2 e^{-mu2 r}/r * |w|^2) w, no linear potential.
    """

    v0: YukawaParams
    v1: YukawaParams
    family: str = "nls"

    def __post_init__(self):
        if self.family not in ("nls", "srh"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "nls" and not check_smallness(self.v0).ok:
            raise ValueError(f"|Q0| < mu0 violated: Q0={self.v0.Q}, mu0={self.v0.mu}")
        if self.family == "srh" and self.v0.Q != 0:
            raise ValueError("the semi-relativistic family has no linear potential (Q0 must be 0)")

    @classmethod
    def nls(cls, Q0: float, mu0: float, Q1: float, mu1: float) -> "ModelParams":
        return cls(YukawaParams(Q0, mu0), YukawaParams(Q1, mu1), "nls")

    @classmethod
    def srh(cls, Q2: float, mu2: float) -> "ModelParams":
        return cls(YukawaParams(0.0, 1.0), YukawaParams(Q2, mu2), "srh")

    def with_coupling(self, Q: float) -> "ModelParams":
        return ModelParams(self.v0, YukawaParams(Q, self.v1.mu), self.family)

    def without_potential(self) -> "ModelParams":
        return ModelParams(YukawaParams(0.0, self.v0.mu), self.v1, self.family)


def default_model() -> ModelParams:
    """(Q0, mu0, Q1, mu1) = (0.5, 1, 1, 1)."""
    return ModelParams.nls(0.5, 1.0, 1.0, 1.0)
