"""Scalar building blocks: the normalization constant, the p-power map and the Picone gap."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError


def _check_sp(s: float, p: float) -> None:
    if not (0.0 < s < 1.0):
        raise DomainError("s must lie in (0,1)")
    if not (p > 1.0 and math.isfinite(p)):
        raise DomainError("p must lie in (1,inf)")


def sphere_integral(dim: int, p: float) -> float:
    """Integral of |<w, e>|^p over the unit sphere S^{dim-1}."""
    if dim == 1:
        # S^0 = {-1, +1} with counting measure
        return 2.0
    if dim == 2:
        # |cos|^p has kinks at pi/2 and 3pi/2; integrate one smooth quarter
        val, _ = integrate.quad(
            lambda t: math.cos(t) ** p, 0.0, math.pi / 2, epsabs=0.0, epsrel=1e-12, limit=200
        )
        return 4.0 * val
    raise DomainError("dim must be 1 or 2")


def compute_K(dim: int, s: float, p: float) -> float:
    """Normalization constant p(1-s) / int_{S^{N-1}} |<w,e>|^p dH^{N-1}."""
    if dim not in (1, 2):
        raise DomainError("dim must be 1 or 2")
    _check_sp(s, p)
    return p * (1.0 - s) / sphere_integral(dim, p)


@dataclass(frozen=True)
class FracParams:
    s: float
    p: float
    dim: int = 1
    kappa: float = float("nan")

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError("dim must be 1 or 2")
        _check_sp(self.s, self.p)
        k = compute_K(self.dim, self.s, self.p)
        if math.isnan(self.kappa):
            object.__setattr__(self, "kappa", k)
        elif not math.isclose(self.kappa, k, rel_tol=1e-12):
            raise DomainError("kappa inconsistent with (dim, s, p)")

    @property
    def sp(self) -> float:
        return self.s * self.p


def phi_p(t, p: float):
    """|t|^{p-2} t, extended by 0 at t = 0. Works elementwise on arrays."""
    if not p > 1.0:
        raise DomainError("p must exceed 1")
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * np.abs(t) ** (p - 1.0)
    return out if out.ndim else float(out)


def picone_gap(a1, a2, b1, b2, p: float):
    """|a1-a2|^p - phi_p(b1-b2) (a1^p/b1^{p-1} - a2^p/b2^{p-1}).

    Nonnegative for a >= 0, b > 0, with equality exactly on proportional pairs.
    Vectorized over array arguments.
    """
    if not p > 1.0:
        raise DomainError("p must exceed 1")
    a1, a2, b1, b2 = (np.asarray(x, dtype=float) for x in (a1, a2, b1, b2))
    if np.any(a1 < 0) or np.any(a2 < 0):
        raise DomainError("a1, a2 must be nonnegative")
    if np.any(b1 <= 0) or np.any(b2 <= 0):
        raise DomainError("b1, b2 must be positive")
    lhs = np.abs(a1 - a2) ** p
    rhs = phi_p(b1 - b2, p) * (a1**p / b1 ** (p - 1.0) - a2**p / b2 ** (p - 1.0))
    out = lhs - rhs
    return out if out.ndim else float(out)
