"""Discrete Gagliardo energy and the fractional p-Laplacian as its gradient.

For a grid function v (zero outside the interior nodes) the discrete energy is

    E_h(v) = sum_{i != j} pair_{|i-j|} |v_i - v_j|^p + 2 K h sum_i ext_i |v_i|^p

where the first sum runs over ordered pairs and ``ext`` carries the exterior
interaction. The operator is ``L v = grad E_h(v) / (p h)``, so that
``h <L v, v> = E_h(v)``.

Two weight schemes are available:

``midpoint``
    pair_d = K h^2 / (d h)^{1+sp}; the diagonal cell is dropped and
    ext_i = rho(x_i) is the exact exterior integral
    ((x_i-a)^{-sp} + (b-x_i)^{-sp}) / sp.
``corrected``
    pair_d = K I_d / (d h)^p with I_d the exact cell-pair integral of
    |x-y|^{p-1-sp}, so the pair sum is exact on linear data; the self-cell
    integral is folded into pair_1, and the exterior is the lattice sum of the
    same weights over the zero-valued ghost nodes. This keeps the local limit
    s -> 1 consistent, which the midpoint rule loses at fixed h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import zeta

from .errors import DomainError
from .grid import Grid1D, GridFn, check_same_grid
from .scalar import FracParams, phi_p

SCHEMES = ("midpoint", "corrected")


@dataclass(frozen=True, eq=False)
class NonlocalWeights:
    params: FracParams
    grid: Grid1D
    pair: np.ndarray  # pair[d-1] for d = 1..n-1
    ext: np.ndarray
    scheme: str = "midpoint"

    @property
    def K(self) -> float:
        return self.params.kappa

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def n(self) -> int:
        return self.grid.n

    def coupling(self) -> np.ndarray:
        """Expand the distance-class weights into the symmetric n x n coupling (zero diagonal)."""
        col = np.concatenate(([0.0], self.pair))
        return toeplitz(col)


def _corrected_tables(n: int, sp: float, p: float, tail_start: int = 2000):
    """Scaled cell-pair weights r_d = F_d / d^p and their tail sums tau_m = sum_{d>=m} r_d."""
    q = p - 1.0 - sp  # > -1 since p(1-s) > 0

    def G(z):
        return np.abs(z) ** (q + 2.0) / ((q + 1.0) * (q + 2.0))

    D = n + tail_start
    d = np.arange(1, D + 1, dtype=float)
    F = G(d + 1.0) - 2.0 * G(d) + G(d - 1.0)
    # half of the self-cell integral F_0 = 2 G(1) goes to each nearest-neighbour pair
    F[0] += G(1.0)
    r = F / d**p
    # second-difference expansion F_d ~ d^q + q(q-1)/12 d^{q-2}
    tail = zeta(1.0 + sp, D + 1) + q * (q - 1.0) / 12.0 * zeta(3.0 + sp, D + 1)
    tau = np.cumsum(r[::-1])[::-1] + tail
    return r, tau


def build_weights(params: FracParams, grid: Grid1D, scheme: str = "midpoint") -> NonlocalWeights:
    if params.dim != 1:
        raise DomainError("weights are only available for dim = 1")
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    n, h, K, sp, p = grid.n, grid.h, params.kappa, params.sp, params.p
    i = np.arange(1, n + 1)
    if scheme == "midpoint":
        d = np.arange(1, n, dtype=float)
        pair = K * h * h / (d * h) ** (1.0 + sp)
        x = grid.nodes
        ext = ((x - grid.a) ** (-sp) + (grid.b - x) ** (-sp)) / sp
    else:
        r, tau = _corrected_tables(n, sp, p)
        pair = K * h ** (1.0 - sp) * r[: n - 1]
        # ghost nodes at lattice indices <= 0 and >= n+1
        ext = h ** (-sp) * (tau[i - 1] + tau[n - i])
    pair.flags.writeable = False
    ext = np.array(ext, dtype=float)
    ext.flags.writeable = False
    return NonlocalWeights(params, grid, pair, ext, scheme)


def exterior_rho(grid: Grid1D, sp: float, x) -> np.ndarray:
    """Closed-form integral of |x-y|^{-(1+sp)} over the complement of (a, b)."""
    x = np.asarray(x, dtype=float)
    return ((x - grid.a) ** (-sp) + (grid.b - x) ** (-sp)) / sp


# -- array kernels --------------------------------------------------------


def energy_values(w: NonlocalWeights, v: np.ndarray, P: np.ndarray | None = None) -> float:
    p = w.p
    if P is None:
        P = w.coupling()
    diff = np.abs(v[:, None] - v[None, :]) ** p
    return float(np.sum(P * diff) + 2.0 * w.K * w.h * np.sum(w.ext * np.abs(v) ** p))


def apply_values(w: NonlocalWeights, v: np.ndarray, P: np.ndarray | None = None) -> np.ndarray:
    p = w.p
    if P is None:
        P = w.coupling()
    pd = phi_p(v[:, None] - v[None, :], p)
    return (2.0 / w.h) * np.sum(P * pd, axis=1) + 2.0 * w.K * w.ext * phi_p(v, p)


def jacobian_values(
    w: NonlocalWeights, v: np.ndarray, P: np.ndarray | None = None, eps: float = 0.0
) -> np.ndarray:
    """Derivative of ``apply_values`` at v.

    For p < 2 the factor |t|^{p-2} is singular at t = 0; ``eps`` replaces |t|
    by sqrt(t^2 + eps^2) there, giving an SPD surrogate.
    """
    p = w.p
    if P is None:
        P = w.coupling()

    def mag(t):
        if p == 2.0:
            return np.ones_like(t)
        if p < 2.0:
            return (t * t + eps * eps) ** ((p - 2.0) / 2.0)
        return np.abs(t) ** (p - 2.0)

    D = v[:, None] - v[None, :]
    np.fill_diagonal(D, 1.0)  # the diagonal carries no coupling
    C = (2.0 / w.h) * (p - 1.0) * P * mag(D)
    Jm = -C
    Jm[np.diag_indices_from(Jm)] = C.sum(axis=1) + 2.0 * w.K * (p - 1.0) * w.ext * mag(v)
    return Jm


def linear_matrix(w: NonlocalWeights) -> np.ndarray:
    """Dense symmetric matrix of the operator with phi_p replaced by the identity.

    For p = 2 this is the operator itself.
    """
    P = w.coupling()
    A = -(2.0 / w.h) * P
    A[np.diag_indices_from(A)] = (2.0 / w.h) * P.sum(axis=1) + 2.0 * w.K * w.ext
    return A


# -- GridFn interface ------------------------------------------------------


def energy(w: NonlocalWeights, u: GridFn) -> float:
    check_same_grid(w.grid, u.grid)
    return energy_values(w, u.values)


def apply_operator(w: NonlocalWeights, u: GridFn) -> GridFn:
    check_same_grid(w.grid, u.grid)
    return GridFn(w.grid, apply_values(w, u.values))


def rayleigh_values(w: NonlocalWeights, v: np.ndarray, P: np.ndarray | None = None) -> float:
    denom = w.h * np.sum(np.abs(v) ** w.p)
    if denom == 0.0:
        raise DomainError("Rayleigh quotient of the zero function")
    return energy_values(w, v, P) / denom


def rayleigh(w: NonlocalWeights, u: GridFn) -> float:
    check_same_grid(w.grid, u.grid)
    return rayleigh_values(w, u.values)
