"""Forced Dirichlet solvers for L u = lambda phi_p(u) + f.

* ``solve_subcritical``: minimization of the energy functional (lambda < lambda_1)
  by an Armijo-safeguarded descent method.
* ``resolvent``: the map g -> u with L u = g.
* ``solve_homotopy``: continuation in the forcing scale t for
  lambda_1 < lambda < lambda_2, with a radius guard that flags unbounded branches.
* ``solve_linear``: dense Gaussian elimination for p = 2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConvergenceError, DomainError, NearSingularError
from .grid import GridFn, check_same_grid
from .operator import (
    NonlocalWeights,
    apply_values,
    energy_values,
    jacobian_values,
    linear_matrix,
)
from .scalar import phi_p

log = logging.getLogger(__name__)

RESONANCE_GAP = 1e-6


@dataclass(frozen=True)
class SolveOpts:
    tol: float = 1e-10
    max_iters: int = 500
    step0: float = 1.0
    armijo: float = 1e-4
    radius: float | None = None  # None: chosen per solver
    relax: float = 0.5
    t_steps: int = 10

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if not 0 < self.armijo < 1:
            raise DomainError("armijo must lie in (0,1)")
        if self.radius is not None and not self.radius > 0:
            raise DomainError("radius must be positive")
        if not 0 < self.relax <= 1:
            raise DomainError("relax must lie in (0,1]")
        if self.t_steps < 1:
            raise DomainError("t_steps must be >= 1")
        if not self.step0 > 0:
            raise DomainError("step0 must be positive")


@dataclass
class SolveReport:
    solution: GridFn
    residual: float
    iterations: int
    energy: float
    converged: bool
    diverged: bool
    lam: float = float("nan")
    history: list = field(default_factory=list, repr=False)
    # stopped short of tol because J no longer resolves progress (not a budget failure)
    stalled: bool = False

    def to_json(self, w: NonlocalWeights) -> dict:
        return {
            "lambda": self.lam,
            "s": w.params.s,
            "p": w.params.p,
            "n": w.n,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "diverged": self.diverged,
            "energy": self.energy,
        }


def _as_values(w: NonlocalWeights, f) -> np.ndarray:
    if isinstance(f, GridFn):
        check_same_grid(w.grid, f.grid)
        return np.asarray(f.values, dtype=float)
    v = np.asarray(f, dtype=float).reshape(-1)
    if v.shape[0] != w.n:
        raise DomainError("forcing length does not match the grid")
    return v


def functional_values(w, lam, f, v, P=None) -> float:
    p, h = w.p, w.h
    return energy_values(w, v, P) / p - lam / p * h * np.sum(np.abs(v) ** p) - h * np.dot(f, v)


def functional_J(w: NonlocalWeights, lam: float, f: GridFn, u: GridFn) -> float:
    """E_h(u)/p - (lambda/p) ||u||_p^p - <f, u>."""
    check_same_grid(w.grid, u.grid)
    return float(functional_values(w, lam, _as_values(w, f), u.values))


def residual_values(w, lam, f, v, P=None) -> np.ndarray:
    return apply_values(w, v, P) - lam * phi_p(v, w.p) - f


def _reg_eps(v: np.ndarray, rel: float = 1e-8) -> float:
    return rel * max(float(np.max(np.abs(v))) if v.size else 0.0, 1e-300)


def _residual_jacobian(w, lam, v, P, rel=1e-8):
    p = w.p
    eps = _reg_eps(v, rel)
    Jm = jacobian_values(w, v, P, eps)
    if lam != 0.0:
        if p == 2.0:
            mag = np.ones_like(v)
        elif p < 2.0:
            mag = (v * v + eps * eps) ** ((p - 2.0) / 2.0)
        else:
            mag = np.abs(v) ** (p - 2.0)
        Jm[np.diag_indices_from(Jm)] -= lam * (p - 1.0) * mag
    return Jm


def _spd_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """-(H + mu I)^{-1} g with the smallest mu that makes the Cholesky succeed."""
    scale = max(float(np.max(np.abs(np.diag(H)))), 1e-300)
    mu = 0.0
    eye = np.eye(H.shape[0])
    for _ in range(60):
        try:
            c = cho_factor(H + mu * eye, lower=True, check_finite=False)
            d = -cho_solve(c, g, check_finite=False)
            if np.all(np.isfinite(d)):
                return d
        except LinAlgError:
            pass
        mu = max(10.0 * mu, 1e-14 * scale)
    return -g


def solve_subcritical(
    w: NonlocalWeights,
    lam: float,
    f,
    opts: SolveOpts | None = None,
    *,
    u0=None,
    method: str = "newton",
) -> SolveReport:
    """Minimize J_h by Armijo-backtracked descent, starting from ``u0`` (default 0).

    ``method="gradient"`` takes steepest-descent directions; ``"newton"``
    (default) preconditions them with the regularized Hessian, which keeps the
    iteration count independent of the mesh. Every accepted step satisfies the
    Armijo condition on J_h, so the J_h history is non-increasing.
    """
    if method not in ("newton", "gradient"):
        raise DomainError(f"unknown method {method!r}")
    opts = opts or SolveOpts()
    fv = _as_values(w, f)
    if not np.all(np.isfinite(fv)):
        raise DomainError("forcing must be finite")
    p, h, n = w.p, w.h, w.n
    P = w.coupling()
    v = np.zeros(n) if u0 is None else _as_values(w, u0).copy()
    radius = math.inf if opts.radius is None else opts.radius

    def J(x):
        return functional_values(w, lam, fv, x, P)

    G = residual_values(w, lam, fv, v, P)
    res = float(np.max(np.abs(G))) if n else 0.0
    Jv = J(v)
    history = [Jv]
    it = 0
    diverged = False
    idle = 0
    step = opts.step0
    # p < 2: smoothing of |t|^{p-2} in the preconditioner, adapted to the line search
    rel = 1e-8
    while res > opts.tol and it < opts.max_iters:
        it += 1
        g = h * G
        if method == "newton" and p != 2.0 and not np.any(v):
            # exact minimization of J along the ray t*f from the origin
            a = (energy_values(w, fv, P) - lam * h * np.sum(np.abs(fv) ** p)) / p
            b = h * np.dot(fv, fv)
            if a > 0 and b > 0:
                t = (b / (p * a)) ** (1.0 / (p - 1.0))
                v = t * fv
                Jn = J(v)
                history.append(Jn)
                Jv = Jn
                G = residual_values(w, lam, fv, v, P)
                res = float(np.max(np.abs(G)))
                continue
        if method == "newton":
            d = _spd_direction(h * _residual_jacobian(w, lam, v, P, rel), g)
            step = opts.step0
        else:
            d = -g
            step = min(2.0 * step, 1e12)
        slope = float(np.dot(g, d))
        if not slope < 0:
            d = -g
            slope = -float(np.dot(g, g))
        accepted = False
        while step > 1e-30:
            trial = v + step * d
            Jt = J(trial)
            if Jt <= Jv + opts.armijo * step * slope:
                accepted = True
                break
            step *= 0.5
        if accepted and method == "newton":
            # the full step can overshoot across a kink of J; keep halving
            # while that still lowers J
            while step > 1e-30:
                t2 = v + 0.5 * step * d
                J2 = J(t2)
                if not J2 < Jt:
                    break
                trial, Jt, step = t2, J2, 0.5 * step
        if not accepted:
            # Armijo is lost in rounding near the minimizer: take the full step
            # only if it lowers the residual without raising J beyond rounding.
            # Backtrack on the residual norm instead, keeping J within rounding.
            g2 = float(np.dot(G, G))
            alpha = opts.step0 if method == "newton" else max(step, 1e-12)
            found = False
            while alpha > 1e-12:
                trial = v + alpha * d
                Gt = residual_values(w, lam, fv, trial, P)
                Jt = J(trial)
                if float(np.dot(Gt, Gt)) < g2 and Jt <= Jv + 1e-13 * (abs(Jv) + 1.0):
                    found = True
                    break
                alpha *= 0.5
            if found:
                v, G, Jv = trial, Gt, min(Jt, Jv)
                res = float(np.max(np.abs(G)))
                history.append(Jv)
                continue
            log.debug("line search stalled at iteration %d, residual %.3e", it, res)
            break
        if method == "newton" and p < 2.0:
            rel = min(rel * 100.0, 1.0) if step < 0.25 * opts.step0 else max(rel * 0.1, 1e-8)
        flat = Jv - Jt <= 1e-15 * (abs(Jv) + 1.0)
        v = trial
        Jv = Jt
        history.append(Jv)
        idle = idle + 1 if flat else 0
        G = residual_values(w, lam, fv, v, P)
        res = float(np.max(np.abs(G)))
        if radius < math.inf and energy_values(w, v, P) ** (1.0 / p) > radius:
            diverged = True
            break
        if idle >= 5:
            log.debug("J stationary to rounding at iteration %d, residual %.3e", it, res)
            break
    stalled = res > opts.tol and it < opts.max_iters and not diverged
    if res > opts.tol and not diverged and method == "newton" and it < opts.max_iters:
        # J is flat to rounding here; a Newton polish on the residual itself
        # reaches nodewise accuracy that the energy cannot resolve (p < 2).
        # It spends only what is left of the iteration budget.
        vp, rp, itp, _ = _newton_corrector(w, lam, fv, v.copy(), P, opts, radius, it)
        if rp < res:
            Jp = J(vp)
            if Jp <= Jv + 1e-12 * (abs(Jv) + 1.0):
                v, res, Jv, it = vp, rp, min(Jp, Jv), itp
                history.append(Jv)
    converged = (res <= opts.tol) and not diverged
    return SolveReport(
        GridFn(w.grid, v), res, it, float(Jv), converged, diverged, float(lam), history,
        stalled=stalled and not converged,
    )


def resolvent(w: NonlocalWeights, g, opts: SolveOpts | None = None, *, u0=None) -> GridFn:
    """The unique u with L u = g (nodewise, within tol)."""
    rep = solve_subcritical(w, 0.0, g, opts, u0=u0)
    if not rep.converged:
        raise ConvergenceError(
            f"resolvent did not converge: residual {rep.residual:.3e} after {rep.iterations} iterations"
        )
    return rep.solution


def default_radius(w: NonlocalWeights, f, lambda1: float, opts: SolveOpts | None = None) -> float:
    """10 times the energy seminorm of the solution at lambda = 0.9 lambda_1."""
    opts = opts or SolveOpts()
    rep = solve_subcritical(w, 0.9 * lambda1, f, SolveOpts(tol=opts.tol, max_iters=opts.max_iters))
    return 10.0 * energy_values(w, rep.solution.values) ** (1.0 / w.p)


def _newton_corrector(w, lam, fv, v, P, opts, radius, it0):
    """Damped Newton on G(v) = L v - lam phi(v) - fv; merit 0.5 |G|^2, damping factor relax."""
    p = w.p
    G = residual_values(w, lam, fv, v, P)
    res = float(np.max(np.abs(G)))
    it = it0
    while res > opts.tol:
        if it >= opts.max_iters:
            return v, res, it, "maxiter"
        it += 1
        Jm = _residual_jacobian(w, lam, v, P)
        try:
            d = np.linalg.solve(Jm, -G)
        except np.linalg.LinAlgError:
            return v, res, it, "singular"
        if not np.all(np.isfinite(d)):
            return v, res, it, "singular"
        m0 = float(np.dot(G, G))
        alpha = 1.0
        while True:
            trial = v + alpha * d
            Gt = residual_values(w, lam, fv, trial, P)
            mt = float(np.dot(Gt, Gt))
            if mt <= (1.0 - 2.0 * opts.armijo * alpha) * m0:
                break
            alpha *= opts.relax
            if alpha < 1e-12:
                # rounding floor: accept a full step that still shrinks the sup residual
                trial = v + d
                Gt = residual_values(w, lam, fv, trial, P)
                if np.max(np.abs(Gt)) < res:
                    break
                return v, res, it, "stalled"
        change = float(np.max(np.abs(trial - v)))
        v, G = trial, Gt
        res = float(np.max(np.abs(G)))
        if energy_values(w, v, P) ** (1.0 / p) > radius:
            return v, res, it, "radius"
        if change <= opts.tol and res <= opts.tol:
            break
    return v, res, it, "ok"


def _outside_probe(w, lam, fv, w1, P, opts, radius, res_inside):
    """Look for the solution outside the ball after the corrector stalled inside it.

    Newton is restarted from +-2R w1 / |w1| with the guard lifted. If either
    run lowers the residual below the stalled one while ending beyond 2R, the
    equation is better satisfied outside the ball than anywhere the corrector
    reached inside it: the branch has left the ball. Returns that iterate, or
    None when the probe is inconclusive.
    """
    p = w.p
    e1 = energy_values(w, w1, P) ** (1.0 / p)
    probe_opts = SolveOpts(tol=opts.tol, max_iters=50, armijo=opts.armijo, relax=opts.relax)
    for sgn in (-1.0, 1.0):
        v0 = sgn * 2.0 * radius / e1 * w1
        vp, rp, _, _ = _newton_corrector(w, lam, fv, v0, P, probe_opts, math.inf, 0)
        if rp < res_inside and energy_values(w, vp, P) ** (1.0 / p) > 4.0 * radius:
            return vp
    return None


def solve_homotopy(
    w: NonlocalWeights,
    lam: float,
    f,
    opts: SolveOpts | None = None,
    *,
    eig1=None,
) -> SolveReport:
    """Continuation of u = R(lam phi_p(u) + t f) from t = 0 to t = 1.

    The t = 0 problem has only the trivial solution. At each t_k = k / t_steps
    the previous point is carried forward along the scaling branch
    u -> (t_k / t_{k-1})^{1/(p-1)} u and corrected by damped Newton on
    L u - lam phi_p(u) - t_k f = 0. The first nontrivial start is the
    projection onto the first eigenfunction w1,
    u = -phi_p^{-1}(t <f, w1> / (lam - lambda_1)) w1.
    ``diverged`` is set once the energy seminorm of an iterate exceeds the
    radius; ``eig1`` (an EigenPair) avoids recomputing the first eigenpair.
    """
    from .eigen import lambda1_solve

    opts = opts or SolveOpts()
    fv = _as_values(w, f)
    p, h, n = w.p, w.h, w.n
    P = w.coupling()
    if eig1 is None:
        eig1 = lambda1_solve(w, SolveOpts(tol=min(opts.tol, 1e-10)))
    lam1 = eig1.value
    w1 = eig1.fn.values
    gap = lam - lam1
    # below this gap lambda is indistinguishable from lambda_1 at the accuracy of the eigen solve
    gap_eff = gap if abs(gap) >= RESONANCE_GAP * lam1 else math.copysign(RESONANCE_GAP * lam1, gap or 1.0)
    if opts.radius is not None:
        radius = opts.radius
    else:
        radius = default_radius(w, fv, lam1, opts) * max(1.0, 0.1 * lam1 / abs(gap_eff)) ** (1.0 / (p - 1.0))

    v = np.zeros(n)
    it = 0
    status = "ok"
    res = 0.0
    t_prev = 0.0
    proj = h * float(np.dot(fv, w1))
    # the t = 0 map keeps u = 0 fixed; the history records the first sweep
    history = [0.0]
    for k in range(1, opts.t_steps + 1):
        t = k / opts.t_steps
        if np.any(v):
            v = v * (t / t_prev) ** (1.0 / (p - 1.0))
        else:
            if proj != 0.0:
                c = phi_p(t * proj / gap_eff, 1.0 + 1.0 / (p - 1.0))  # inverse of phi_p
                v = -c * w1
            else:
                v = t * fv
        if energy_values(w, v, P) ** (1.0 / p) > radius:
            status = "radius"
            break
        v, res, it, status = _newton_corrector(w, lam, t * fv, v, P, opts, radius, it)
        history.append(t)
        t_prev = t
        if status in ("stalled", "maxiter"):
            probe = _outside_probe(w, lam, t * fv, w1, P, opts, radius, res)
            if probe is not None:
                v, status = probe, "radius"
        if status != "ok":
            break
    G = residual_values(w, lam, fv, v, P)
    res = float(np.max(np.abs(G)))
    diverged = status == "radius" or (status == "singular")
    converged = status == "ok" and res <= opts.tol
    if status not in ("ok",):
        log.info("homotopy stopped with status %s at lambda=%g", status, lam)
    Jv = functional_values(w, lam, fv, v, P)
    return SolveReport(GridFn(w.grid, v), res, it, float(Jv), converged, diverged, float(lam), history)


def gauss_solve(M: np.ndarray, b: np.ndarray, norm: float | None = None, rel: float = 1e-12) -> np.ndarray:
    """Gaussian elimination with partial pivoting.

    Raises NearSingularError when a pivot falls below ``rel * norm``.
    """
    A = np.array(M, dtype=float)
    x = np.array(b, dtype=float)
    n = A.shape[0]
    if norm is None:
        norm = float(np.max(np.sum(np.abs(A), axis=1)))
    thresh = rel * norm
    for k in range(n):
        piv = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[piv, k]) < thresh:
            raise NearSingularError(f"pivot {A[piv, k]:.3e} below {thresh:.3e} at column {k}")
        if piv != k:
            A[[k, piv]] = A[[piv, k]]
            x[[k, piv]] = x[[piv, k]]
        fac = A[k + 1 :, k] / A[k, k]
        A[k + 1 :, k:] -= np.outer(fac, A[k, k:])
        x[k + 1 :] -= fac * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - np.dot(A[k, k + 1 :], x[k + 1 :])) / A[k, k]
    return x


def solve_linear(w: NonlocalWeights, lam: float, f) -> SolveReport:
    """Direct solve of (A - lam I) v = f for p = 2."""
    if w.p != 2.0:
        raise DomainError("solve_linear requires p = 2")
    fv = _as_values(w, f)
    A = linear_matrix(w)
    normA = float(np.max(np.sum(np.abs(A), axis=1)))
    v = gauss_solve(A - lam * np.eye(w.n), fv, norm=normA)
    res = float(np.max(np.abs(A @ v - lam * v - fv)))
    Jv = functional_values(w, lam, fv, v)
    return SolveReport(GridFn(w.grid, v), res, 1, float(Jv), True, False, float(lam))
