"""First and second eigenvalues of the discrete fractional p-Laplacian."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConvergenceError, DomainError
from .grid import GridFn
from .operator import NonlocalWeights, apply_values, linear_matrix, rayleigh_values
from .scalar import phi_p
from .solver import SolveOpts, solve_subcritical

log = logging.getLogger(__name__)


@dataclass
class EigenPair:
    value: float
    fn: GridFn
    residual: float
    iterations: int = 0
    converged: bool = True

    def to_json(self) -> dict:
        return {"value": self.value, "residual": self.residual}


def _normalize(w: NonlocalWeights, v: np.ndarray) -> np.ndarray:
    nrm = (w.h * np.sum(np.abs(v) ** w.p)) ** (1.0 / w.p)
    v = v / nrm
    return -v if np.sum(v) < 0 else v


def eig_residual(w: NonlocalWeights, value: float, v: np.ndarray, P=None) -> float:
    return float(np.max(np.abs(apply_values(w, v, P) - value * phi_p(v, w.p))))


def lambda1_solve(
    w: NonlocalWeights,
    opts: SolveOpts | None = None,
    *,
    u0=None,
    strict: bool = True,
) -> EigenPair:
    """Inverse power iteration u <- normalize(R(phi_p(u))) from u = 1.

    Stops once consecutive Rayleigh quotients differ by at most tol times the
    current one. The quotients are non-increasing; a rise beyond rounding
    raises. ``strict=False`` returns a flagged pair instead of raising when the
    iteration budget runs out.
    """
    opts = opts or SolveOpts()
    p = w.p
    P = w.coupling()
    v = np.ones(w.n) if u0 is None else np.asarray(getattr(u0, "values", u0), dtype=float)
    v = _normalize(w, v)
    q = rayleigh_values(w, v, P)
    inner = SolveOpts(tol=1e-13 * max(1.0, float(np.max(np.abs(phi_p(v, p))))), max_iters=200)
    history = [q]
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        g = phi_p(v, p)
        guess = v * q ** (-1.0 / (p - 1.0))
        rep = solve_subcritical(w, 0.0, g, inner, u0=guess)
        # a descent that stopped on the rounding floor of J has found the
        # minimizer as well as double precision allows; only budget exhaustion fails
        if not (rep.converged or rep.stalled):
            raise ConvergenceError(f"resolvent failed inside inverse power (residual {rep.residual:.3e})")
        v_new = _normalize(w, rep.solution.values)
        q_new = rayleigh_values(w, v_new, P)
        if q_new > q * (1.0 + 1e-12):
            raise ConvergenceError(f"Rayleigh quotient increased: {q:.16g} -> {q_new:.16g}")
        history.append(q_new)
        done = abs(q_new - q) <= opts.tol * q
        v, q = v_new, q_new
        if done:
            converged = True
            break
    if not converged and strict:
        raise ConvergenceError(f"inverse power iteration did not converge in {opts.max_iters} steps")
    pair = EigenPair(q, GridFn(w.grid, v), eig_residual(w, q, v, P), it, converged)
    pair.history = history
    return pair


# -- second eigenvalue via the path minimax ------------------------------------


def _odd_reflection(w: NonlocalWeights, v: np.ndarray) -> np.ndarray:
    """sign(mid - x) v(x): the odd reflection of a profile about the midpoint."""
    x = w.grid.nodes
    mid = 0.5 * (w.grid.a + w.grid.b)
    r = np.sign(mid - x) * v
    return _normalize_raw(w, r)


def _normalize_raw(w, v):
    return v / (w.h * np.sum(np.abs(v) ** w.p)) ** (1.0 / w.p)


def _arc_reparam(w, knots, metric):
    """Redistribute knots at equal arclength (metric norm), then re-normalize."""
    diffs = np.diff(knots, axis=0)
    seg = np.sqrt(np.einsum("ki,ij,kj->k", diffs, metric, diffs))
    s = np.concatenate(([0.0], np.cumsum(seg)))
    s /= s[-1]
    target = np.linspace(0.0, 1.0, len(knots))
    out = np.empty_like(knots)
    for i in range(knots.shape[1]):
        out[:, i] = np.interp(target, s, knots[:, i])
    out[0], out[-1] = knots[0], knots[-1]
    for k in range(1, len(out) - 1):
        out[k] = _normalize_raw(w, out[k])
    return out


def lambda2_path(
    w: NonlocalWeights,
    w1: EigenPair,
    knots: int = 21,
    opts: SolveOpts | None = None,
    *,
    return_path: bool = False,
):
    """Upper bound for lambda_2 from the minimax over paths joining w1 and -w1.

    The initial path runs along normalized great-circle arcs from w1 through
    the odd reflection of w1 to -w1. Knots are then moved by a string method:
    interior knots descend the Rayleigh quotient transversally to the path,
    while the highest knot climbs along the tangent and descends across it,
    so it settles on the saddle at the top of the pass. Directions are
    preconditioned by the p = 2 matrix of the same weights. After every sweep
    the knots on each side of the climbing knot are redistributed at equal
    arclength, which leaves the climbing knot in place. Returns the final
    maximum of the Rayleigh quotient over the knots (with the path and a
    convergence flag when ``return_path`` is set).
    """
    if knots < 3:
        raise DomainError("knots must be >= 3")
    opts = opts or SolveOpts(tol=1e-10, max_iters=2000)
    p, h = w.p, w.h
    P = w.coupling()
    M = linear_matrix(w)
    Mc = cho_factor(M, lower=True)
    u1 = w1.fn.values.copy()
    r = _odd_reflection(w, u1)

    def arc(a, b, m):
        th = np.linspace(0.0, 1.0, m)
        return np.array([_normalize_raw(w, (1 - t) * a + t * b) for t in th])

    half = knots // 2 + 1
    first = arc(u1, r, half)
    second = arc(r, -u1, knots - half + 1)
    path = np.vstack([first, second[1:]])
    path[0], path[-1] = u1, -u1

    def quot(v):
        return rayleigh_values(w, v, P)

    def grad(v, q):
        # h-inner-product gradient of Q at a normalized point
        return p * (apply_values(w, v, P) - q * phi_p(v, p))

    Q = np.array([quot(v) for v in path])
    tau_step = 1.0 / p
    converged = False
    it = 0
    stall = 0
    for it in range(1, opts.max_iters + 1):
        kmax = int(np.argmax(Q[1:-1])) + 1
        new = path.copy()
        for k in range(1, knots - 1):
            g = grad(path[k], Q[k])
            d = -cho_solve(Mc, g)
            t = path[k + 1] - path[k - 1]
            tn = np.sqrt(t @ M @ t)
            if tn > 0:
                t = t / tn
                along = d @ M @ t
                d = d - (2.0 if k == kmax else 1.0) * along * t
            new[k] = _normalize_raw(w, path[k] + tau_step * d)
        # redistribute each side of the climbing knot separately so it stays put
        left = _arc_reparam(w, new[: kmax + 1], M)
        right = _arc_reparam(w, new[kmax:], M)
        path = np.vstack([left, right[1:]])
        Qn = np.array([quot(v) for v in path])
        qmax = float(np.max(Qn[1:-1]))
        if not np.all(np.isfinite(Qn)):
            raise ConvergenceError("path iteration produced non-finite values")
        change = abs(qmax - float(np.max(Q[1:-1])))
        Q = Qn
        if change <= opts.tol * qmax:
            stall += 1
            if stall >= 3:
                converged = True
                break
        else:
            stall = 0
    kmax = int(np.argmax(Q[1:-1])) + 1
    val = float(Q[kmax])
    if not converged:
        log.warning("lambda2_path did not converge in %d sweeps; returning current bound", opts.max_iters)
    if val <= w1.value:
        raise ConvergenceError("path maximum does not exceed lambda_1")
    if return_path:
        return val, path, converged
    return val


# -- dense p = 2 oracle ------------------------------------------------------


def jacobi_eigh(A: np.ndarray, rel_tol: float = 1e-14, max_sweeps: int = 100):
    """Cyclic Jacobi rotations for a symmetric matrix.

    Returns (eigenvalues, eigenvectors as columns), unsorted. Sweeps until the
    off-diagonal Frobenius mass drops below ``rel_tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise DomainError("matrix must be symmetric")
    V = np.eye(n)
    normA = np.linalg.norm(A)
    target = rel_tol * normA

    mask = ~np.eye(n, dtype=bool)

    def off(X):
        return np.sqrt(np.sum(X[mask] ** 2))

    for _ in range(max_sweeps):
        if off(A) <= target:
            return np.diag(A).copy(), V
        for i in range(n - 1):
            for j in range(i + 1, n):
                aij = A[i, j]
                if aij == 0.0:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * aij)
                at = abs(theta)
                if at > 1e150:
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (at + np.sqrt(at * at + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ai = A[:, i].copy()
                aj = A[:, j]
                A[:, i] = c * ai - s * aj
                A[:, j] = s * ai + c * aj
                ri = A[i, :].copy()
                rj = A[j, :]
                A[i, :] = c * ri - s * rj
                A[j, :] = s * ri + c * rj
                A[i, j] = A[j, i] = 0.0
                vi = V[:, i].copy()
                vj = V[:, j]
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
    if off(A) <= target:
        return np.diag(A).copy(), V
    raise ConvergenceError("Jacobi sweeps exhausted")


def eigens_linear(w: NonlocalWeights, m: int) -> list[EigenPair]:
    """The m smallest eigenpairs of the assembled p = 2 matrix (Jacobi oracle)."""
    if w.p != 2.0:
        raise DomainError("eigens_linear requires p = 2")
    if not 1 <= m <= w.n:
        raise DomainError("need 1 <= m <= n")
    A = linear_matrix(w)
    vals, vecs = jacobi_eigh(A)
    order = np.argsort(vals)[:m]
    P = w.coupling()
    out = []
    for k in order:
        v = _normalize(w, vecs[:, k])
        out.append(EigenPair(float(vals[k]), GridFn(w.grid, v), eig_residual(w, float(vals[k]), v, P)))
    return out
