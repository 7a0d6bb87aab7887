"""Numerical checks of the sign properties of forced Dirichlet solutions.

Each scan solves independent problems on shared, read-only weights. With
``threads > 1`` the solves run on a thread pool; rows always come back in
input order.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .eigen import EigenPair, eigens_linear, lambda1_solve, lambda2_path
from .errors import ConvergenceError, DomainError, NearSingularError
from .grid import Grid1D, GridFn, check_same_grid, lp_norm, sign_split
from .operator import NonlocalWeights, build_weights
from .scalar import FracParams
from .solver import SolveOpts, SolveReport, solve_homotopy, solve_linear, solve_subcritical

CSV_HEADER = "lambda,s,p,n,min_u,max_u,meas_neg,meas_pos,norm_inf,iterations,converged,diverged"


@dataclass
class ScanRow:
    lam: float
    s: float
    p: float
    n: int
    min_u: float
    max_u: float
    meas_neg: float
    meas_pos: float
    norm_inf: float
    iterations: int
    converged: bool
    diverged: bool
    # +1 / -1: the sign every node should have; 0 when nothing is asserted
    expect: int = 0
    # scale of the forcing, for rows generated from t * f
    scale: float = 1.0
    solution: GridFn | None = field(default=None, repr=False, compare=False)

    @property
    def sign_pure(self) -> bool:
        if self.expect > 0:
            return self.min_u > 0 and self.meas_neg == 0
        if self.expect < 0:
            return self.max_u < 0 and self.meas_pos == 0
        return False

    @property
    def ok(self) -> bool:
        """Converged and of the expected sign at every node."""
        return self.converged and self.sign_pure

    def csv_line(self) -> str:
        vals = (self.lam, self.s, self.p, self.n, self.min_u, self.max_u, self.meas_neg,
                self.meas_pos, self.norm_inf)
        head = ",".join(_fmt(v) for v in vals)
        return f"{head},{self.iterations},{_fmt_bool(self.converged)},{_fmt_bool(self.diverged)}"

    def to_json(self) -> dict:
        return {
            "lambda": self.lam, "s": self.s, "p": self.p, "n": self.n,
            "min_u": self.min_u, "max_u": self.max_u,
            "meas_neg": self.meas_neg, "meas_pos": self.meas_pos,
            "norm_inf": self.norm_inf, "iterations": self.iterations,
            "converged": self.converged, "diverged": self.diverged,
            "expect": self.expect, "sign_pure": self.sign_pure,
        }


@dataclass
class BlowupRow:
    delta: float
    norm_inf: float
    log_slope: float  # secant against the previous row; nan on the first
    dist_w1: float  # sup distance of u / ||u||_p to w1
    converged: bool = True

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("delta must be positive")

    def to_json(self) -> dict:
        return {
            "delta": self.delta, "norm_inf": self.norm_inf, "log_slope": self.log_slope,
            "dist_w1": self.dist_w1, "converged": self.converged,
        }


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _fmt_bool(b: bool) -> str:
    return "true" if b else "false"


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in rows:
        buf.write(r.csv_line() + "\n")
    return buf.getvalue()


def blowup_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("delta,norm_inf,log_slope,dist_w1,converged\n")
    for r in rows:
        buf.write(f"{_fmt(r.delta)},{_fmt(r.norm_inf)},{_fmt(r.log_slope)},{_fmt(r.dist_w1)},"
                  f"{_fmt_bool(r.converged)}\n")
    return buf.getvalue()


def make_row(w: NonlocalWeights, rep: SolveReport, expect: int = 0, scale: float = 1.0) -> ScanRow:
    u = rep.solution
    _, _, mpos, mneg = sign_split(u)
    v = u.values
    return ScanRow(
        lam=float(rep.lam), s=w.params.s, p=w.p, n=w.n,
        min_u=float(v.min()), max_u=float(v.max()),
        meas_neg=float(mneg), meas_pos=float(mpos),
        norm_inf=float(np.max(np.abs(v))),
        iterations=int(rep.iterations), converged=bool(rep.converged), diverged=bool(rep.diverged),
        expect=expect, scale=scale, solution=u,
    )


def _failed_row(w, lam, expect, scale=1.0) -> ScanRow:
    nan = float("nan")
    return ScanRow(float(lam), w.params.s, w.p, w.n, nan, nan, nan, nan, nan, 0, False, False,
                   expect, scale)


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _check_forcing(w: NonlocalWeights, f: GridFn) -> np.ndarray:
    check_same_grid(w.grid, f.grid)
    fv = f.values
    if np.any(fv < 0) or not np.any(fv > 0):
        raise DomainError("forcing must satisfy f >= 0 and f != 0")
    return fv


def _eig1(w, eig1):
    return eig1 if eig1 is not None else lambda1_solve(w, SolveOpts(tol=1e-12, max_iters=1000))


# -- maximum principle -------------------------------------------------------


def verify_max_principle(
    w: NonlocalWeights,
    lambdas,
    f: GridFn,
    opts: SolveOpts | None = None,
    *,
    eig1: EigenPair | None = None,
    threads: int = 1,
) -> list[ScanRow]:
    """Subcritical solves for f and for -f at each lambda below lambda_1.

    Rows for f (expected positive) come first, then the mirrored rows for -f
    (expected negative). A solve that fails to converge stays in the list as
    a failed row.
    """
    _check_forcing(w, f)
    lam1 = _eig1(w, eig1).value
    lambdas = [float(x) for x in lambdas]
    for lam in lambdas:
        if not lam < lam1:
            raise DomainError(f"lambda = {lam} is not below lambda_1 = {lam1}")
    opts = opts or SolveOpts()
    jobs = [(lam, f, 1) for lam in lambdas] + [(lam, -f, -1) for lam in lambdas]

    def run(job):
        lam, g, sgn = job
        try:
            return make_row(w, solve_subcritical(w, lam, g, opts), sgn)
        except (ConvergenceError, FloatingPointError):
            return _failed_row(w, lam, sgn)

    return _pmap(run, jobs, threads)


# -- anti-maximum principle --------------------------------------------------


def scan_antimax(
    w: NonlocalWeights,
    f: GridFn,
    eps_list,
    opts: SolveOpts | None = None,
    *,
    eig1: EigenPair | None = None,
    lam2: float | None = None,
    mirror: bool = True,
    threads: int = 1,
) -> list[ScanRow]:
    """Homotopy solves at lambda = lambda_1 + eps for each eps.

    Rows for f are expected negative; with ``mirror`` the rows for -f
    (expected positive) follow. ``lam2`` is an estimate of lambda_2, computed
    by the path minimax when omitted.
    """
    _check_forcing(w, f)
    e1 = _eig1(w, eig1)
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(not e > 0 for e in eps_list):
        raise DomainError("eps values must be positive")
    if lam2 is None:
        lam2 = lambda2_path(w, e1)
    for e in eps_list:
        if not e1.value + e < lam2:
            raise DomainError(f"lambda_1 + {e} is not below the lambda_2 estimate {lam2}")
    opts = opts or SolveOpts()
    jobs = [(e, f, -1) for e in eps_list]
    if mirror:
        jobs += [(e, -f, 1) for e in eps_list]

    def run(job):
        e, g, sgn = job
        lam = e1.value + e
        try:
            return make_row(w, solve_homotopy(w, lam, g, opts, eig1=e1), sgn)
        except (ConvergenceError, FloatingPointError):
            return _failed_row(w, lam, sgn)

    return _pmap(run, jobs, threads)


def discover_delta(
    w: NonlocalWeights,
    f: GridFn,
    eps0: float,
    opts: SolveOpts | None = None,
    *,
    eig1: EigenPair | None = None,
    lam2: float | None = None,
    factor: float = 2.0,
) -> tuple[float, list[ScanRow]]:
    """Scan eps upward from eps0 by ``factor`` until sign purity fails.

    Returns the largest eps whose row converged with every node negative
    (nan if none did) and the rows visited. The scan stops before lambda_2.
    """
    e1 = _eig1(w, eig1)
    if lam2 is None:
        lam2 = lambda2_path(w, e1)
    if not 0 < eps0 < lam2 - e1.value:
        raise DomainError("eps0 must lie in (0, lambda_2 - lambda_1)")
    if not factor > 1:
        raise DomainError("factor must exceed 1")
    rows = []
    best = float("nan")
    e = eps0
    while e1.value + e < lam2:
        row = scan_antimax(w, f, [e], opts, eig1=e1, lam2=lam2, mirror=False)[0]
        rows.append(row)
        if not row.ok:
            if row.converged:
                break
        else:
            best = e
        e *= factor
    return best, rows


# -- resonance blow-up ---------------------------------------------------------


def blowup_study(
    w: NonlocalWeights,
    f: GridFn,
    deltas,
    opts: SolveOpts | None = None,
    *,
    eig1: EigenPair | None = None,
    threads: int = 1,
) -> list[BlowupRow]:
    """Subcritical solves at lambda = lambda_1 - delta for decreasing delta.

    Records the sup norm, the secant slope of log(norm_inf) against
    log(delta), and how far the Lp-normalized solution is from w1.
    """
    fv = _check_forcing(w, f)
    deltas = [float(d) for d in deltas]
    if not deltas or any(not d > 0 for d in deltas):
        raise DomainError("deltas must be positive")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("deltas must be strictly decreasing")
    e1 = _eig1(w, eig1)
    w1 = e1.fn.values
    opts = opts or SolveOpts()

    def run(d):
        try:
            return solve_subcritical(w, e1.value - d, fv, opts)
        except ConvergenceError:
            return None

    reps = _pmap(run, deltas, threads)
    rows = []
    prev = None
    for d, rep in zip(deltas, reps):
        if rep is None:
            rows.append(BlowupRow(d, float("nan"), float("nan"), float("nan"), False))
            prev = None
            continue
        u = rep.solution
        ninf = float(np.max(np.abs(u.values)))
        nrm = lp_norm(u, w.p)
        dist = float(np.max(np.abs(u.values / nrm - w1))) if nrm > 0 else float("nan")
        slope = float("nan")
        if prev is not None:
            slope = math.log(ninf / prev[1]) / math.log(d / prev[0])
        rows.append(BlowupRow(d, ninf, slope, dist, bool(rep.converged)))
        prev = (d, ninf)
    return rows


# -- two-sided linear anti-maximum ------------------------------------------


def verify_antimax_linear(
    grid: Grid1D,
    s: float,
    f: GridFn,
    delta_list,
    *,
    scheme: str = "midpoint",
    eigs: list[EigenPair] | None = None,
) -> list[ScanRow]:
    """Direct p = 2 solves at lambda_1 + delta and lambda_1 - delta.

    For <f, w1> > 0 the solution is expected negative above lambda_1 and
    positive below; for <f, w1> < 0 both signs flip. Rows alternate
    (above, below) for each delta.
    """
    check_same_grid(grid, f.grid)
    w = build_weights(FracParams(s, 2.0), grid, scheme)
    if eigs is None:
        eigs = eigens_linear(w, 1)
    e1 = eigs[0]
    proj = grid.h * float(np.dot(f.values, e1.fn.values))
    if abs(proj) <= 1e-10:
        raise DomainError("<f, w1> vanishes; the two-sided statement does not apply")
    sgn = 1 if proj > 0 else -1
    rows = []
    for d in delta_list:
        d = float(d)
        if not d > 0:
            raise DomainError("delta must be positive")
        for lam, expect in ((e1.value + d, -sgn), (e1.value - d, sgn)):
            try:
                rows.append(make_row(w, solve_linear(w, lam, f), expect))
            except NearSingularError:
                rows.append(_failed_row(w, lam, expect))
    return rows


# -- sign-set measures ---------------------------------------------------------


def negative_set_scan(
    w: NonlocalWeights,
    f: GridFn,
    lam: float,
    scalings,
    opts: SolveOpts | None = None,
    *,
    eig1: EigenPair | None = None,
    threads: int = 1,
) -> list[ScanRow]:
    """Homotopy solves for the forcings t * f at a fixed lambda above lambda_1.

    The residual tolerance is scaled by max(1, t): the residual of t * f
    carries rounding in proportion to t.
    """
    check_same_grid(w.grid, f.grid)
    e1 = _eig1(w, eig1)
    if lam < e1.value:
        raise DomainError("lambda must be at least lambda_1")
    opts = opts or SolveOpts()

    def run(t):
        o = replace(opts, tol=opts.tol * max(1.0, float(t)))
        try:
            return make_row(w, solve_homotopy(w, lam, float(t) * f, o, eig1=e1), 0, float(t))
        except ConvergenceError:
            return _failed_row(w, lam, 0, float(t))

    return _pmap(run, list(scalings), threads)


def negative_set_report(rows, scalings, *, h: float | None = None, side: str = "neg") -> dict:
    """Smallest measure of the negative (or, with side="pos", positive) set.

    Rows that did not converge are left out of the minimum; a converged row
    whose set is empty is reported as a violation.
    """
    rows = list(rows)
    if not rows:
        raise DomainError("no rows to report on")
    if side not in ("neg", "pos"):
        raise DomainError("side must be 'neg' or 'pos'")
    scalings = [float(t) for t in scalings]
    if len(scalings) != len(rows):
        raise DomainError("need one scaling per row")
    attr = "meas_neg" if side == "neg" else "meas_pos"
    used = [(t, r) for t, r in zip(scalings, rows) if r.converged]
    meas = [getattr(r, attr) for _, r in used]
    violations = [t for t, r in used if getattr(r, attr) == 0]
    out = {
        "side": side,
        "rows": len(rows),
        "converged_rows": len(used),
        "min_measure": min(meas) if meas else float("nan"),
        "violations": violations,
        "positive": bool(meas) and not violations,
    }
    if h is not None:
        out["mesh_h"] = h
        out["at_least_one_cell"] = bool(meas) and min(meas) >= h * (1 - 1e-12)
    return out


def summary(name: str, rows) -> dict:
    """Summary JSON for a scan: counts and per-row verdicts."""
    rows = list(rows)
    if rows and isinstance(rows[0], BlowupRow):
        slopes = [r.log_slope for r in rows if math.isfinite(r.log_slope)]
        return {
            "experiment": name,
            "rows": [r.to_json() for r in rows],
            "terminal_slope": slopes[-1] if slopes else float("nan"),
            "monotone": all(b.norm_inf > a.norm_inf for a, b in zip(rows, rows[1:])),
        }
    checked = [r for r in rows if r.expect != 0]
    return {
        "experiment": name,
        "rows": [r.to_json() for r in rows],
        "converged": sum(r.converged for r in rows),
        "diverged": sum(r.diverged for r in rows),
        "sign_pure": sum(r.ok for r in checked),
        "checked": len(checked),
        "all_pure": all(r.ok for r in checked if r.converged) and any(r.converged for r in checked),
    }
