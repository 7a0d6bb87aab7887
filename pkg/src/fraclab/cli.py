"""Command-line front end.

    fraclab --config run.cfg --out results/ [--seed 0] [--threads 0]

Exit status: 0 success, 1 solver failure, 2 falsified assertion,
3 configuration error. Every failure also writes ``error.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ConfigError, ConfigParseError, RunConfig, parse_config
from .eigen import EigenPair, eig_residual, eigens_linear, lambda1_solve, lambda2_path
from .errors import ConvergenceError, DomainError, NearSingularError
from .grid import GridFn, build_grid
from .operator import apply_values, build_weights, energy_values, rayleigh_values
from .scalar import FracParams, picone_gap
from .solver import SolveOpts, solve_homotopy, solve_linear, solve_subcritical

log = logging.getLogger("fraclab")

EXIT_OK, EXIT_SOLVER, EXIT_FALSIFIED, EXIT_CONFIG = 0, 1, 2, 3


class Falsified(Exception):
    """A checked statement failed on a converged computation."""

    def __init__(self, message: str, detail=None):
        super().__init__(message)
        self.detail = detail


def _clean(obj):
    # JSON has no NaN/inf; encode them as null
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


class Run:
    def __init__(self, cfg: RunConfig, out: Path, seed: int, threads: int):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.threads = threads
        self.artifacts: list[str] = []
        self.grid = build_grid(cfg.a, cfg.b, cfg.n)
        self.w = build_weights(FracParams(cfg.s, cfg.p), self.grid, cfg.scheme)
        self.opts = SolveOpts(**cfg.solver_overrides())
        self._eig1 = None

    # -- helpers ---------------------------------------------------------
    def write(self, name: str, text: str) -> None:
        path = self.out / name
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        if name not in self.artifacts:
            self.artifacts.append(name)

    def write_json(self, name: str, obj) -> None:
        self.write(name, json.dumps(_clean(obj), indent=2) + "\n")

    def eig1(self) -> EigenPair:
        if self._eig1 is None:
            tol = min(self.opts.tol, 1e-12)
            self._eig1 = lambda1_solve(self.w, SolveOpts(tol=tol, max_iters=max(self.opts.max_iters, 1000)))
        return self._eig1

    def forcing(self) -> GridFn:
        kind, arg = self.cfg.forcing_kind()
        if kind == "const":
            return GridFn.constant(self.grid, float(arg))
        if kind == "eigen1":
            return self.eig1().fn
        path = Path(arg)
        if not path.is_absolute():
            path = self.cfg.base_dir / path
        return GridFn.from_csv(path.read_text(), self.grid)

    def values(self, absolute: str, relative: str):
        """A config list given directly or as multiples of lambda_1."""
        cfg = self.cfg
        if getattr(cfg, absolute) is not None:
            return list(getattr(cfg, absolute))
        lam1 = self.eig1().value
        return [x * lam1 for x in getattr(cfg, relative)]

    # -- commands --------------------------------------------------------
    def cmd_eigen(self):
        pair = lambda1_solve(self.w, self.opts)
        self._eig1 = pair
        self.write_json("eigen1.json", {**pair.to_json(), "iterations": pair.iterations,
                                        "converged": pair.converged})
        self.write("eigen1.csv", pair.fn.to_csv())
        if self.cfg.eigen2:
            val, path, conv = lambda2_path(self.w, pair, self.cfg.knots, return_path=True)
            top = path[int(np.argmax([rayleigh_values(self.w, v) for v in path[1:-1]])) + 1]
            self.write_json("eigen2.json", {"value": val, "residual": eig_residual(self.w, val, top),
                                            "converged": conv, "upper_bound": True})
            self.write("eigen2.csv", GridFn(self.grid, top).to_csv())
            if not conv:
                raise ConvergenceError("path minimax did not converge; eigen2.json holds the bound found")
        return {"lambda1": pair.value}

    def cmd_solve(self):
        cfg = self.cfg
        f = self.forcing()
        lam = cfg.lam if cfg.lam is not None else cfg.lam_rel * self.eig1().value
        method = cfg.method
        if method == "auto":
            method = "subcritical" if lam < self.eig1().value else "homotopy"
        if method == "subcritical":
            rep = solve_subcritical(self.w, lam, f, self.opts)
        elif method == "homotopy":
            rep = solve_homotopy(self.w, lam, f, self.opts, eig1=self.eig1())
        else:
            rep = solve_linear(self.w, lam, f)
        self.write_json("solve.json", {**rep.to_json(self.w), "method": method})
        self.write("solve.csv", rep.solution.to_csv())
        if not rep.converged:
            raise ConvergenceError(
                f"{method} solve at lambda={lam:.17g} "
                + ("diverged" if rep.diverged else f"stopped with residual {rep.residual:.3e}")
            )
        return {"lambda": lam, "method": method}

    def _emit_rows(self, stem, rows, extra=None):
        self.write(f"{stem}.csv", ex.rows_to_csv(rows))
        summ = ex.summary(stem, rows)
        if extra:
            summ.update(extra)
        bad = [i for i, r in enumerate(rows) if r.expect != 0 and r.converged and not r.sign_pure]
        summ["violations"] = [{"row": i, **rows[i].to_json()} for i in bad]
        self.write_json(f"{stem}.json", summ)
        return bad, summ

    def cmd_verify_max(self):
        f = self.forcing()
        lams = self.values("lambdas", "lambdas_rel")
        rows = ex.verify_max_principle(self.w, lams, f, self.opts, eig1=self.eig1(), threads=self.threads)
        bad, summ = self._emit_rows("verify_max", rows)
        if bad:
            raise Falsified(f"sign violated in {len(bad)} converged row(s)", summ["violations"])
        if not all(r.converged for r in rows):
            raise ConvergenceError("some subcritical solves did not converge")
        return {"rows": len(rows)}

    def cmd_scan_antimax(self):
        cfg = self.cfg
        f = self.forcing()
        e1 = self.eig1()
        eps = self.values("eps", "eps_rel")
        lam2 = lambda2_path(self.w, e1, cfg.knots)
        rows = ex.scan_antimax(self.w, f, eps, self.opts, eig1=e1, lam2=lam2, mirror=cfg.mirror,
                               threads=self.threads)
        extra = {"lambda1": e1.value, "lambda2_estimate": lam2,
                 "note": "one solution per lambda is found; other solutions are not examined"}
        if cfg.discover_delta:
            delta, drows = ex.discover_delta(self.w, f, min(eps), self.opts, eig1=e1, lam2=lam2)
            extra["delta_estimate"] = delta
            extra["delta_scan"] = [r.to_json() for r in drows]
        if cfg.scalings is not None:
            lam = e1.value + min(eps)
            neg = ex.negative_set_scan(self.w, f, lam, cfg.scalings, self.opts, eig1=e1,
                                       threads=self.threads)
            pos = ex.negative_set_scan(self.w, -f, lam, cfg.scalings, self.opts, eig1=e1,
                                       threads=self.threads)
            extra["negative_set"] = ex.negative_set_report(neg, cfg.scalings, h=self.grid.h)
            extra["positive_set"] = ex.negative_set_report(pos, cfg.scalings, h=self.grid.h, side="pos")
        bad, summ = self._emit_rows("antimax", rows, extra)
        if bad:
            raise Falsified(f"sign purity fails in {len(bad)} converged row(s)", summ["violations"])
        for key in ("negative_set", "positive_set"):
            if key in extra and extra[key]["violations"]:
                raise Falsified(f"{key} is empty for a converged row", extra[key])
        if not any(r.converged for r in rows):
            raise ConvergenceError("no homotopy solve converged")
        return {"rows": len(rows), "converged": sum(r.converged for r in rows)}

    def cmd_blowup(self):
        f = self.forcing()
        deltas = self.values("deltas", "deltas_rel")
        rows = ex.blowup_study(self.w, f, deltas, self.opts, eig1=self.eig1(), threads=self.threads)
        self.write("blowup.csv", ex.blowup_to_csv(rows))
        summ = ex.summary("blowup", rows)
        summ["expected_slope"] = -1.0 / (self.cfg.p - 1.0)
        self.write_json("blowup.json", summ)
        good = [r for r in rows if r.converged]
        if any(b.norm_inf <= a.norm_inf for a, b in zip(good, good[1:])):
            raise Falsified("norm_inf does not increase as delta decreases", summ["rows"])
        if len(good) < len(rows):
            raise ConvergenceError("some subcritical solves did not converge")
        return {"terminal_slope": summ["terminal_slope"]}

    def cmd_verify_antimax_linear(self):
        f = self.forcing()
        deltas = self.values("deltas", "deltas_rel")
        rows = ex.verify_antimax_linear(self.grid, self.cfg.s, f, deltas, scheme=self.cfg.scheme)
        bad, summ = self._emit_rows("antimax_linear", rows)
        if bad:
            raise Falsified(f"sign violated in {len(bad)} row(s)", summ["violations"])
        if not all(r.converged for r in rows):
            raise NearSingularError("a direct solve met a near-singular pivot")
        return {"rows": len(rows)}

    def cmd_oracle(self):
        rng = np.random.default_rng(self.seed)
        checks = {}
        # Picone inequality on random tuples
        m = 25_000
        gmin = math.inf
        for pp in (1.2, 2.0, 3.0, 5.0):
            a = rng.uniform(0, 10, size=(2, m))
            b = rng.uniform(0, 10, size=(2, m))
            b[b == 0] = 1e-300
            gmin = min(gmin, float(picone_gap(a[0], a[1], b[0], b[1], pp).min()))
        checks["picone_min_gap"] = {"value": gmin, "passed": bool(gmin >= -1e-12)}
        # gradient of the energy against central differences
        w = self.w if self.grid.n <= 64 else build_weights(
            FracParams(self.cfg.s, self.cfg.p), build_grid(self.cfg.a, self.cfg.b, 32), self.cfg.scheme)
        v = rng.standard_normal(w.n)
        Lv = apply_values(w, v)
        fd = np.empty(w.n)
        for i in range(w.n):
            e = np.zeros(w.n)
            step = 1e-6 * (1 + abs(v[i]))
            e[i] = step
            fd[i] = (energy_values(w, v + e) - energy_values(w, v - e)) / (2 * step) / (w.p * w.h)
        rel = float(np.max(np.abs(Lv - fd) / np.maximum(np.abs(Lv), 1e-300)))
        checks["gradient_fd"] = {"n": w.n, "max_rel_error": rel, "passed": bool(rel < 1e-6 or self.cfg.p < 2)}
        # first eigenvalue is a lower bound for the Rayleigh quotient
        e1 = self.eig1()
        q = min(rayleigh_values(self.w, np.abs(rng.standard_normal(self.w.n)) + 1e-3) for _ in range(100))
        checks["rayleigh_minimality"] = {"lambda1": e1.value, "min_random_quotient": q,
                                         "passed": bool(q >= e1.value - 1e-8)}
        if self.cfg.p == 2.0:
            lin = eigens_linear(self.w, 1)[0].value
            rel = abs(lin - e1.value) / lin
            checks["lambda1_vs_jacobi"] = {"jacobi": lin, "inverse_power": e1.value,
                                           "rel_diff": rel, "passed": bool(rel <= 1e-8)}
        self.write_json("oracle.json", {"seed": self.seed, "checks": checks})
        failed = [k for k, c in checks.items() if not c["passed"]]
        if failed:
            raise Falsified(f"oracle checks failed: {', '.join(failed)}", failed)
        return {"checks": len(checks)}


def run(cfg: RunConfig, out: str | Path | None = None, seed: int | None = None,
        threads: int | None = None) -> int:
    """Execute a validated config and write artifacts; returns the exit status."""
    out = Path(out if out is not None else (cfg.out or "out"))
    seed = cfg.seed if seed is None else seed
    threads = cfg.threads if threads is None else threads
    if threads == 0:
        threads = min(4, os.cpu_count() or 1)
    out.mkdir(parents=True, exist_ok=True)
    status, error, result = EXIT_OK, None, {}
    runner = None
    try:
        runner = Run(cfg, out, seed, threads)
        handler = getattr(runner, "cmd_" + cfg.command.replace("-", "_"))
        result = handler()
    except Falsified as exc:
        status, error = EXIT_FALSIFIED, {"kind": "falsified", "message": str(exc), "detail": exc.detail}
    except (ConvergenceError, NearSingularError) as exc:
        status, error = EXIT_SOLVER, {"kind": "solver", "message": str(exc)}
    except (DomainError, ConfigError, OSError) as exc:
        status, error = EXIT_CONFIG, {"kind": "config", "message": str(exc)}
    except Exception as exc:  # noqa: BLE001 - still owe the caller an error report
        log.exception("unexpected failure")
        status, error = EXIT_SOLVER, {"kind": "internal", "message": f"{type(exc).__name__}: {exc}"}
    artifacts = runner.artifacts if runner is not None else []
    if error is not None:
        _write_error(out, status, error)
        artifacts = artifacts + ["error.json"]
    summ = {"command": cfg.command, "exit_code": status, "seed": seed,
            "artifacts": artifacts, "result": result, "config": cfg.to_json()}
    (out / "summary.json").write_text(json.dumps(_clean(summ), indent=2) + "\n")
    return status


def _write_error(out: Path, status: int, error: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").write_text(json.dumps(_clean({"exit_code": status, **error}), indent=2) + "\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fraclab", description="Fractional p-Laplacian experiments")
    ap.add_argument("--config", required=True, help="path to a key = value config file")
    ap.add_argument("--out", default=None, help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, default=None, help="random seed (default: config, else 0)")
    ap.add_argument("--threads", type=int, default=None, help="worker threads, 0 = default")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 0:
        ap.error("--threads must be >= 0")
    try:
        path = Path(args.config)
        cfg = parse_config(path.read_text(), base_dir=path.parent)
    except (ConfigError, OSError) as exc:
        out = Path(args.out or "out")
        err = {"kind": "config", "message": str(exc)}
        if isinstance(exc, ConfigParseError):
            err.update({"line": exc.line, "key": exc.key})
        _write_error(out, EXIT_CONFIG, err)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = run(cfg, args.out, args.seed, args.threads)
    if status != EXIT_OK:
        print(f"fraclab: exit {status}; see error.json", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
