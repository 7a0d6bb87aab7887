import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclab.eigen import lambda1_solve
from fraclab.errors import ConvergenceError, DomainError, GridMismatchError, NearSingularError
from fraclab.grid import GridFn, build_grid
from fraclab.operator import apply_values, build_weights, linear_matrix
from fraclab.scalar import FracParams
from fraclab.solver import (
    SolveOpts,
    functional_J,
    gauss_solve,
    resolvent,
    solve_homotopy,
    solve_linear,
    solve_subcritical,
)


def W(n, s=0.5, p=2.0, scheme="midpoint"):
    return build_weights(FracParams(s, p), build_grid(0, 1, n), scheme)


@pytest.mark.parametrize(
    "kw", [{"tol": 0}, {"max_iters": 0}, {"armijo": 1.0}, {"radius": -1.0}, {"relax": 0.0}, {"t_steps": 0},
           {"step0": 0.0}],
)
def test_opts_validation(kw):
    with pytest.raises(DomainError):
        SolveOpts(**kw)


@pytest.mark.parametrize("lam", [0.0, 2.0, 4.0])
def test_subcritical_p2_matches_dense_solve(lam):
    w = W(24, 0.4)
    f = GridFn.from_callable(w.grid, lambda x: 1 + np.sin(3 * x))
    rep = solve_subcritical(w, lam, f)
    exact = np.linalg.solve(linear_matrix(w) - lam * np.eye(24), f.values)
    assert rep.converged and not rep.diverged and rep.residual <= 1e-10
    assert np.allclose(rep.solution.values, exact, rtol=1e-10, atol=0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_subcritical_energy_monotone_and_restarts_agree(p):
    w = W(32, 0.6, p)
    lam = 0.5 * lambda1_solve(w).value
    f = GridFn.constant(w.grid, 1.0)
    a = solve_subcritical(w, lam, f, SolveOpts(tol=1e-9))
    u0 = GridFn(w.grid, np.random.default_rng(0).standard_normal(32))
    b = solve_subcritical(w, lam, f, SolveOpts(tol=1e-9), u0=u0)
    assert np.all(np.diff(a.history) <= 1e-12 * (1 + np.abs(a.history[:-1])))
    assert np.all(np.diff(b.history) <= 1e-12 * (1 + np.abs(b.history[:-1])))
    if p >= 2:
        assert a.converged and b.converged
    assert np.allclose(a.solution.values, b.solution.values, rtol=1e-7, atol=1e-9)


def test_gradient_method_agrees_with_newton():
    w = W(8, 0.3, 3.0)
    f = GridFn.constant(w.grid, 1.0)
    # plain descent only sees J, which goes flat near residual ~ sqrt(eps)
    a = solve_subcritical(w, 0.0, f, SolveOpts(tol=1e-6, max_iters=20000), method="gradient")
    b = solve_subcritical(w, 0.0, f, SolveOpts(tol=1e-10))
    assert a.converged and b.converged
    assert np.allclose(a.solution.values, b.solution.values, rtol=1e-5)
    with pytest.raises(DomainError):
        solve_subcritical(w, 0.0, f, method="bfgs")


def test_functional_decreases_to_minimum():
    w = W(10, 0.5, 3.0)
    f = GridFn.constant(w.grid, 2.0)
    rep = solve_subcritical(w, 1.0, f)
    u = rep.solution
    J0 = functional_J(w, 1.0, f, u)
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = GridFn(w.grid, 1e-3 * rng.standard_normal(10))
        assert functional_J(w, 1.0, f, u + d) >= J0
    assert rep.energy == pytest.approx(J0)


def test_resolvent_inverts_operator():
    w = W(16, 0.7, 2.5)
    g = GridFn.from_callable(w.grid, lambda x: np.cos(2 * x))
    u = resolvent(w, g)
    assert np.allclose(apply_values(w, u.values), g.values, atol=1e-10)
    with pytest.raises(ConvergenceError):
        resolvent(w, g, SolveOpts(max_iters=1, tol=1e-15))


def test_forcing_checks():
    w = W(4)
    with pytest.raises(GridMismatchError):
        solve_subcritical(w, 0.0, GridFn.constant(build_grid(0, 1, 5), 1.0))
    with pytest.raises(DomainError):
        solve_subcritical(w, 0.0, np.ones(3))


def test_two_node_antimax_closed_form():
    # eigenvalues 4.5 and 10.5; f = (1,1) lies on the first eigenvector
    w = W(2)
    f = GridFn.constant(w.grid, 1.0)
    rep = solve_homotopy(w, 8.0, f)
    assert rep.converged
    assert np.allclose(rep.solution.values, 1 / (4.5 - 8.0), rtol=1e-10)
    lin = solve_linear(w, 8.0, f)
    assert np.allclose(lin.solution.values, rep.solution.values, rtol=1e-10)


@pytest.mark.parametrize("eps", [0.01, 0.2])
def test_homotopy_p2_matches_dense(eps):
    w = W(48, 0.5)
    e1 = lambda1_solve(w)
    f = GridFn.from_callable(w.grid, lambda x: 1 + x)
    lam = e1.value * (1 + eps)
    rep = solve_homotopy(w, lam, f, eig1=e1)
    exact = np.linalg.solve(linear_matrix(w) - lam * np.eye(48), f.values)
    assert rep.converged and np.allclose(rep.solution.values, exact, rtol=1e-9)


def test_homotopy_scaling_law_p3():
    # the problem is (p-1)-homogeneous: u(t f) = t^{1/(p-1)} u(f)
    w = W(40, 0.5, 3.0)
    e1 = lambda1_solve(w)
    lam = 1.01 * e1.value
    f = GridFn.constant(w.grid, 1.0)
    a = solve_homotopy(w, lam, f, eig1=e1)
    b = solve_homotopy(w, lam, 4.0 * f, SolveOpts(tol=4e-10), eig1=e1)
    assert a.converged and b.converged
    assert np.allclose(b.solution.values, 2.0 * a.solution.values, rtol=1e-8)


def test_homotopy_flags_resonance():
    for p in (2.0, 3.0):
        w = W(32, 0.4, p)
        e1 = lambda1_solve(w, SolveOpts(tol=1e-12))
        rep = solve_homotopy(w, e1.value, GridFn.constant(w.grid, 1.0), eig1=e1)
        assert rep.diverged and not rep.converged


def test_homotopy_explicit_radius_trips():
    w = W(32, 0.5, 2.0)
    e1 = lambda1_solve(w)
    rep = solve_homotopy(w, 1.01 * e1.value, GridFn.constant(w.grid, 1.0), SolveOpts(radius=1e-3), eig1=e1)
    assert rep.diverged and not rep.converged


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 0.9), st.sampled_from([2.0, 3.0]), st.floats(-0.5, 0.95))
def test_report_flags_consistent(s, p, rel):
    w = W(12, s, p)
    e1 = lambda1_solve(w)
    f = GridFn.constant(w.grid, 1.0)
    lam = rel * e1.value
    rep = solve_subcritical(w, lam, f)
    assert not (rep.converged and rep.diverged)
    if rep.converged:
        assert rep.residual <= 1e-10
        assert np.all(rep.solution.values > 0)


def test_report_json_fields():
    w = W(6)
    rep = solve_subcritical(w, 0.0, GridFn.constant(w.grid, 1.0))
    d = json.loads(json.dumps(rep.to_json(w)))
    assert set(d) == {"lambda", "s", "p", "n", "residual", "iterations", "converged", "diverged", "energy"}


def test_gauss_solve_vs_numpy():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((12, 12)) + 12 * np.eye(12)
    b = rng.standard_normal(12)
    assert np.allclose(gauss_solve(A, b), np.linalg.solve(A, b), rtol=1e-12)
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(gauss_solve(P, [2.0, 3.0]), [3.0, 2.0])


def test_gauss_solve_singular():
    with pytest.raises(NearSingularError):
        gauss_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 1.0])


def test_solve_linear_rejects_p3_and_resonance():
    with pytest.raises(DomainError):
        solve_linear(W(4, 0.5, 3.0), 1.0, np.ones(4))
    w = W(2)
    with pytest.raises(NearSingularError):
        solve_linear(w, 4.5, GridFn.constant(w.grid, 1.0))
