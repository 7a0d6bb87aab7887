import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from fraclab.errors import DomainError
from fraclab.scalar import FracParams, compute_K, phi_p, picone_gap, sphere_integral


def beta_sphere(p):
    # closed form of the circle integral of |cos|^p: 2 B(1/2, (p+1)/2)
    return 2.0 * math.sqrt(math.pi) * gamma((p + 1) / 2) / gamma(p / 2 + 1)


def test_K_examples():
    assert compute_K(1, 0.5, 2.0) == 0.5
    assert compute_K(2, 0.5, 2.0) == pytest.approx(1 / math.pi, rel=1e-12)


@pytest.mark.parametrize("p", [1.1, 1.5, 2.0, 3.0, 4.7, 8.0])
def test_circle_integral_against_beta(p):
    assert sphere_integral(2, p) == pytest.approx(beta_sphere(p), rel=1e-11)


def test_K_vanishes_linearly_as_s_to_one():
    ks = [compute_K(1, 1 - e, 3.0) / e for e in (1e-2, 1e-4, 1e-6)]
    assert ks == pytest.approx([1.5] * 3, rel=1e-9)


@given(st.floats(0.01, 0.99), st.floats(1.01, 10.0))
def test_K_dim1_identity(s, p):
    assert compute_K(1, s, p) * 2 == pytest.approx(p * (1 - s), rel=1e-15)


@pytest.mark.parametrize("args", [(3, 0.5, 2.0), (1, 0.0, 2.0), (1, 1.0, 2.0), (1, 0.5, 1.0), (2, 0.5, math.inf)])
def test_K_domain_errors(args):
    with pytest.raises(DomainError):
        compute_K(*args)


def test_fracparams_fills_and_checks_kappa():
    fp = FracParams(0.5, 2.0)
    assert fp.kappa == 0.5 and fp.sp == 1.0
    assert FracParams(0.5, 2.0, 1, 0.5).kappa == 0.5
    with pytest.raises(DomainError):
        FracParams(0.5, 2.0, 1, 0.6)
    with pytest.raises(DomainError, match=r"s must lie in \(0,1\)"):
        FracParams(1.5, 2.0)


def test_phi_examples():
    assert phi_p(-3.0, 2.0) == -3.0
    assert phi_p(0.0, 1.2) == 0.0
    assert phi_p(4.0, 1.5) == pytest.approx(2.0, rel=1e-15)
    out = phi_p(np.array([0.0, -1.0, 8.0]), 1.5)
    assert out[0] == 0.0 and np.all(np.isfinite(out))
    with pytest.raises(DomainError):
        phi_p(1.0, 1.0)


@given(st.floats(-1e6, 1e6), st.floats(1.01, 8.0))
def test_phi_odd(t, p):
    assert phi_p(-t, p) == -phi_p(t, p)


@given(st.floats(1.01, 8.0))
def test_phi_strictly_increasing(p):
    t = np.linspace(-5, 5, 1001)
    assert np.all(np.diff(phi_p(t, p)) > 0)


def test_picone_examples():
    assert picone_gap(1, 2, 1, 2, 3) == pytest.approx(0.0, abs=1e-14)
    assert picone_gap(1, 0, 1, 1, 2) == 1.0
    assert picone_gap(2, 1, 1, 2, 3) == pytest.approx(8.75, rel=1e-15)


@pytest.mark.parametrize("args", [(-1, 1, 1, 1, 2), (1, 1, 0, 1, 2), (1, 1, 1, -2, 2), (1, 1, 1, 1, 1)])
def test_picone_domain(args):
    with pytest.raises(DomainError):
        picone_gap(*args)


tuples = st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(1e-3, 10), st.floats(1e-3, 10),
                   st.sampled_from([1.2, 1.5, 2.0, 3.0, 5.0]))


@given(tuples)
def test_picone_nonnegative(t):
    a1, a2, b1, b2, p = t
    assert picone_gap(a1, a2, b1, b2, p) >= -1e-12 * (1 + max(a1, a2, b1, b2) ** p)


@given(st.floats(0, 5), st.floats(1e-2, 10), st.floats(1e-2, 10), st.sampled_from([1.2, 2.0, 3.0, 5.0]))
def test_picone_vanishes_on_proportional(k, b1, b2, p):
    assert abs(picone_gap(k * b1, k * b2, b1, b2, p)) <= 1e-9 * (1 + (k * max(b1, b2)) ** p)


@settings(max_examples=200)
@given(tuples)
def test_picone_zero_only_when_proportional(t):
    a1, a2, b1, b2, p = t
    if abs(a1 * b2 - a2 * b1) > 1e-3 * (1 + a1 * b2):
        assert picone_gap(a1, a2, b1, b2, p) > 0
