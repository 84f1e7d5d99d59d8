import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from mftc.geometry import NodeClass
from mftc.model import (
    CostModel,
    boundary_mask,
    h_boundary,
    h_discrete,
    h_discrete_dm,
    h_discrete_grad_p,
    hamiltonian_continuous,
    l_tilde,
)

from conftest import naive_h

BASE = CostModel(alpha=0.5, beta=2.0, lam=1.0)
finite = st.floats(-3, 3, allow_nan=False)


def test_cost_model_validation():
    for bad in [dict(alpha=1.0), dict(alpha=-0.1), dict(beta=1.0), dict(beta=2.5), dict(q=1.0), dict(lam=0.0)]:
        with pytest.raises(ValueError):
            CostModel(**bad)
    with pytest.warns(UserWarning):
        CostModel(beta=1.5, q=2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        CostModel(beta=2.0, q=2.0)
    assert CostModel(beta=1.5, q=3.0).beta_star == pytest.approx(3.0)


def test_cost_family():
    c = CostModel(lam=0.3, q=3.0)
    assert c.ell(2.0) == pytest.approx(0.3 * 4)
    assert c.dell_dm(2.0) == pytest.approx(0.3 * 2 * 2)
    assert c.ell_plus_m_dell(2.0) == pytest.approx(c.ell(2.0) + 2.0 * c.dell_dm(2.0))


def test_h_discrete_examples():
    assert h_discrete(1.0, np.zeros(4), BASE) == pytest.approx(1.0)
    assert h_discrete(1.0, np.array([-1.0, 1.0, 0.0, 0.0]), BASE) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        h_discrete(0.0, np.zeros(4), BASE)


@given(st.floats(0.05, 5), finite, finite, st.floats(0, 0.99), st.floats(1.05, 2))
def test_h_discrete_consistency_with_continuous(m, p1, p2, alpha, beta):
    cost = CostModel(alpha=alpha, beta=beta, lam=0.7, q=2.0 if beta >= 2 else beta / (beta - 1))
    hd = h_discrete(m, np.array([p1, p1, p2, p2]), cost)
    hc = hamiltonian_continuous(m, np.array([p1, p2]), cost)
    assert hd == pytest.approx(hc, rel=1e-12, abs=1e-12)


@given(st.floats(0.05, 5), st.lists(finite, min_size=4, max_size=4))
def test_h_discrete_matches_naive(m, p):
    assert h_discrete(m, np.array(p), BASE) == pytest.approx(naive_h(m, p, 0.5, 2.0, 1.0), rel=1e-12, abs=1e-12)


def test_grad_p_inactive_parts_and_sign_pattern(rng):
    assert np.all(h_discrete_grad_p(1.0, np.array([1.0, -1.0, 1.0, -1.0]), BASE) == 0)
    m = rng.uniform(0.01, 5, 100_000)
    p = rng.standard_normal((4, 100_000)) * 3
    g = h_discrete_grad_p(m, p, CostModel(alpha=0.3, beta=1.5, q=3.0))
    assert np.all(g[0] >= 0) and np.all(g[2] >= 0)
    assert np.all(g[1] <= 0) and np.all(g[3] <= 0)


def test_grad_p_zero_where_G_zero_for_beta_below_two():
    cost = CostModel(alpha=0.2, beta=1.5, q=3.0)
    g = h_discrete_grad_p(1.0, np.array([0.5, -0.5, 0.0, 0.0]), cost)
    assert np.all(np.isfinite(g)) and np.all(g == 0)


def _fd_points(rng, n):
    m = rng.uniform(0.2, 3, n)
    p = rng.standard_normal((4, n)) * 2
    # keep every component away from its kink at 0
    p = np.where(np.abs(p) < 0.05, 0.05 * np.sign(p) + 0.05 * (p == 0), p)
    return m, p


@pytest.mark.parametrize("alpha,beta,q", [(0.5, 2.0, 2.0), (0.3, 1.6, 3.0), (0.0, 1.9, 2.5)])
def test_grad_p_and_dm_against_central_differences(alpha, beta, q, rng):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cost = CostModel(alpha=alpha, beta=beta, lam=0.8, q=q)
    m, p = _fd_points(rng, 1000)
    eps = 1e-6
    g = h_discrete_grad_p(m, p, cost)
    for k in range(4):
        dp = np.zeros_like(p)
        dp[k] = eps
        fd = (h_discrete(m, p + dp, cost) - h_discrete(m, p - dp, cost)) / (2 * eps)
        np.testing.assert_allclose(g[k], fd, rtol=1e-6, atol=1e-7)
    fd = (h_discrete(m + eps, p, cost) - h_discrete(m - eps, p, cost)) / (2 * eps)
    np.testing.assert_allclose(h_discrete_dm(m, p, cost), fd, rtol=1e-6, atol=1e-7)


def test_dm_examples():
    cost = CostModel(alpha=0.5, beta=2.0, lam=0.25)
    assert h_discrete_dm(2.0, np.zeros(4), cost) == pytest.approx(0.25)
    c0 = CostModel(alpha=0.0, beta=2.0, lam=0.25)
    assert h_discrete_dm(2.0, np.array([-3.0, 1.0, 0.0, 2.0]), c0) == pytest.approx(0.25)


@given(st.floats(0.1, 4), st.lists(finite, min_size=4, max_size=4), st.floats(0, 2))
def test_monotonicity(m, p, d):
    p = np.array(p)
    base = h_discrete(m, p, BASE)
    for k, sign in enumerate([1, -1, 1, -1]):
        q = p.copy()
        q[k] += d
        assert sign * (h_discrete(m, q, BASE) - base) >= -1e-12


@given(st.floats(0.1, 4), st.lists(finite, min_size=8, max_size=8), st.floats(0.01, 0.99),
       st.sampled_from([1.3, 1.7, 2.0]))
def test_concavity_in_p(m, pp, t, beta):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cost = CostModel(alpha=0.4, beta=beta)
    p, q = np.array(pp[:4]), np.array(pp[4:])
    mid = h_discrete(m, t * p + (1 - t) * q, cost)
    assert mid >= t * h_discrete(m, p, cost) + (1 - t) * h_discrete(m, q, cost) - 1e-12


def test_boundary_hamiltonian():
    m, p = 1.7, np.array([-0.6, 0.9, -1.1, 0.4])
    # the left edge keeps the forward x difference and both y differences
    expect = -(m**-0.5) * (0.6**2 + 1.1**2 + 0.4**2) + m
    assert h_boundary(NodeClass.EDGE_LEFT, m, p, BASE) == pytest.approx(expect)
    expect_corner = -(m**-0.5) * (0.6**2 + 0.4**2) + m
    assert h_boundary(NodeClass.CORNER_TOP_LEFT, m, p, BASE) == pytest.approx(expect_corner)
    assert h_boundary(NodeClass.EDGE_TOP, m, np.zeros(4), BASE) == pytest.approx(m)
    with pytest.raises(ValueError):
        h_boundary(NodeClass.INTERIOR, m, p, BASE)
    with pytest.raises(ValueError):
        boundary_mask(NodeClass.EXCLUDED)


def test_boundary_1d_reduction():
    cost = CostModel(alpha=0.3, beta=1.5, q=3.0)
    m, p1 = 0.8, -0.7
    only_p1 = np.array([True, False, False, False])
    val = h_discrete(m, np.array([p1, 5.0, -3.0, 2.0]), cost, only_p1)
    assert val == pytest.approx(-(m**-0.3) * abs(min(p1, 0)) ** 1.5 + cost.ell(m))


def test_boundary_hamiltonian_is_constrained_infimum():
    # beta = 2: H(m, p) = inf over velocities xi of [xi.p + m^a |xi|^2 / 4] + l, where the
    # discrete version splits xi into four nonnegative one-sided parts
    rng = np.random.default_rng(5)
    for cls in [NodeClass.EDGE_LEFT, NodeClass.EDGE_BOTTOM, NodeClass.CORNER_BOTTOM_RIGHT]:
        mask = boundary_mask(cls)
        for _ in range(5):
            m = rng.uniform(0.3, 2)
            p = rng.standard_normal(4)
            sign = np.array([1, -1, 1, -1])

            # xi_k >= 0 is the speed through channel k; closed channels carry none
            def obj(xi):
                xi = xi * mask
                return np.dot(xi, sign * p) + m**0.5 * np.sum(xi**2) / 4

            res = minimize(obj, np.ones(4), bounds=[(0, None)] * 4)
            assert h_boundary(cls, m, p, BASE) == pytest.approx(res.fun + m, abs=1e-6)


def test_l_tilde_examples():
    assert l_tilde(np.zeros(5), BASE) == 0.0
    assert l_tilde(np.array([1.0, -0.1, 0, 0, 0]), BASE) == np.inf
    assert l_tilde(np.array([0.0, 0.1, 0, 0, 0]), BASE) == np.inf
    assert l_tilde(np.array([1.0, 1.0, 0, 0, 0]), BASE) == pytest.approx(1.25)


@pytest.mark.parametrize("alpha,beta", [(0.5, 2.0), (0.01, 2.0), (0.7, 1.6)])
def test_l_tilde_fenchel_duality(alpha, beta, rng):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cost = CostModel(alpha=alpha, beta=beta, lam=0.4)
    for _ in range(10):
        s = np.array([rng.uniform(0.2, 2), rng.uniform(0, 1), -rng.uniform(0, 1),
                      rng.uniform(0, 1), -rng.uniform(0, 1)])
        m, flux = s[0], s[1:]

        def neg(p):
            return np.dot(flux, p) - m * h_discrete(m, p, cost)

        best = min(minimize(neg, x0, method="Nelder-Mead",
                            options=dict(xatol=1e-10, fatol=1e-12, maxiter=20000)).fun
                   for x0 in (np.zeros(4), -np.sign(flux) * 0.5 - 0.01))
        assert l_tilde(s, cost) == pytest.approx(-best, rel=1e-6, abs=1e-8)


@given(st.lists(st.floats(0.01, 3), min_size=10, max_size=10), st.sampled_from([0.0, 0.5, 0.9]))
def test_l_tilde_midpoint_convex(vals, alpha):
    cost = CostModel(alpha=alpha, beta=2.0, lam=0.5)
    sign = np.array([1, 1, -1, 1, -1])
    a = np.array(vals[:5]) * sign
    b = np.array(vals[5:]) * sign
    assert l_tilde((a + b) / 2, cost) <= (l_tilde(a, cost) + l_tilde(b, cost)) / 2 + 1e-12
