import numpy as np
import pytest
from hypothesis import given, strategies as st

from mftc.geometry import build_geometry
from mftc.operators import (
    d_plus_1,
    d_plus_2,
    fp_residual,
    gradient4,
    gradient4_adjoint,
    inner,
    lambda_adjoint,
    lambda_apply,
    norm,
)

from conftest import geometries, naive_lambda, naive_lambda_adjoint, random_scalar, random_stacked


def test_d_plus_constant_and_affine():
    g = build_geometry("periodic", 16, 2)
    X, Y = g.coords
    const = np.full(g.spatial_shape, 3.0)
    assert d_plus_1(const, 3, 4, g) == 0.0 and d_plus_2(const, 3, 4, g) == 0.0
    for i in range(g.Nh - 1):
        assert d_plus_1(X, i, 2, g) == pytest.approx(1.0)
        assert d_plus_2(Y, 2, i, g) == pytest.approx(1.0)


def test_d_plus_periodic_wraparound():
    g = build_geometry("periodic", 16, 2)
    X, _ = g.coords
    assert d_plus_1(X, g.Nh - 1, 0, g) == pytest.approx(-(g.Nh - 1))
    # negative indices wrap as well
    assert d_plus_1(X, -1, 0, g) == pytest.approx(-(g.Nh - 1))


def test_d_plus_box_boundary_raises():
    g = build_geometry("box", 4, 2, obstacles=[(0.25, 0.75, 0.25, 0.75)])
    phi = np.zeros(g.spatial_shape)
    with pytest.raises(ValueError):
        d_plus_1(phi, 4, 0, g)
    with pytest.raises(ValueError):
        d_plus_2(phi, 0, 4, g)
    with pytest.raises(ValueError):
        d_plus_1(phi, 1, 2, g)  # towards the excluded node (2, 2)


def test_lambda_constant_and_linear_in_time():
    for g in geometries():
        phi = np.full(g.scalar_shape, 2.5) * g.node_mask
        assert np.abs(lambda_apply(phi, g)).max() < 1e-12
        t = g.times[:, None, None] * np.ones(g.scalar_shape) * g.node_mask
        out = lambda_apply(t, g)
        np.testing.assert_allclose(out[0][:, g.node_mask], 1.0)
        assert np.abs(out[1:]).max() < 1e-12


@pytest.mark.parametrize("g", geometries() + [build_geometry("box", 10, 2, obstacles=[(0.2, 0.3, 0.3, 0.7)])])
def test_lambda_matches_loop_oracle(g, rng):
    phi = random_scalar(g, rng)
    np.testing.assert_allclose(lambda_apply(phi, g), naive_lambda(phi, g), atol=1e-12)


@pytest.mark.parametrize("g", geometries())
def test_lambda_adjoint_matches_assembled_transpose(g, rng):
    sigma = random_stacked(g, rng)
    np.testing.assert_allclose(lambda_adjoint(sigma, g), naive_lambda_adjoint(sigma, g), atol=1e-10)


def test_lambda_rejects_diffusion():
    g = build_geometry("periodic", 4, 2)
    with pytest.raises(ValueError):
        lambda_apply(g.zeros(), g, nu=0.1)


@given(
    kind=st.sampled_from(["periodic", "box"]),
    Nh=st.integers(2, 9),
    NT=st.integers(2, 6),
    seed=st.integers(0, 2**32 - 1),
)
def test_adjoint_identity(kind, Nh, NT, seed):
    g = build_geometry(kind, Nh, NT)
    rng = np.random.default_rng(seed)
    phi = random_scalar(g, rng)
    sigma = random_stacked(g, rng)
    lhs = inner(lambda_apply(phi, g), sigma, g)
    rhs = inner(phi, lambda_adjoint(sigma, g), g)
    assert abs(lhs - rhs) <= 1e-12 * norm(phi, g) * norm(sigma, g)


def test_adjoint_of_density_channel_only(rng):
    g = build_geometry("box", 5, 4)
    sigma = g.zeros5()
    sigma[0] = rng.random(sigma[0].shape)
    m = sigma[0]  # m[n-1] holds level n
    out = lambda_adjoint(sigma, g)
    np.testing.assert_allclose(out[0], -m[0] / g.dt)
    for n in range(1, g.NT):
        np.testing.assert_allclose(out[n], (m[n - 1] - m[n]) / g.dt)
    np.testing.assert_allclose(out[g.NT], m[-1] / g.dt)


def test_gradient4_adjoint_is_transpose(rng):
    for g in geometries():
        u = rng.standard_normal(g.spatial_shape) * g.node_mask
        v = rng.standard_normal((4,) + g.spatial_shape)
        assert np.sum(gradient4(u, g) * v) == pytest.approx(np.sum(u * gradient4_adjoint(v, g)), abs=1e-10)


def test_inner_and_norm():
    g = build_geometry("periodic", 8, 5, 2.0)
    f = np.ones(g.scalar_shape)
    assert norm(f, g) ** 2 == pytest.approx(g.T * (g.NT + 1) / g.NT)
    rng = np.random.default_rng(1)
    a, b, c = (rng.standard_normal(g.scalar_shape) for _ in range(3))
    assert inner(a, a, g) == pytest.approx(norm(a, g) ** 2)
    assert inner(2 * a + b, c, g) == pytest.approx(2 * inner(a, c, g) + inner(b, c, g))
    with pytest.raises(ValueError):
        inner(a, a[:-1], g)


def test_fp_residual_zero_for_static_density():
    for g in geometries():
        m0 = np.random.default_rng(2).random(g.spatial_shape) * g.node_mask
        sigma = g.zeros5()
        sigma[0] = m0
        assert np.abs(fp_residual(sigma, m0, g)).max() < 1e-12


@pytest.mark.parametrize("g", geometries())
def test_fp_residual_is_minus_adjoint(g, rng):
    sigma = random_stacked(g, rng)
    m0 = rng.random(g.spatial_shape) * g.node_mask
    res = fp_residual(sigma, m0, g)
    ref = -naive_lambda_adjoint(sigma, g)[:-1]
    ref[0] -= m0 / g.dt
    np.testing.assert_allclose(res, ref, atol=1e-10)


@given(kind=st.sampled_from(["periodic", "box"]), seed=st.integers(0, 2**32 - 1))
def test_fp_residual_fluxes_telescope(kind, seed):
    g = build_geometry(kind, 6, 4) if kind == "periodic" else build_geometry(
        "box", 10, 4, obstacles=[(0.2, 0.5, 0.3, 0.7)]
    )
    rng = np.random.default_rng(seed)
    sigma = random_stacked(g, rng)
    m0 = rng.random(g.spatial_shape) * g.node_mask
    res = fp_residual(sigma, m0, g)
    full = np.concatenate([m0[None], sigma[0]])
    dmass = (full[1:].sum(axis=(1, 2)) - full[:-1].sum(axis=(1, 2))) / g.dt
    np.testing.assert_allclose(res.sum(axis=(1, 2)), dmass, atol=1e-9)
