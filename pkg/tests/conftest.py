"""Shared fixtures and independent loop-based reference implementations."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mftc.geometry import build_geometry

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def geometries():
    """A small zoo covering both kinds and an obstacle."""
    return [
        build_geometry("periodic", 5, 4),
        build_geometry("box", 5, 4),
        build_geometry("box", 10, 3, obstacles=[(0.2, 0.5, 0.3, 0.7)]),
    ]


def random_stacked(geometry, rng, cone=False):
    s = rng.standard_normal(geometry.stacked_shape)
    if cone:
        s[0] = np.abs(s[0])
        s[1] = np.abs(s[1])
        s[2] = -np.abs(s[2])
        s[3] = np.abs(s[3])
        s[4] = -np.abs(s[4])
    s[1:] *= geometry.channel_mask[:, None]
    s *= geometry.node_mask
    return s


def random_scalar(geometry, rng):
    return rng.standard_normal(geometry.scalar_shape) * geometry.node_mask


# ---------------------------------------------------------------- loop oracles

def _nbr(g, i, j, di, dj):
    """Neighbour index or None when the edge is closed."""
    ii, jj = i + di, j + dj
    if g.periodic:
        ii, jj = ii % g.Nh, jj % g.Nh
    elif not (0 <= ii < g.nx and 0 <= jj < g.nx):
        return None
    if not (g.node_mask[i, j] and g.node_mask[ii, jj]):
        return None
    # the edge midpoint must not lie strictly inside an obstacle
    mx = (i + ii) / 2 if abs(ii - i) <= 1 else None
    my = (j + jj) / 2 if abs(jj - j) <= 1 else None
    if mx is not None and my is not None:
        for x0, x1, y0, y1 in g.obstacles:
            a0, a1, b0, b1 = (round(v * g.Nh) for v in (x0, x1, y0, y1))
            if a0 < mx < a1 and b0 < my < b1:
                return None
    return ii, jj


def naive_gradient4(u2d, g):
    out = np.zeros((4, g.nx, g.nx))
    for i in range(g.nx):
        for j in range(g.nx):
            if not g.node_mask[i, j]:
                continue
            for k, (di, dj, fwd) in enumerate([(1, 0, True), (-1, 0, False), (0, 1, True), (0, -1, False)]):
                nb = _nbr(g, i, j, di, dj)
                if nb is None:
                    continue
                if fwd:
                    out[k, i, j] = (u2d[nb] - u2d[i, j]) / g.h
                else:
                    out[k, i, j] = (u2d[i, j] - u2d[nb]) / g.h
    return out


def naive_lambda(phi, g):
    out = np.zeros(g.stacked_shape)
    for n in range(1, g.NT + 1):
        out[0, n - 1] = (phi[n] - phi[n - 1]) / g.dt * g.node_mask
        out[1:, n - 1] = naive_gradient4(phi[n - 1], g)
    return out


def naive_lambda_adjoint(sigma, g):
    """Transpose assembled column by column from naive_lambda."""
    out = np.zeros(g.scalar_shape)
    e = np.zeros(g.scalar_shape)
    for idx in np.ndindex(*g.scalar_shape):
        e[idx] = 1.0
        out[idx] = np.sum(naive_lambda(e, g) * sigma)
        e[idx] = 0.0
    return out


def naive_h(m, p4, alpha, beta, lam, mask=(1, 1, 1, 1)):
    p1, p2, p3, p4_ = p4
    parts = [max(-p1, 0) * mask[0], max(p2, 0) * mask[1], max(-p3, 0) * mask[2], max(p4_, 0) * mask[3]]
    G = sum(v * v for v in parts)
    return -(m**-alpha) * G ** (beta / 2) + lam * m
