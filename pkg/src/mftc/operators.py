"""Finite-difference building blocks on the space-time grid.

Grid functions are numpy arrays of shape ``geometry.scalar_shape`` (time levels
``0..NT``).  Five-channel fields have shape ``geometry.stacked_shape`` and hold,
at time level ``n = 1..NT`` (array index ``n - 1``), either the channels of
``Lambda_h phi`` (time derivative then the four one-sided differences) or the
dual variables ``(m, y, z, y~, z~)``.

Channels that would use a closed edge are stored as structural zeros.
"""

from __future__ import annotations

import numpy as np

from .geometry import Geometry

__all__ = [
    "d_plus_1",
    "d_plus_2",
    "forward_diff",
    "gradient4",
    "gradient4_adjoint",
    "lambda_apply",
    "lambda_adjoint",
    "inner",
    "norm",
    "fp_residual",
]


def _shift(a: np.ndarray, offset: int, axis: int, periodic: bool) -> np.ndarray:
    """Return ``b`` with ``b[k] = a[k + offset]`` along ``axis``; zero-filled off a box."""
    if periodic:
        return np.roll(a, -offset, axis=axis)
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if offset > 0:
        src[axis] = slice(offset, None)
        dst[axis] = slice(None, -offset)
    else:
        src[axis] = slice(None, offset)
        dst[axis] = slice(-offset, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def forward_diff(a: np.ndarray, axis: int, geometry: Geometry) -> np.ndarray:
    """``(a[k+1] - a[k]) / h`` along a spatial axis (unmasked)."""
    return (_shift(a, 1, axis, geometry.periodic) - a) / geometry.h


def d_plus_1(phi: np.ndarray, i: int, j: int, geometry: Geometry) -> float:
    """``(phi_{i+1,j} - phi_{i,j}) / h`` on a single spatial slice."""
    i, j = geometry.wrap(i, j)
    if not geometry.edge_x[i, j]:
        raise ValueError(f"difference from ({i}, {j}) in +x crosses the boundary")
    i1, _ = geometry.wrap(i + 1, j)
    return (phi[i1, j] - phi[i, j]) / geometry.h


def d_plus_2(phi: np.ndarray, i: int, j: int, geometry: Geometry) -> float:
    """``(phi_{i,j+1} - phi_{i,j}) / h`` on a single spatial slice."""
    i, j = geometry.wrap(i, j)
    if not geometry.edge_y[i, j]:
        raise ValueError(f"difference from ({i}, {j}) in +y crosses the boundary")
    _, j1 = geometry.wrap(i, j + 1)
    return (phi[i, j1] - phi[i, j]) / geometry.h


def gradient4(u: np.ndarray, geometry: Geometry) -> np.ndarray:
    """The four one-sided differences of ``u`` (spatial axes last).

    Returns an array with a leading axis of length 4 ordered as
    ``(D1+ u)_{i,j}, (D1+ u)_{i-1,j}, (D2+ u)_{i,j}, (D2+ u)_{i,j-1}``.
    """
    per = geometry.periodic
    dx = (_shift(u, 1, -2, per) - u) / geometry.h
    dy = (_shift(u, 1, -1, per) - u) / geometry.h
    g = np.stack(
        [dx, _shift(dx, -1, -2, per), dy, _shift(dy, -1, -1, per)]
    )
    return g * _channel_mask(geometry, u.ndim)


def gradient4_adjoint(g: np.ndarray, geometry: Geometry) -> np.ndarray:
    """Transpose of :func:`gradient4` (a discrete negative divergence)."""
    per = geometry.periodic
    g = g * _channel_mask(geometry, g.ndim - 1)
    y, z, yt, zt = g
    out = _shift(y, -1, -2, per) - y
    out += z - _shift(z, 1, -2, per)
    out += _shift(yt, -1, -1, per) - yt
    out += zt - _shift(zt, 1, -1, per)
    return out / geometry.h


def _channel_mask(geometry: Geometry, ndim: int) -> np.ndarray:
    mask = geometry.channel_mask
    # insert singleton axes between the channel axis and the spatial axes
    return mask.reshape((4,) + (1,) * (ndim - 2) + geometry.spatial_shape)


def lambda_apply(phi: np.ndarray, geometry: Geometry, nu: float = 0.0) -> np.ndarray:
    """Space-time operator: ``(D_t phi^n, [grad_h phi^{n-1}])`` for ``n = 1..NT``.

    Only the deterministic case is implemented; ``nu`` must be 0.
    """
    if nu != 0:
        raise ValueError("only nu = 0 (no diffusion) is supported")
    out = np.empty(geometry.stacked_shape)
    out[0] = (phi[1:] - phi[:-1]) / geometry.dt * geometry.node_mask
    out[1:] = gradient4(phi[:-1], geometry)
    return out


def lambda_adjoint(sigma: np.ndarray, geometry: Geometry) -> np.ndarray:
    """Adjoint of :func:`lambda_apply` for the ``h^2 dt``-weighted inner products."""
    m = sigma[0] * geometry.node_mask
    out = np.zeros(geometry.scalar_shape)
    out[1:] += m / geometry.dt
    out[:-1] -= m / geometry.dt
    out[:-1] += gradient4_adjoint(sigma[1:], geometry)
    return out


def inner(f: np.ndarray, g: np.ndarray, geometry: Geometry) -> float:
    """``h^2 dt``-weighted Euclidean inner product of two grid functions."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")
    return float(geometry.h**2 * geometry.dt * np.vdot(f, g))


def norm(f: np.ndarray, geometry: Geometry) -> float:
    return float(np.sqrt(inner(f, f, geometry)))


def fp_residual(sigma: np.ndarray, m0: np.ndarray, geometry: Geometry) -> np.ndarray:
    """Residual of the discrete continuity equation for ``n = 0..NT-1``.

    ``(m^{n+1} - m^n)/dt`` plus the divergence of the one-sided fluxes at level
    ``n + 1``, with ``m^0`` pinned to ``m0``.  Only open-edge fluxes enter, so
    boundary nodes see inward/outward fluxes only.
    """
    m = sigma[0] * geometry.node_mask
    prev = np.concatenate([(m0 * geometry.node_mask)[None], m[:-1]])
    return (m - prev) / geometry.dt - gradient4_adjoint(sigma[1:], geometry)
