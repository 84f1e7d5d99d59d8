"""Residuals used to monitor the iterations.

* the discrete HJB residual ``w`` and its plain and density-weighted norms;
* the conservative transport operator ``T(u, m, m~) = -grad4*(m grad_p H_h(m~, grad4 u))``
  and the residual of the discrete Kolmogorov equation built on it;
* the total mass of each time slice.

Density arguments follow two conventions.  ``hjb_residual`` takes the density
on levels ``1..NT`` (the m-channel of the dual variable); the Kolmogorov
residual takes a full scalar field on levels ``0..NT``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Geometry
from .model import CostModel, h_discrete_grad_p
from .operators import gradient4, gradient4_adjoint, lambda_apply

__all__ = [
    "ResidualSet",
    "hjb_residual",
    "hjb_norms",
    "transport_operator",
    "kolmogorov_residual",
    "mass",
    "mass_by_slice",
    "residual_set",
]


@dataclass(frozen=True)
class ResidualSet:
    hjb_l2: float
    hjb_weighted: float
    kolmogorov_l2: float
    gap: float
    mass_by_slice: np.ndarray


def _density_levels(m, geometry: Geometry) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape == geometry.scalar_shape:
        return m[1:]
    if m.shape == (geometry.NT,) + geometry.spatial_shape:
        return m
    raise ValueError(f"density has shape {m.shape}, expected levels 1..NT or 0..NT")


def hjb_residual(phi, m, cost: CostModel, geometry: Geometry) -> np.ndarray:
    """Per-node residual ``w^n``, ``n = 0..NT-1``, of the discrete HJB equation.

    ``w^n = D_t phi^n + H_h(m^{n+1}, grad phi^n) + m^{n+1} dH_h/dm``, and zero
    wherever ``m^{n+1} = 0``.  Closed channels are dropped from the
    Hamiltonian, which is the state-constrained version at boundary nodes.
    """
    m = _density_levels(m, geometry)
    if np.any(m < 0):
        raise ValueError("density must be nonnegative")
    phi = np.asarray(phi, dtype=float)
    pos = (m > 0) & geometry.node_mask
    ms = np.where(pos, m, 1.0)
    grads = gradient4(phi[:-1], geometry)
    parts = np.stack(
        [
            np.maximum(-grads[0], 0.0),
            np.maximum(grads[1], 0.0),
            np.maximum(-grads[2], 0.0),
            np.maximum(grads[3], 0.0),
        ]
    )
    G = np.sum(parts**2, axis=0)
    # H + m dH/dm = -(1 - a) m^-a G^(b/2) + l + m l'
    h_part = -(1.0 - cost.alpha) * ms**-cost.alpha * G ** (cost.beta / 2) + cost.ell_plus_m_dell(ms)
    w = (phi[1:] - phi[:-1]) / geometry.dt + h_part
    return np.where(pos, w, 0.0)


def hjb_norms(w, m, geometry: Geometry) -> tuple[float, float]:
    """``(sqrt(h^2 dt sum w^2), sqrt(h^2 dt sum m w^2))``."""
    m = _density_levels(m, geometry)
    wt = geometry.h**2 * geometry.dt
    return float(np.sqrt(wt * np.sum(w**2))), float(np.sqrt(wt * np.sum(m * w**2)))


def transport_operator(u, m, m_tilde, geometry: Geometry, cost: CostModel) -> np.ndarray:
    """Conservative transport stencil.

    ``u``, ``m`` and ``m_tilde`` are spatial fields, optionally with leading
    time axes.  Satisfies ``h^2 sum T w = -h^2 sum m grad_p H_h . grad4 w``.
    """
    u = np.asarray(u, dtype=float)
    m = np.asarray(m, dtype=float)
    mt = np.asarray(m_tilde, dtype=float)
    active = (m != 0) & geometry.node_mask
    if np.any(active & (mt <= 0)):
        raise ValueError("m_tilde must be positive wherever m is nonzero")
    mt_safe = np.where(active, mt, 1.0)
    grad_h = h_discrete_grad_p(mt_safe, gradient4(u, geometry), cost)
    flux = np.where(active, m, 0.0) * grad_h
    return -gradient4_adjoint(flux, geometry)


def kolmogorov_residual(u, m, geometry: Geometry, cost: CostModel) -> np.ndarray:
    """``(m^{n+1} - m^n)/dt + T(u^n, m^{n+1}, m^{n+1})`` for ``n = 0..NT-1``.

    ``u`` and ``m`` are full scalar fields on levels ``0..NT``.
    """
    u = np.asarray(u, dtype=float)
    m = np.asarray(m, dtype=float)
    if m.shape != geometry.scalar_shape or u.shape != geometry.scalar_shape:
        raise ValueError("u and m must be defined on all time levels")
    m = m * geometry.node_mask
    t = transport_operator(u[:-1], m[1:], m[1:], geometry, cost)
    return ((m[1:] - m[:-1]) / geometry.dt + t) * geometry.node_mask


def mass(mfield, geometry: Geometry, n: int | None = None) -> float:
    """``h^2 sum_{admissible} m``; ``n`` selects a time slice of a space-time field."""
    a = np.asarray(mfield, dtype=float)
    if n is not None:
        if not -a.shape[0] <= n < a.shape[0]:
            raise IndexError(f"time slice {n} out of range")
        a = a[n]
    if a.shape != geometry.spatial_shape:
        raise ValueError(f"expected a spatial field of shape {geometry.spatial_shape}")
    return float(geometry.h**2 * np.sum(a[geometry.node_mask]))


def mass_by_slice(m, geometry: Geometry) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return geometry.h**2 * np.sum(m * geometry.node_mask, axis=(-2, -1))


def residual_set(phi, sigma, q, m0, cost: CostModel, geometry: Geometry) -> ResidualSet:
    """All monitored quantities for the current iterate."""
    m = sigma[0]
    w = hjb_residual(phi, m, cost, geometry)
    l2, weighted = hjb_norms(w, m, geometry)
    full = np.concatenate([np.asarray(m0, dtype=float)[None], m])
    kol = kolmogorov_residual(phi, full, geometry, cost)
    wt = geometry.h**2 * geometry.dt
    gap = float(np.sqrt(wt * np.sum((lambda_apply(phi, geometry) - q) ** 2)))
    return ResidualSet(
        hjb_l2=l2,
        hjb_weighted=weighted,
        kolmogorov_l2=float(np.sqrt(wt * np.sum(kol**2))),
        gap=gap,
        mass_by_slice=mass_by_slice(full, geometry),
    )
