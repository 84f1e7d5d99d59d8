"""Congestion Hamiltonian, its upwind discretisation and the dual integrand.

The continuous Hamiltonian is ``H(x, m, p) = -|p|^beta / m^alpha + l(x, m)``
with the power cost ``l(x, m) = lam(x) * m^(q-1)``.  The discrete version uses
the monotone parts of the four one-sided differences

    G = (p1^-)^2 + (p2^+)^2 + (p3^-)^2 + (p4^+)^2,
    H_h = -m^(-alpha) G^(beta/2) + l(x, m).

All functions are vectorised over numpy arrays.  The ``p`` argument always has
a leading axis of length 4; an optional boolean ``mask`` of the same shape
drops the monotone parts of unavailable differences (boundary nodes).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import CLOSED_CHANNELS, NodeClass

__all__ = [
    "CostModel",
    "hamiltonian",
    "hamiltonian_continuous",
    "h_discrete",
    "h_discrete_grad_p",
    "h_discrete_dm",
    "h_boundary",
    "boundary_mask",
    "l_tilde",
]


@dataclass(frozen=True)
class CostModel:
    """Exponents ``alpha``, ``beta`` and the congestion cost ``lam * m^(q-1)``.

    ``lam`` may be a scalar or an array broadcastable against the spatial grid
    (an x-dependent coefficient).
    """

    alpha: float = 0.5
    beta: float = 2.0
    lam: float | np.ndarray = 1.0
    q: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 1.0 < self.beta <= 2.0:
            raise ValueError(f"beta must lie in (1, 2], got {self.beta}")
        if not self.q > 1.0:
            raise ValueError(f"q must be > 1, got {self.q}")
        if np.any(np.asarray(self.lam) <= 0):
            raise ValueError("the cost coefficient lam must be positive")
        q_star = self.q / (self.q - 1.0)
        if self.beta < q_star:
            warnings.warn(
                f"beta={self.beta} < q*={q_star:g}: the growth condition linking "
                "beta and q fails; the scheme still runs",
                stacklevel=2,
            )

    @property
    def beta_star(self) -> float:
        return self.beta / (self.beta - 1.0)

    def ell(self, m):
        return self.lam * np.power(m, self.q - 1.0)

    def dell_dm(self, m):
        m = np.asarray(m, dtype=float)
        if self.q == 2.0:
            return self.lam * np.ones_like(m)
        with np.errstate(divide="ignore"):
            return self.lam * (self.q - 1.0) * np.power(m, self.q - 2.0)

    def ell_plus_m_dell(self, m):
        """``l(x, m) + m dl/dm(x, m) = q * lam * m^(q-1)``."""
        return self.q * self.lam * np.power(m, self.q - 1.0)


def _monotone_parts(p, mask=None):
    p = np.asarray(p, dtype=float)
    parts = np.stack(
        [
            np.maximum(-p[0], 0.0),
            np.maximum(p[1], 0.0),
            np.maximum(-p[2], 0.0),
            np.maximum(p[3], 0.0),
        ]
    )
    if mask is not None:
        parts = parts * mask
    return parts


def _check_m(m):
    m = np.asarray(m, dtype=float)
    if np.any(m <= 0):
        raise ValueError("the density argument must be positive")
    return m


def hamiltonian_continuous(m, p, cost: CostModel):
    """``H(x, m, p) = -|p|^beta / m^alpha + l(x, m)`` for ``p`` of leading size 2."""
    m = _check_m(m)
    p = np.asarray(p, dtype=float)
    return -np.power(np.sum(p**2, axis=0), cost.beta / 2) * m**-cost.alpha + cost.ell(m)


def h_discrete(m, p, cost: CostModel, mask=None):
    """Upwind Hamiltonian ``H_h(x, m, p1, p2, p3, p4)``."""
    m = _check_m(m)
    G = np.sum(_monotone_parts(p, mask) ** 2, axis=0)
    return -(m**-cost.alpha) * np.power(G, cost.beta / 2) + cost.ell(m)


hamiltonian = h_discrete


def h_discrete_grad_p(m, p, cost: CostModel, mask=None):
    """Gradient of ``H_h`` in ``(p1, .., p4)``; zero where ``G = 0``.

    Signs: the first and third components are >= 0, the others <= 0.
    """
    m = _check_m(m)
    parts = _monotone_parts(p, mask)
    G = np.sum(parts**2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(
            G > 0, cost.beta * m**-cost.alpha * np.power(G, cost.beta / 2 - 1), 0.0
        )
    sign = np.array([1.0, -1.0, 1.0, -1.0]).reshape((4,) + (1,) * (parts.ndim - 1))
    return sign * coef * parts


def h_discrete_dm(m, p, cost: CostModel, mask=None):
    """``dH_h/dm = alpha m^(-alpha-1) G^(beta/2) + dl/dm``."""
    m = _check_m(m)
    G = np.sum(_monotone_parts(p, mask) ** 2, axis=0)
    return cost.alpha * m ** (-cost.alpha - 1) * np.power(G, cost.beta / 2) + cost.dell_dm(m)


def boundary_mask(node_class: NodeClass) -> np.ndarray:
    """Availability of the four one-sided differences for a node class."""
    if node_class is NodeClass.EXCLUDED:
        raise ValueError("excluded nodes carry no Hamiltonian")
    mask = np.ones(4, dtype=bool)
    mask[list(CLOSED_CHANNELS[node_class])] = False
    return mask


def h_boundary(node_class: NodeClass, m, p, cost: CostModel):
    """State-constrained Hamiltonian at an edge or corner node.

    ``p`` holds all four channels; entries of unavailable differences are
    ignored.  An edge keeps three monotone parts, a corner keeps two.
    """
    if node_class is NodeClass.INTERIOR:
        raise ValueError("h_boundary called on an interior node; use h_discrete")
    mask = boundary_mask(node_class)
    p = np.asarray(p, dtype=float)
    mask = mask.reshape((4,) + (1,) * (p.ndim - 1))
    return h_discrete(m, p, cost, mask)


def l_tilde(sigma, cost: CostModel):
    """Dual integrand ``L~_h(x, m, y, z, y~, z~)``; ``+inf`` off its domain.

    ``sigma`` has a leading axis of length 5.  The domain is the origin plus
    the cone ``m > 0, y >= 0, z <= 0, y~ >= 0, z~ <= 0``.
    """
    sigma = np.asarray(sigma, dtype=float)
    m, y, z, yt, zt = sigma
    in_cone = (m > 0) & (y >= 0) & (z <= 0) & (yt >= 0) & (zt <= 0)
    origin = (m == 0) & (y == 0) & (z == 0) & (yt == 0) & (zt == 0)
    b, bs, a = cost.beta, cost.beta_star, cost.alpha
    ms = np.where(in_cone, m, 1.0)
    flux2 = y**2 + z**2 + yt**2 + zt**2
    val = (b - 1) * b**-bs * np.power(flux2, bs / 2) / ms ** ((bs - 1) * (1 - a)) + ms * cost.ell(ms)
    out = np.where(in_cone, val, np.inf)
    out = np.where(origin, 0.0, out)
    return out if out.ndim else float(out)
