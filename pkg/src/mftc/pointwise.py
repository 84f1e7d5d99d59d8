"""Node-wise proximal solve of the q-update.

At every space-time node the q-update reduces to maximising the concave

    W(s') = -|s' - s|^2 / (2r) + Lphi . (s - s') - L~_h(s')

over the domain of ``L~_h`` (``s`` is the current dual value, ``Lphi`` the
local value of the space-time operator).  The density component ``mu`` of the
maximiser solves the scalar monotone equation ``Xi(mu) = 0``; the four flux
components follow in closed form.  The new ``q`` is ``(s' - s)/r + Lphi``.

Everything here is vectorised: every argument may carry arbitrary trailing
node axes, and the bisections run on all nodes at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import CostModel, l_tilde

__all__ = [
    "Branch",
    "NodeProxOutput",
    "BisectionError",
    "chi",
    "gamma",
    "xi",
    "objective_w",
    "prox_solve",
    "solve_node",
    "optimality_residuals",
]

MAX_BISECTION = 200
MAX_DOUBLING = 2000


class BisectionError(RuntimeError):
    """A node-wise scalar root search failed to converge."""

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = nodes


class Branch(enum.IntEnum):
    ZERO_POINT = 0
    INTERIOR_ROOT = 1
    LEFT_ENDPOINT = 2


@dataclass
class NodeProxOutput:
    sigma: np.ndarray
    q: np.ndarray
    branch: Branch


def _consts(r, cost: CostModel):
    bs = cost.beta_star
    e = (bs - 1.0) * (1.0 - cost.alpha)
    c = r * cost.beta**-bs * (1.0 - cost.alpha)
    k = r * cost.beta ** (1.0 - bs)
    return bs, e, c, k


def _numerator(mu, sigma, lphi, r, cost):
    # N(mu) = mu - m + r Lphi_1 + r (l + mu dl/dm)
    return mu - sigma[0] + r * lphi[0] + r * cost.ell_plus_m_dell(mu)


def chi(mu, sigma, lphi, r, cost: CostModel):
    """``chi(mu) = N(mu) mu^((b*-1)(1-a)+1) / (r b^-b* (1-a))``."""
    _, e, c, _ = _consts(r, cost)
    mu = np.asarray(mu, dtype=float)
    return _numerator(mu, sigma, lphi, r, cost) * mu ** (e + 1.0) / c


def _shifted(sigma, lphi, r, mask=None):
    """Positive/negative parts entering the flux formulas (nonnegative)."""
    s = np.stack(
        [
            np.maximum(sigma[1] - r * lphi[1], 0.0),
            np.maximum(-(sigma[2] - r * lphi[2]), 0.0),
            np.maximum(sigma[3] - r * lphi[3], 0.0),
            np.maximum(-(sigma[4] - r * lphi[4]), 0.0),
        ]
    )
    if mask is not None:
        s = s * mask
    return s


def gamma(sigma, lphi, r, mask=None):
    """Sum of squares of the four shifted monotone parts."""
    return np.sum(_shifted(sigma, lphi, r, mask) ** 2, axis=0)


def _theta(mu, sigma, lphi, r, cost):
    # Theta = chi^(1/b*) + r b^(1-b*) mu^-e chi^(1-1/b*), rewritten without
    # mu^-e so that it stays finite at mu = 0
    bs, e, c, k = _consts(r, cost)
    n = np.maximum(_numerator(mu, sigma, lphi, r, cost), 0.0) / c
    ch = n * mu ** (e + 1.0)
    return ch ** (1.0 / bs) + k * n ** (1.0 / cost.beta) * mu ** (cost.alpha / cost.beta)


def xi(mu, sigma, lphi, r, cost: CostModel, gam=None, mask=None):
    """``Xi(mu) = Sigma(mu) (1 + r b^(1-b*) mu^-e chi^(1-2/b*))^2 - gamma``.

    Only meaningful where ``chi(mu) >= 0``; at a zero of ``chi`` it equals
    ``-gamma``.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(chi(mu, sigma, lphi, r, cost) < 0):
        raise ValueError("xi evaluated outside the set where chi >= 0")
    if gam is None:
        gam = gamma(sigma, lphi, r, mask)
    return _theta(mu, sigma, lphi, r, cost) ** 2 - gam


def objective_w(sp, sigma, lphi, r, cost: CostModel):
    """The node objective ``W(s')``; ``-inf`` off the domain of ``L~_h``."""
    sp = np.asarray(sp, dtype=float)
    diff = sp - sigma
    lt = l_tilde(sp, cost)
    return -np.sum(diff**2, axis=0) / (2 * r) + np.sum(lphi * (sigma - sp), axis=0) - lt


def _bracket(f, lo, hi, active):
    """Double ``hi`` until ``f(hi) > 0`` on the active nodes."""
    for _ in range(MAX_DOUBLING):
        todo = active & ~(f(hi) > 0)
        if not todo.any():
            return hi
        hi = np.where(todo, 2.0 * hi, hi)
    raise BisectionError("could not bracket the root", np.argwhere(todo))


def _bisect(f, lo, hi, active, ftol=None):
    """Vectorised bisection of an increasing ``f`` with ``f(lo) <= 0 < f(hi)``."""
    lo = lo.copy()
    hi = hi.copy()
    active = active.copy()
    for _ in range(MAX_BISECTION):
        width_ok = (hi - lo) <= np.maximum(1e-12, 1e-10 * hi)
        active &= ~width_ok
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if ftol is not None:
            hit = active & (np.abs(fm) <= ftol)
            lo = np.where(hit, mid, lo)
            hi = np.where(hit, mid, hi)
            active &= ~hit
        up = active & (fm > 0)
        down = active & ~(fm > 0)
        hi = np.where(up, mid, hi)
        lo = np.where(down, mid, lo)
    else:
        raise BisectionError(
            f"bisection did not converge in {MAX_BISECTION} iterations", np.argwhere(active)
        )
    return lo, hi


def prox_solve(sigma, lphi, r, cost: CostModel, mask=None):
    """Maximise ``W`` at every node.

    Parameters
    ----------
    sigma, lphi : arrays with leading axis 5 and any trailing node axes.
    r : augmentation parameter.
    mask : optional boolean array with leading axis 4 marking the available
        flux channels (state-constrained nodes).

    Returns
    -------
    sigma_new, q, branch : the maximiser ``s'``, the new ``q`` and a
        :class:`Branch` code per node.
    """
    sigma = np.asarray(sigma, dtype=float)
    lphi = np.asarray(lphi, dtype=float)
    if r <= 0:
        raise ValueError("r must be positive")
    bs, e, c, k = _consts(r, cost)
    node_shape = sigma.shape[1:]
    m = sigma[0]
    s = _shifted(sigma, lphi, r, mask)
    gam = np.sum(s**2, axis=0)
    every = np.ones(node_shape, dtype=bool)
    start = np.maximum(1.0, m)

    # (a) left end of the set where chi >= 0: chi has the sign of N
    numer = lambda mu: _numerator(mu, sigma, lphi, r, cost)  # noqa: E731
    neg = numer(np.zeros(node_shape)) < 0
    mu_lo = np.zeros(node_shape)
    if neg.any():
        hi = _bracket(numer, mu_lo, start.copy(), neg)
        _, hi = _bisect(numer, np.zeros(node_shape), hi, neg)
        mu_lo = np.where(neg, hi, 0.0)

    xi_fn = lambda mu: _theta(mu, sigma, lphi, r, cost) ** 2 - gam  # noqa: E731
    # chi vanishes at a positive left end, so Xi = -gamma there exactly; the
    # bisected mu_lo sits a hair to the right and must not flip the sign
    xi_lo = np.where(neg, -gam, xi_fn(mu_lo))

    # (b) Xi(mu_lo) > 0: no root, the maximiser is the origin
    no_root = xi_lo > 0
    at_left = (~no_root) & (xi_lo >= -1e-12 * (1.0 + gam))
    search = ~(no_root | at_left)

    # (c) bisection for the root of Xi
    mu_star = mu_lo.copy()
    if search.any():
        hi = _bracket(xi_fn, mu_lo, np.maximum(start, mu_lo), search)
        lo, hi = _bisect(xi_fn, mu_lo, hi, search, ftol=1e-12 * (1.0 + gam))
        mu_star = np.where(search, 0.5 * (lo + hi), mu_lo)

    # (d) fluxes from mu*
    pos = mu_star > 0
    mu_safe = np.where(pos, mu_star, 1.0)
    ch = np.maximum(_numerator(mu_safe, sigma, lphi, r, cost), 0.0) * mu_safe ** (e + 1.0) / c
    denom = 1.0 + k * mu_safe**-e * ch ** (1.0 - 2.0 / bs)
    flux = s / denom
    cand = np.stack(
        [
            np.where(pos, mu_star, 0.0),
            np.where(pos, flux[0], 0.0),
            np.where(pos, -flux[1], 0.0),
            np.where(pos, flux[2], 0.0),
            np.where(pos, -flux[3], 0.0),
        ]
    )

    # (e) compare with the origin
    w_cand = objective_w(cand, sigma, lphi, r, cost)
    w_zero = -np.sum(sigma**2, axis=0) / (2 * r) + np.sum(lphi * sigma, axis=0)
    take_cand = pos & ~no_root & (w_cand >= w_zero)
    sigma_new = np.where(take_cand, cand, 0.0)

    branch = np.full(node_shape, int(Branch.ZERO_POINT))
    branch = np.where(take_cand & search, int(Branch.INTERIOR_ROOT), branch)
    branch = np.where(take_cand & at_left, int(Branch.LEFT_ENDPOINT), branch)

    # (f) q from the maximiser
    q = (sigma_new - sigma) / r + lphi
    return sigma_new, q, branch


def solve_node(sigma, lphi, r, cost: CostModel, mask=None) -> NodeProxOutput:
    """Scalar convenience wrapper around :func:`prox_solve` for one node."""
    sigma = np.asarray(sigma, dtype=float).reshape(5)
    lphi = np.asarray(lphi, dtype=float).reshape(5)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(4)
        if np.any(sigma[1:][~mask]) or np.any(lphi[1:][~mask]):
            raise ValueError("masked channels of sigma and Lphi must be zero")
    sp, q, br = prox_solve(sigma, lphi, r, cost, mask)
    return NodeProxOutput(sp, q, Branch(int(br)))


def optimality_residuals(sp, sigma, lphi, r, cost: CostModel):
    """First-order conditions of ``W`` at an interior maximiser ``sp``.

    Returns the five residuals (density equation, then the four
    complementarity conditions of the flux components).  Requires ``mu > 0``.
    """
    bs, e, c, k = _consts(r, cost)
    mu, eta, zeta, etat, zetat = np.asarray(sp, dtype=float)
    sig2 = eta**2 + zeta**2 + etat**2 + zetat**2
    res_mu = _numerator(mu, sigma, lphi, r, cost) - c * sig2 ** (bs / 2) / mu ** (e + 1.0)
    # beta* >= 2, so the power below is finite at sig2 = 0
    fac = 1.0 + k * mu**-e * sig2 ** (bs / 2 - 1.0)
    res_eta = np.minimum(eta, -sigma[1] + r * lphi[1] + fac * eta)
    res_zeta = np.maximum(zeta, -sigma[2] + r * lphi[2] + fac * zeta)
    res_etat = np.minimum(etat, -sigma[3] + r * lphi[3] + fac * etat)
    res_zetat = np.maximum(zetat, -sigma[4] + r * lphi[4] + fac * zetat)
    return np.stack([res_mu, res_eta, res_zeta, res_etat, res_zetat])
