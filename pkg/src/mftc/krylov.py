"""Matrix-free solver for the phi-update.

The phi-update is a linear space-time elliptic problem for ``phi^0..phi^{NT-1}``
(``phi^NT`` is fixed to the terminal cost).  Its operator is ``r Lambda* Lambda``
restricted to those levels:

* in time, ``r (2 u^n - u^{n-1} - u^{n+1}) / dt^2`` with a Neumann-type row at
  ``n = 0`` and the Dirichlet level ``NT`` moved to the right-hand side;
* in space, ``2 r`` times the graph Laplacian of the open edges (each edge is
  seen twice by the one-sided differences).

Excluded obstacle nodes get identity rows so the operator stays invertible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import fft

from .geometry import Geometry
from .operators import lambda_adjoint, _shift

__all__ = [
    "KrylovConfig",
    "KrylovError",
    "Step1Operator",
    "step1_operator",
    "step1_rhs",
    "bicgstab_solve",
    "cg_solve",
    "jacobi_preconditioner",
    "spectral_preconditioner",
]

logger = logging.getLogger(__name__)


class KrylovError(RuntimeError):
    pass


@dataclass(frozen=True)
class KrylovConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    max_iters: int | None = None  # defaults to 10 * number of unknowns
    preconditioner: str = "none"  # "none", "jacobi" or "spectral"

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("Krylov tolerances must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.preconditioner not in ("none", "jacobi", "spectral"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


class Step1Operator:
    """Left-hand side of the phi-update acting on arrays of shape ``(NT, nx, nx)``."""

    def __init__(self, geometry: Geometry, r: float):
        if r <= 0:
            raise ValueError("r must be positive")
        self.geometry = geometry
        self.r = float(r)
        self.shape = (geometry.NT,) + geometry.spatial_shape
        self._cmask = geometry.channel_mask.astype(float)
        self._degree = self._cmask.sum(axis=0)
        self._excluded = ~geometry.node_mask

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Graph Laplacian ``sum over open edges (u_i - u_nbr) / h^2``."""
        g = self.geometry
        per = g.periodic
        nbrs = (
            _shift(u, 1, -2, per),
            _shift(u, -1, -2, per),
            _shift(u, 1, -1, per),
            _shift(u, -1, -1, per),
        )
        out = self._degree * u
        for k, v in enumerate(nbrs):
            out -= self._cmask[k] * v
        return out / g.h**2

    def apply(self, u: np.ndarray) -> np.ndarray:
        g = self.geometry
        r, dt2 = self.r, g.dt**2
        u = np.asarray(u, dtype=float).reshape(self.shape)
        out = np.empty_like(u)
        out[1:-1] = 2 * u[1:-1] - u[:-2] - u[2:]
        out[0] = u[0] - u[1]
        out[-1] = 2 * u[-1] - u[-2]
        out *= r / dt2
        out += 2 * r * self.laplacian(u)
        if self._excluded.any():
            out[:, self._excluded] = u[:, self._excluded]
        return out

    __call__ = apply

    def diagonal(self) -> np.ndarray:
        g = self.geometry
        d = np.empty(self.shape)
        d[:] = 2 * self.r / g.dt**2
        d[0] = self.r / g.dt**2
        d += 2 * self.r * self._degree / g.h**2
        d[:, self._excluded] = 1.0
        return d


def step1_operator(geometry: Geometry, r: float) -> Step1Operator:
    return Step1Operator(geometry, r)


def step1_rhs(geometry, r, sigma, q, m0, uT) -> np.ndarray:
    """Right-hand side of the phi-update.

    ``Lambda*(sigma + r q)`` on levels ``0..NT-1``, plus ``m0 / dt`` at level 0
    and the Dirichlet lift ``r uT / dt^2`` at level ``NT - 1``.
    """
    rhs = lambda_adjoint(sigma + r * q, geometry)[:-1]
    rhs[0] += m0 / geometry.dt
    rhs[-1] += r * uT / geometry.dt**2
    return rhs * geometry.node_mask


def jacobi_preconditioner(op: Step1Operator) -> Callable[[np.ndarray], np.ndarray]:
    inv = 1.0 / op.diagonal()
    return lambda v: v.reshape(op.shape) * inv


def spectral_preconditioner(op: Step1Operator) -> Callable[[np.ndarray], np.ndarray]:
    """Fast exact inverse for the obstacle-free operator.

    On the torus the spatial Laplacian is diagonal in the discrete Fourier
    basis; in a box its Neumann graph Laplacian is diagonal in the DCT-II
    basis.  The time operator is diagonalised once by a small dense
    eigen-decomposition.  With obstacles this is the inverse of the operator
    of the empty box and serves as a preconditioner.
    """
    g = op.geometry
    NT, n = g.NT, g.nx
    tmat = (
        np.diag(np.full(NT, 2.0)) - np.diag(np.ones(NT - 1), 1) - np.diag(np.ones(NT - 1), -1)
    )
    tmat[0, 0] = 1.0
    tau, vecs = np.linalg.eigh(tmat / g.dt**2)
    k = np.arange(n)
    if g.periodic:
        lam1 = (2 - 2 * np.cos(2 * np.pi * k / n)) / g.h**2
    else:
        lam1 = (2 - 2 * np.cos(np.pi * k / n)) / g.h**2
    lam2 = lam1[:, None] + lam1[None, :]
    denom = op.r * tau[:, None, None] + 2 * op.r * lam2[None]
    excluded = ~g.node_mask

    if g.periodic:
        def fwd(a):
            return fft.fft2(a, axes=(-2, -1))

        def bwd(a):
            return fft.ifft2(a, axes=(-2, -1)).real
    else:
        def fwd(a):
            return fft.dctn(a, type=2, axes=(-2, -1), norm="ortho")

        def bwd(a):
            return fft.idctn(a, type=2, axes=(-2, -1), norm="ortho")

    def apply(v):
        v = v.reshape(op.shape)
        vh = fwd(v)
        vh = np.tensordot(vecs.T, vh, axes=(1, 0))
        vh /= denom
        vh = np.tensordot(vecs, vh, axes=(1, 0))
        out = bwd(vh)
        if excluded.any():
            out[:, excluded] = v[:, excluded]
        return out

    return apply


def make_preconditioner(op: Step1Operator, kind: str):
    if kind == "none":
        return None
    if kind == "jacobi":
        return jacobi_preconditioner(op)
    if kind == "spectral":
        return spectral_preconditioner(op)
    raise ValueError(f"unknown preconditioner {kind!r}")


def _threshold(rhs_norm, config):
    return max(config.rel_tol * rhs_norm, config.abs_tol)


def bicgstab_solve(op, rhs, x0=None, config: KrylovConfig = KrylovConfig(), precond=None):
    """Preconditioned BiCGStab.

    Returns ``(x, iterations, residual_norm)`` with
    ``|op(x) - rhs| <= max(rel_tol |rhs|, abs_tol)``.  On a breakdown
    (``rho`` or ``omega`` vanishing) the iteration restarts once from the
    current iterate.
    """
    shape = rhs.shape
    b = rhs.ravel()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float).ravel()
    A = lambda v: op(v.reshape(shape)).ravel()  # noqa: E731
    M = (lambda v: v) if precond is None else (lambda v: precond(v.reshape(shape)).ravel())  # noqa: E731
    max_iters = config.max_iters or 10 * b.size
    tol = _threshold(np.linalg.norm(b), config)

    res = b - A(x)
    res_norm = np.linalg.norm(res)
    if res_norm <= tol:
        return x.reshape(shape), 0, res_norm

    restarts = 0
    it = 0
    while True:
        r_hat = res.copy()
        rho = alpha = omega = 1.0
        v = np.zeros_like(b)
        p = np.zeros_like(b)
        breakdown = False
        while it < max_iters:
            it += 1
            rho_new = np.dot(r_hat, res)
            if abs(rho_new) < 1e-300 or abs(omega) < 1e-300:
                breakdown = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = res + beta * (p - omega * v)
            p_hat = M(p)
            v = A(p_hat)
            denom = np.dot(r_hat, v)
            if abs(denom) < 1e-300:
                breakdown = True
                break
            alpha = rho / denom
            s = res - alpha * v
            if np.linalg.norm(s) <= tol:
                x += alpha * p_hat
                res = s
                res_norm = np.linalg.norm(res)
                return x.reshape(shape), it, res_norm
            s_hat = M(s)
            t = A(s_hat)
            tt = np.dot(t, t)
            omega = np.dot(t, s) / tt if tt > 0 else 0.0
            x += alpha * p_hat + omega * s_hat
            res = s - omega * t
            res_norm = np.linalg.norm(res)
            if res_norm <= tol:
                return x.reshape(shape), it, res_norm
        if breakdown and restarts == 0:
            restarts += 1
            logger.debug("BiCGStab breakdown at iteration %d, restarting", it)
            res = b - A(x)
            res_norm = np.linalg.norm(res)
            if res_norm <= tol:
                return x.reshape(shape), it, res_norm
            continue
        reason = "breakdown" if breakdown else "iteration budget exhausted"
        raise KrylovError(
            f"BiCGStab failed ({reason}) after {it} iterations: "
            f"residual {res_norm:.3e} > tolerance {tol:.3e}"
        )


def cg_solve(op, rhs, x0=None, config: KrylovConfig = KrylovConfig(), precond=None):
    """Preconditioned conjugate gradients with the same contract as BiCGStab."""
    shape = rhs.shape
    b = rhs.ravel()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float).ravel()
    A = lambda v: op(v.reshape(shape)).ravel()  # noqa: E731
    M = (lambda v: v) if precond is None else (lambda v: precond(v.reshape(shape)).ravel())  # noqa: E731
    max_iters = config.max_iters or 10 * b.size
    tol = _threshold(np.linalg.norm(b), config)

    res = b - A(x)
    res_norm = np.linalg.norm(res)
    if res_norm <= tol:
        return x.reshape(shape), 0, res_norm
    z = M(res)
    p = z.copy()
    rz = np.dot(res, z)
    for it in range(1, max_iters + 1):
        Ap = A(p)
        alpha = rz / np.dot(p, Ap)
        x += alpha * p
        res -= alpha * Ap
        res_norm = np.linalg.norm(res)
        if res_norm <= tol:
            return x.reshape(shape), it, res_norm
        z = M(res)
        rz_new = np.dot(res, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise KrylovError(
        f"CG exhausted {max_iters} iterations: residual {res_norm:.3e} > tolerance {tol:.3e}"
    )
