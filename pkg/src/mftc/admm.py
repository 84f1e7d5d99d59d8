"""Augmented-Lagrangian iterations (ALG2).

Each outer iteration performs

1. a linear space-time elliptic solve for ``phi`` (see :mod:`mftc.krylov`),
2. the node-wise proximal update of ``q`` (see :mod:`mftc.pointwise`),
3. the multiplier update ``sigma <- sigma - r (Lambda phi - q)``.

The m-channel of ``sigma`` is the density on levels ``1..NT``; the flux
channels are the one-sided momenta.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .diagnostics import hjb_norms, hjb_residual, mass_by_slice
from .geometry import Geometry
from .krylov import KrylovConfig, bicgstab_solve, make_preconditioner, step1_operator, step1_rhs
from .model import CostModel
from .operators import lambda_apply
from .pointwise import prox_solve

__all__ = [
    "SolverConfig",
    "Problem",
    "AdmmState",
    "HistoryRecord",
    "RunReport",
    "AdmmError",
    "initialize",
    "step1",
    "step2",
    "step3",
    "solve",
]

logger = logging.getLogger(__name__)


class AdmmError(RuntimeError):
    """A step failed; the message carries the outer iteration index."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


@dataclass(frozen=True)
class SolverConfig:
    r: float = 1.0
    max_outer_iters: int = 1000
    stop_hjb_res: float = 1e-8
    stop_gap: float = 1e-8
    stop_increment: float = 1e-8
    krylov: KrylovConfig = field(default_factory=KrylovConfig)
    record_every: int = 10
    record_time: bool = True

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        for name in ("stop_hjb_res", "stop_gap", "stop_increment"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class Problem:
    """Discrete data of one run: grid, cost and sampled boundary data."""

    geometry: Geometry
    cost: CostModel
    m0: np.ndarray
    uT: np.ndarray

    @classmethod
    def from_scenario(cls, scenario, geometry: Geometry | None = None) -> "Problem":
        g = scenario.geometry() if geometry is None else geometry
        return cls(g, scenario.cost, scenario.sample_m0(g), scenario.sample_uT(g))


@dataclass
class AdmmState:
    phi: np.ndarray
    q: np.ndarray
    sigma: np.ndarray
    k: int = 0

    @property
    def m(self) -> np.ndarray:
        return self.sigma[0]

    def copy(self) -> "AdmmState":
        return AdmmState(self.phi.copy(), self.q.copy(), self.sigma.copy(), self.k)


@dataclass(frozen=True)
class HistoryRecord:
    iter: int
    hjb_l2: float
    hjb_weighted: float
    gap: float
    dphi: float
    dm: float
    mass_min: float
    mass_max: float
    seconds: float


HISTORY_COLUMNS = tuple(f.name for f in fields(HistoryRecord))


@dataclass
class RunReport:
    history: list[HistoryRecord]
    state: AdmmState
    problem: Problem
    converged: bool
    reason: str
    krylov_iterations: list[int] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.state.k

    def series(self, name: str) -> np.ndarray:
        if name not in HISTORY_COLUMNS:
            raise KeyError(name)
        return np.array([getattr(rec, name) for rec in self.history])

    def full_density(self) -> np.ndarray:
        """Density on all levels ``0..NT`` (level 0 is the initial datum)."""
        return np.concatenate([self.problem.m0[None], self.state.m])


def initialize(problem: Problem) -> AdmmState:
    """Time-constant extensions of the data; ``q = Lambda phi`` so the gap starts at 0."""
    g = problem.geometry
    phi = np.broadcast_to(problem.uT * g.node_mask, g.scalar_shape).copy()
    sigma = g.zeros5()
    sigma[0] = problem.m0 * g.node_mask
    q = lambda_apply(phi, g)
    return AdmmState(phi, q, sigma, 0)


def step1(state: AdmmState, problem: Problem, config: SolverConfig, op=None, precond=None):
    """Solve for ``phi^{k+1}``; returns ``(phi, krylov_iterations)``."""
    g = problem.geometry
    if op is None:
        op = step1_operator(g, config.r)
        precond = make_preconditioner(op, config.krylov.preconditioner)
    rhs = step1_rhs(g, config.r, state.sigma, state.q, problem.m0, problem.uT)
    x, iters, _ = bicgstab_solve(op, rhs, state.phi[:-1], config.krylov, precond)
    phi = np.empty(g.scalar_shape)
    phi[:-1] = x * g.node_mask
    phi[-1] = problem.uT * g.node_mask
    return phi, iters


def step2(state: AdmmState, phi: np.ndarray, problem: Problem, config: SolverConfig):
    """Node-wise proximal update; returns ``(q, sigma_prime, branch)``."""
    g = problem.geometry
    lphi = lambda_apply(phi, g)
    mask = g.channel_mask[:, None]
    sp, q, branch = prox_solve(state.sigma, lphi, config.r, problem.cost, mask)
    sp = sp * g.node_mask
    q = q * g.node_mask
    return q, sp, branch


def step3(state: AdmmState, phi, q, problem: Problem, config: SolverConfig, sigma_prime=None):
    """Multiplier update ``sigma - r (Lambda phi - q)``.

    When the maximiser ``sigma_prime`` of the proximal step is supplied, it is
    returned instead: the two agree algebraically, and ``sigma_prime`` is free
    of the round-off that would push zero entries slightly off the sign cone.
    The agreement is checked.
    """
    g = problem.geometry
    literal = state.sigma - config.r * (lambda_apply(phi, g) - q)
    if sigma_prime is None:
        return literal
    scale = 1.0 + np.max(np.abs(state.sigma)) + config.r * np.max(np.abs(q))
    err = np.max(np.abs(literal - sigma_prime))
    if err > 1e-9 * scale:
        raise RuntimeError(f"multiplier update disagrees with the proximal maximiser by {err:.3e}")
    return sigma_prime.copy()


def _weighted_norm(a, g: Geometry) -> float:
    return float(np.sqrt(g.h**2 * g.dt * np.sum(a * a)))


def solve(problem: Problem, config: SolverConfig = SolverConfig(), state: AdmmState | None = None,
          callback=None) -> RunReport:
    """Run ALG2 until a stopping rule fires.

    Stops when the iteration budget is spent, when the density-weighted HJB
    residual falls below ``stop_hjb_res``, or when the gap and both increments
    fall below their thresholds.  ``callback(state, record)`` is called at
    each recorded iteration.
    """
    g = problem.geometry
    state = initialize(problem) if state is None else state.copy()
    op = step1_operator(g, config.r)
    precond = make_preconditioner(op, config.krylov.preconditioner)
    t0 = time.perf_counter()
    history: list[HistoryRecord] = []
    kry: list[int] = []

    def record(dphi, dm, w_l2, w_wt, gap):
        full = np.concatenate([problem.m0[None], state.m])
        masses = mass_by_slice(full, g)
        rec = HistoryRecord(
            iter=state.k,
            hjb_l2=w_l2,
            hjb_weighted=w_wt,
            gap=gap,
            dphi=dphi,
            dm=dm,
            mass_min=float(masses.min()),
            mass_max=float(masses.max()),
            seconds=time.perf_counter() - t0 if config.record_time else 0.0,
        )
        history.append(rec)
        if callback is not None:
            callback(state, rec)
        return rec

    w = hjb_residual(state.phi, state.m, problem.cost, g)
    w_l2, w_wt = hjb_norms(w, state.m, g)
    gap = _weighted_norm(lambda_apply(state.phi, g) - state.q, g)
    record(0.0, 0.0, w_l2, w_wt, gap)

    converged, reason = False, "iteration budget exhausted"
    while state.k < config.max_outer_iters:
        k = state.k
        try:
            phi, its = step1(state, problem, config, op, precond)
            q, sp, _ = step2(state, phi, problem, config)
            sigma = step3(state, phi, q, problem, config, sp)
        except Exception as exc:  # surface the iteration index
            raise AdmmError(k + 1, exc) from exc
        kry.append(its)
        dphi = _weighted_norm(phi - state.phi, g)
        dm = _weighted_norm(sigma[0] - state.sigma[0], g)
        state = AdmmState(phi, q, sigma, k + 1)

        w = hjb_residual(state.phi, state.m, problem.cost, g)
        w_l2, w_wt = hjb_norms(w, state.m, g)
        gap = _weighted_norm(lambda_apply(state.phi, g) - state.q, g)
        if w_wt <= config.stop_hjb_res:
            converged, reason = True, "HJB residual below threshold"
        elif gap <= config.stop_gap and dphi <= config.stop_increment and dm <= config.stop_increment:
            converged, reason = True, "gap and increments below thresholds"
        last = converged or state.k >= config.max_outer_iters
        if state.k % config.record_every == 0 or last:
            rec = record(dphi, dm, w_l2, w_wt, gap)
            logger.info(
                "iter %d  hjb %.3e  hjb_m %.3e  gap %.3e", rec.iter, w_l2, w_wt, gap
            )
        if converged:
            break

    return RunReport(history, state, problem, converged, reason, kry)
