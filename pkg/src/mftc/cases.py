"""Built-in scenarios: initial densities, terminal costs and parameters.

Initial densities are sampled as cell averages over the squares
``|x - x_ij|_inf < h/2`` and terminal costs as nodal values.  Indicator data
are averaged by exact rectangle intersection; smooth data by tensor
Gauss-Legendre quadrature on each cell.  With ``normalize=True`` the sampled
density is rescaled to unit discrete mass ``h^2 sum m~0 = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import Geometry, Kind, build_geometry
from .model import CostModel

__all__ = [
    "Scenario",
    "test_case_1",
    "test_case_2",
    "test_case_3",
    "SCENARIOS",
    "get_scenario",
    "rect_cell_average",
    "smooth_cell_average",
]

Sampler = Callable[[Geometry], np.ndarray]

OBSTACLE = (0.4, 0.6, 0.4, 0.6)


@dataclass(frozen=True)
class Scenario:
    """A named problem: geometry defaults, cost model and data samplers."""

    name: str
    kind: Kind
    cost: CostModel
    m0: Sampler = field(repr=False)
    uT: Sampler = field(repr=False)
    Nh: int = 32
    NT: int = 32
    T: float = 1.0
    obstacles: tuple = ()
    normalize: bool = True
    description: str = ""

    def geometry(self, Nh: int | None = None, NT: int | None = None, T: float | None = None,
                 obstacles=None) -> Geometry:
        return build_geometry(
            self.kind,
            self.Nh if Nh is None else Nh,
            self.NT if NT is None else NT,
            self.T if T is None else T,
            self.obstacles if obstacles is None else obstacles,
        )

    def sample_m0(self, geometry: Geometry) -> np.ndarray:
        m0 = np.asarray(self.m0(geometry), dtype=float) * geometry.node_mask
        if np.any(m0 < 0):
            raise ValueError("initial density must be nonnegative")
        if self.normalize:
            total = geometry.h**2 * m0.sum()
            if total <= 0:
                raise ValueError("initial density has zero mass on this grid")
            m0 = m0 / total
        return m0

    def sample_uT(self, geometry: Geometry) -> np.ndarray:
        return np.asarray(self.uT(geometry), dtype=float) * geometry.node_mask

    def with_cost(self, **changes) -> "Scenario":
        return replace(self, cost=replace(self.cost, **changes))


def _overlap_1d(centers, h, lo, hi, periodic):
    a = centers - h / 2
    b = centers + h / 2
    shifts = (-1.0, 0.0, 1.0) if periodic else (0.0,)
    out = np.zeros_like(centers)
    for s in shifts:
        out += np.clip(np.minimum(b, hi + s) - np.maximum(a, lo + s), 0.0, None)
    return out


def rect_cell_average(rect, geometry: Geometry) -> np.ndarray:
    """Cell averages of the indicator of ``[x1min, x1max] x [x2min, x2max]``."""
    x0, x1, y0, y1 = rect
    c = np.arange(geometry.nx) * geometry.h
    ox = _overlap_1d(c, geometry.h, x0, x1, geometry.periodic)
    oy = _overlap_1d(c, geometry.h, y0, y1, geometry.periodic)
    return np.outer(ox, oy) / geometry.h**2


def rect_indicator(rect, geometry: Geometry) -> np.ndarray:
    """Nodal samples of a closed-rectangle indicator."""
    x0, x1, y0, y1 = rect
    X, Y = geometry.coords
    eps = 1e-12
    return ((X >= x0 - eps) & (X <= x1 + eps) & (Y >= y0 - eps) & (Y <= y1 + eps)).astype(float)


def smooth_cell_average(f, geometry: Geometry, order: int = 12) -> np.ndarray:
    """Cell averages of ``f(x1, x2)`` by Gauss-Legendre quadrature per cell."""
    pts, wts = np.polynomial.legendre.leggauss(order)
    h = geometry.h
    c = np.arange(geometry.nx) * h
    xs = (c[:, None] + 0.5 * h * pts[None, :]).ravel()  # (nx*order,)
    X = xs[:, None]
    Y = xs[None, :]
    vals = f(X, Y).reshape(geometry.nx, order, geometry.nx, order)
    return 0.25 * np.einsum("iajb,a,b->ij", vals, wts, wts)


def test_case_1() -> Scenario:
    square = (0.25, 0.75, 0.25, 0.75)
    return Scenario(
        name="tc1",
        kind=Kind.PERIODIC,
        cost=CostModel(alpha=0.5, beta=2.0, lam=1.0, q=2.0),
        m0=lambda g: rect_cell_average(square, g),
        uT=lambda g: rect_indicator(square, g),
        description="evacuation of the central square (torus)",
    )


def test_case_2(variant: str = "periodic", ell_coeff: float = 0.001) -> Scenario:
    if ell_coeff not in (0.001, 0.01):
        raise ValueError("ell_coeff must be 0.001 or 0.01")
    start = (0.0, 0.2, 0.0, 0.2)
    target = (0.8, 1.0, 0.8, 1.0)
    if variant == "periodic":
        kind, obstacles, Nh = Kind.PERIODIC, (), 32
    elif variant == "box":
        kind, obstacles, Nh = Kind.BOX, (), 32
    elif variant in ("obstacle", "box_with_obstacle"):
        # 0.4 and 0.6 are grid-aligned only when 5 divides Nh
        kind, obstacles, Nh = Kind.BOX, (OBSTACLE,), 30
    else:
        raise ValueError(f"unknown variant {variant!r}")

    def m0(g):
        return rect_cell_average(start, g)

    def uT(g):
        # nodal sampling without wrap-around: on the torus the node (0, 0)
        # stays outside the target block
        return 1.0 - rect_indicator(target, g)

    name = {"periodic": "tc2-periodic", "box": "tc2-box"}.get(variant, "tc2-obstacle")
    return Scenario(
        name=name,
        kind=kind,
        cost=CostModel(alpha=0.01, beta=2.0, lam=ell_coeff, q=2.0),
        m0=m0,
        uT=uT,
        Nh=Nh,
        NT=32,
        obstacles=obstacles,
        description="corner to opposite corner"
        + (" around a central obstacle" if obstacles else ""),
    )


def _psi1(x, y):
    inside = (x >= 0.5) & (x <= 1.0) & (y >= 0.0) & (y <= 0.5)
    return np.where(inside, np.maximum(-np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y) - 0.5, 0.0), 0.0)


def _psi2(x, y, x0=0.25, y0=0.75):
    return np.exp(-400.0 * ((x - x0) ** 2 + (y - y0) ** 2))


def test_case_3(alpha: float = 0.5, ell_coeff: float = 0.01, boundary: str = "periodic") -> Scenario:
    if boundary not in ("periodic", "box"):
        raise ValueError(f"unknown boundary {boundary!r}")
    kind = Kind.PERIODIC if boundary == "periodic" else Kind.BOX

    def m0(g):
        # each hump carries discrete mass 1/2
        a = smooth_cell_average(_psi1, g)
        b = smooth_cell_average(_psi2, g)
        w = g.h**2
        return 0.5 * a / (w * a.sum()) + 0.5 * b / (w * b.sum())

    def uT(g):
        X, Y = g.coords
        return -np.exp(-20.0 * (X**2 + Y**2))

    return Scenario(
        name="tc3",
        kind=kind,
        cost=CostModel(alpha=alpha, beta=2.0, lam=ell_coeff, q=2.0),
        m0=m0,
        uT=uT,
        description="small hump and peaky hump",
    )


SCENARIOS: dict[str, Callable[[], Scenario]] = {
    "tc1": test_case_1,
    "tc2-periodic": lambda: test_case_2("periodic"),
    "tc2-box": lambda: test_case_2("box"),
    "tc2-obstacle": lambda: test_case_2("obstacle"),
    "tc3": test_case_3,
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}"
        ) from None
