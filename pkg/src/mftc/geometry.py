"""Space-time grids for the torus and for boxes with rectangular obstacles.

Spatial nodes are stored on a rectangular ``(nx, nx)`` array indexed ``[i, j]``
with ``x_{i,j} = (i h, j h)``.  On the torus ``nx = Nh`` and indices wrap; in a
box ``nx = Nh + 1`` and the nodes span the closed square ``[0, 1]^2``.

Nodes strictly inside an obstacle are *excluded*: they carry no unknowns and
every grid function vanishes there.  A grid edge between two neighbouring nodes
is *open* when both endpoints are admissible and the edge does not cross the
interior of an obstacle.  The four one-sided differences used by the scheme are
available at a node exactly when the corresponding edge is open.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = ["Kind", "NodeClass", "Geometry", "build_geometry", "classify"]

_ALIGN_TOL = 1e-9


class Kind(enum.Enum):
    PERIODIC = "periodic"
    BOX = "box"


class NodeClass(enum.Enum):
    INTERIOR = "interior"
    EDGE_LEFT = "edge_left"
    EDGE_RIGHT = "edge_right"
    EDGE_BOTTOM = "edge_bottom"
    EDGE_TOP = "edge_top"
    CORNER_BOTTOM_LEFT = "corner_bottom_left"
    CORNER_BOTTOM_RIGHT = "corner_bottom_right"
    CORNER_TOP_LEFT = "corner_top_left"
    CORNER_TOP_RIGHT = "corner_top_right"
    EXCLUDED = "excluded"


# Channel order of the four one-sided differences at a node:
#   0: (D1+ phi)_{i,j}    edge towards +x
#   1: (D1+ phi)_{i-1,j}  edge towards -x
#   2: (D2+ phi)_{i,j}    edge towards +y
#   3: (D2+ phi)_{i,j-1}  edge towards -y
# A node class is determined by which channels are closed.
_CLASS_BY_CLOSED = {
    (): NodeClass.INTERIOR,
    (1,): NodeClass.EDGE_LEFT,
    (0,): NodeClass.EDGE_RIGHT,
    (3,): NodeClass.EDGE_BOTTOM,
    (2,): NodeClass.EDGE_TOP,
    (1, 3): NodeClass.CORNER_BOTTOM_LEFT,
    (0, 3): NodeClass.CORNER_BOTTOM_RIGHT,
    (1, 2): NodeClass.CORNER_TOP_LEFT,
    (0, 2): NodeClass.CORNER_TOP_RIGHT,
}

CLOSED_CHANNELS = {cls: closed for closed, cls in _CLASS_BY_CLOSED.items()}


@dataclass(frozen=True, eq=False)
class Geometry:
    """Immutable description of a space-time grid.

    Use :func:`build_geometry` rather than the constructor: it validates the
    parameters and fills in the masks.
    """

    kind: Kind
    Nh: int
    NT: int
    T: float
    obstacles: tuple[tuple[float, float, float, float], ...]
    node_mask: np.ndarray = field(repr=False)
    edge_x: np.ndarray = field(repr=False)
    edge_y: np.ndarray = field(repr=False)
    channel_mask: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.Nh

    @property
    def dt(self) -> float:
        return self.T / self.NT

    @property
    def periodic(self) -> bool:
        return self.kind is Kind.PERIODIC

    @property
    def nx(self) -> int:
        return self.Nh if self.periodic else self.Nh + 1

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.nx, self.nx)

    @property
    def scalar_shape(self) -> tuple[int, int, int]:
        """Shape of a grid function on all time levels ``n = 0..NT``."""
        return (self.NT + 1, self.nx, self.nx)

    @property
    def stacked_shape(self) -> tuple[int, int, int, int]:
        """Shape of a five-channel field on time levels ``n = 1..NT``."""
        return (5, self.NT, self.nx, self.nx)

    @property
    def n_admissible(self) -> int:
        return int(self.node_mask.sum())

    @property
    def n_nodes(self) -> int:
        """Number of space-time unknowns ``N = (NT + 1) * admissible``."""
        return (self.NT + 1) * self.n_admissible

    @property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx) * self.h
        return np.meshgrid(x, x, indexing="ij")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.NT + 1) * self.dt

    def zeros(self) -> np.ndarray:
        return np.zeros(self.scalar_shape)

    def zeros5(self) -> np.ndarray:
        return np.zeros(self.stacked_shape)

    def wrap(self, i: int, j: int) -> tuple[int, int]:
        if self.periodic:
            return i % self.Nh, j % self.Nh
        return i, j


def _validate_obstacle(rect: Sequence[float], Nh: int) -> tuple[float, float, float, float]:
    if len(rect) != 4:
        raise ValueError(f"obstacle must be (x1min, x1max, x2min, x2max), got {rect!r}")
    x0, x1, y0, y1 = (float(v) for v in rect)
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"obstacle {rect!r} is empty")
    if not (0.0 < x0 and x1 < 1.0 and 0.0 < y0 and y1 < 1.0):
        raise ValueError(f"obstacle {rect!r} must lie strictly inside (0, 1)^2")
    for v in (x0, x1, y0, y1):
        k = v * Nh
        if abs(k - round(k)) > _ALIGN_TOL:
            raise ValueError(
                f"obstacle coordinate {v} is not a multiple of h = 1/{Nh}"
            )
    ix = (round(x0 * Nh), round(x1 * Nh))
    iy = (round(y0 * Nh), round(y1 * Nh))
    if ix[1] - ix[0] < 2 and iy[1] - iy[0] < 2:
        # a single cell closes no grid edge and would be invisible to the scheme
        raise ValueError(f"obstacle {rect!r} is narrower than two cells in both directions")
    return (x0, x1, y0, y1)


def build_geometry(
    kind: Kind | str,
    Nh: int,
    NT: int,
    T: float = 1.0,
    obstacles: Sequence[Sequence[float]] = (),
) -> Geometry:
    """Validate the grid parameters and precompute node and edge masks."""
    kind = Kind(kind)
    if int(Nh) != Nh or Nh < 2:
        raise ValueError(f"Nh must be an integer >= 2, got {Nh!r}")
    if int(NT) != NT or NT < 2:
        raise ValueError(f"NT must be an integer >= 2, got {NT!r}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    Nh, NT, T = int(Nh), int(NT), float(T)
    obstacles = tuple(obstacles)
    if kind is Kind.PERIODIC and obstacles:
        raise ValueError("periodic geometry does not accept obstacles")
    rects = tuple(_validate_obstacle(o, Nh) for o in obstacles)

    nx = Nh if kind is Kind.PERIODIC else Nh + 1
    idx = np.arange(nx)
    I, J = np.meshgrid(idx, idx, indexing="ij")

    node_mask = np.ones((nx, nx), dtype=bool)
    # edge_x[i, j] is the edge (i, j) -- (i+1, j); edge_y[i, j] is (i, j) -- (i, j+1)
    edge_x = np.ones((nx, nx), dtype=bool)
    edge_y = np.ones((nx, nx), dtype=bool)
    if kind is Kind.BOX:
        edge_x[-1, :] = False
        edge_y[:, -1] = False

    # all obstacle tests are done in integer grid units, free of rounding
    for x0, x1, y0, y1 in rects:
        a0, a1 = round(x0 * Nh), round(x1 * Nh)
        b0, b1 = round(y0 * Nh), round(y1 * Nh)
        node_mask &= ~((a0 < I) & (I < a1) & (b0 < J) & (J < b1))
        # twice the edge midpoints, compared against twice the bounds
        mx, my = 2 * I + 1, 2 * J
        edge_x &= ~((2 * a0 < mx) & (mx < 2 * a1) & (2 * b0 < my) & (my < 2 * b1))
        mx, my = 2 * I, 2 * J + 1
        edge_y &= ~((2 * a0 < mx) & (mx < 2 * a1) & (2 * b0 < my) & (my < 2 * b1))

    edge_x &= node_mask & np.roll(node_mask, -1, axis=0)
    edge_y &= node_mask & np.roll(node_mask, -1, axis=1)

    channel_mask = np.stack(
        [
            edge_x,
            np.roll(edge_x, 1, axis=0),
            edge_y,
            np.roll(edge_y, 1, axis=1),
        ]
    )
    if kind is Kind.BOX:
        # the rolls above wrap the last row into the first one; in a box those
        # entries were already closed, so the wrapped values are False anyway
        assert not channel_mask[1, 0, :].any() and not channel_mask[3, :, 0].any()

    for arr in (node_mask, edge_x, edge_y, channel_mask):
        arr.setflags(write=False)
    return Geometry(kind, Nh, NT, T, rects, node_mask, edge_x, edge_y, channel_mask)


def classify(geometry: Geometry, i: int, j: int) -> NodeClass:
    """Classify the spatial node ``(i, j)`` from the set of its closed edges."""
    i, j = geometry.wrap(i, j)
    if not (0 <= i < geometry.nx and 0 <= j < geometry.nx):
        raise IndexError(f"node ({i}, {j}) outside the grid")
    if not geometry.node_mask[i, j]:
        return NodeClass.EXCLUDED
    closed = tuple(k for k in range(4) if not geometry.channel_mask[k, i, j])
    try:
        return _CLASS_BY_CLOSED[closed]
    except KeyError:
        # only reachable with obstacles closer than one cell to each other
        raise ValueError(
            f"node ({i}, {j}) has an unsupported set of closed edges {closed}"
        ) from None


def classification_map(geometry: Geometry) -> np.ndarray:
    """Object array holding the :class:`NodeClass` of every spatial node."""
    out = np.empty(geometry.spatial_shape, dtype=object)
    for i in range(geometry.nx):
        for j in range(geometry.nx):
            out[i, j] = classify(geometry, i, j)
    return out
