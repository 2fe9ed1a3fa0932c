"""Uniform structured Q1 meshes on rectangular domains.

Nodes are numbered lexicographically with x running fastest, so node
``j * (nx + 1) + i`` sits at ``(i * hx, j * hy)``.  Elements follow the same
rule (``e = j * nx + i``) and list their corners counter-clockwise starting
from the lower-left one.  Displacement DOFs are interleaved per node as
``(2 * n, 2 * n + 1) = (u_x, u_y)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Reference-corner signs in counter-clockwise order.
_CORNER_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_CORNER_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


class Edge(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    BOTTOM = "bottom"
    TOP = "top"


class Component(str, enum.Enum):
    X = "x"
    Y = "y"
    PHASE = "phase"


@dataclass(frozen=True)
class EdgeSelector:
    """An edge of the domain together with the field component to pick."""

    edge: Edge
    component: Component = Component.PHASE

    def __post_init__(self):
        object.__setattr__(self, "edge", Edge(self.edge))
        object.__setattr__(self, "component", Component(self.component))


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,)

    @property
    def n_points(self) -> int:
        return len(self.weights)


def gauss_2x2() -> Quadrature:
    """Tensor 2x2 Gauss-Legendre rule on [-1, 1]^2, ordered like the corners."""
    g = 1.0 / np.sqrt(3.0)
    points = np.column_stack([g * _CORNER_XI, g * _CORNER_ETA])
    return Quadrature(points=points, weights=np.ones(4))


def shape_eval(xi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear shape functions and their reference gradients at ``(xi, eta)``.

    Returns
    -------
    values : ndarray, shape (4,)
    grads : ndarray, shape (4, 2)
        ``grads[k] = (dN_k/dxi, dN_k/deta)``.  Multiply the columns by
        ``2 / hx`` and ``2 / hy`` to obtain physical gradients.
    """
    sx = 1.0 + _CORNER_XI * xi
    se = 1.0 + _CORNER_ETA * eta
    values = 0.25 * sx * se
    grads = np.column_stack([0.25 * _CORNER_XI * se, 0.25 * _CORNER_ETA * sx])
    return values, grads


@dataclass(frozen=True)
class StructuredGrid:
    """Uniform ``nx`` by ``ny`` grid of bilinear quadrilaterals over ``[0, Lx] x [0, Ly]``."""

    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ValueError(f"element counts must be positive integers, got ({self.nx}, {self.ny})")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError(f"domain lengths must be positive, got ({self.Lx}, {self.Ly})")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "Lx", float(self.Lx))
        object.__setattr__(self, "Ly", float(self.Ly))

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def h(self) -> float:
        """Largest element edge length."""
        return max(self.hx, self.hy)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def node_shape(self) -> tuple[int, int]:
        """(rows, cols) of nodal fields reshaped as images, row index = y."""
        return (self.ny + 1, self.nx + 1)

    @cached_property
    def elements(self) -> np.ndarray:
        """Connectivity, shape (n_elements, 4), counter-clockwise corners."""
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        n0 = (j * (self.nx + 1) + i).ravel()
        conn = np.column_stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1])
        conn.flags.writeable = False
        return conn

    @cached_property
    def element_dofs(self) -> np.ndarray:
        """Interleaved displacement DOFs per element, shape (n_elements, 8)."""
        conn = self.elements
        dofs = np.empty((conn.shape[0], 8), dtype=np.int64)
        dofs[:, 0::2] = 2 * conn
        dofs[:, 1::2] = 2 * conn + 1
        dofs.flags.writeable = False
        return dofs

    @cached_property
    def coords(self) -> np.ndarray:
        """All node coordinates, shape (n_nodes, 2)."""
        x = np.arange(self.nx + 1) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        X, Y = np.meshgrid(x, y)
        xy = np.column_stack([X.ravel(), Y.ravel()])
        xy.flags.writeable = False
        return xy

    def node_coords(self, node_index: int) -> tuple[float, float]:
        if not 0 <= node_index < self.n_nodes:
            raise IndexError(f"node index {node_index} outside [0, {self.n_nodes})")
        j, i = divmod(int(node_index), self.nx + 1)
        return (i * self.hx, j * self.hy)

    def quadrature_coords(self, quad: Quadrature | None = None) -> np.ndarray:
        """Physical quadrature-point coordinates, shape (n_elements, nq, 2)."""
        quad = quad or gauss_2x2()
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        x0 = (i.ravel() * self.hx)[:, None]
        y0 = (j.ravel() * self.hy)[:, None]
        qx = x0 + 0.5 * (1.0 + quad.points[:, 0]) * self.hx
        qy = y0 + 0.5 * (1.0 + quad.points[:, 1]) * self.hy
        return np.stack([qx, qy], axis=-1)

    def nested_dissection(self, leaf: int = 16) -> np.ndarray:
        """Node permutation from recursive geometric bisection.

        Each block is split by its middle grid line across the longer side;
        both halves are numbered before the separator.  Blocks of at most
        ``leaf`` nodes are numbered lexicographically.  On a structured grid
        this gives sparse factorisations less fill than the generic minimum
        degree orderings.
        """
        nxp = self.nx + 1
        out: list[np.ndarray] = []

        def block(i0, i1, j0, j1):
            return (np.arange(j0, j1)[:, None] * nxp + np.arange(i0, i1)[None, :]).ravel()

        def rec(i0, i1, j0, j1):
            if i1 <= i0 or j1 <= j0:
                return
            if (i1 - i0) * (j1 - j0) <= leaf:
                out.append(block(i0, i1, j0, j1))
            elif i1 - i0 >= j1 - j0:
                m = (i0 + i1) // 2
                rec(i0, m, j0, j1)
                rec(m + 1, i1, j0, j1)
                out.append(block(m, m + 1, j0, j1))
            else:
                m = (j0 + j1) // 2
                rec(i0, i1, j0, m)
                rec(i0, i1, m + 1, j1)
                out.append(block(i0, i1, m, m + 1))

        rec(0, nxp, 0, self.ny + 1)
        return np.concatenate(out)

    def boundary_nodes(self, selector: EdgeSelector | Edge | str) -> np.ndarray:
        """Ascending node indices on one edge of the domain."""
        edge = selector.edge if isinstance(selector, EdgeSelector) else Edge(selector)
        nxp = self.nx + 1
        if edge is Edge.BOTTOM:
            return np.arange(nxp)
        if edge is Edge.TOP:
            return np.arange(self.ny * nxp, (self.ny + 1) * nxp)
        if edge is Edge.LEFT:
            return np.arange(0, self.n_nodes, nxp)
        return np.arange(self.nx, self.n_nodes, nxp)

    def boundary_dofs(self, selector: EdgeSelector) -> np.ndarray:
        """Global DOF indices of ``selector.component`` on ``selector.edge``.

        Phase DOFs coincide with node indices; displacement DOFs are interleaved.
        """
        nodes = self.boundary_nodes(selector)
        if selector.component is Component.PHASE:
            return nodes
        offset = 0 if selector.component is Component.X else 1
        return 2 * nodes + offset
