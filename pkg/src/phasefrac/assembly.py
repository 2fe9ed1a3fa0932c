"""Global assembly of the degraded elasticity system and the linear
phase-field system on a structured Q1 grid.

Every element of a uniform grid has the same Jacobian, so the per-quadrature
reference matrices are computed once and the element matrices are linear
combinations of them weighted by quadrature-point coefficients.  Global
matrices are accumulated with :func:`numpy.bincount` over a fixed
element-major slot map, which makes assembly bitwise reproducible.

Voigt order is ``(xx, yy, xy)`` with engineering shear ``2 * exy`` in B.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .material import MaterialParams, degradation, hybrid_stress
from .mesh import StructuredGrid, gauss_2x2, shape_eval


@dataclass(frozen=True)
class DirichletSet:
    """Prescribed values on a set of DOFs."""

    dofs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dofs = np.asarray(self.dofs, dtype=np.int64).ravel()
        values = np.broadcast_to(np.asarray(self.values, dtype=float), dofs.shape).copy()
        if len(np.unique(dofs)) != len(dofs):
            raise ValueError("duplicate DOF indices in Dirichlet set")
        object.__setattr__(self, "dofs", dofs)
        object.__setattr__(self, "values", values)

    @classmethod
    def empty(cls) -> "DirichletSet":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    @classmethod
    def from_pairs(cls, pairs) -> "DirichletSet":
        pairs = list(pairs)
        if not pairs:
            return cls.empty()
        dofs, values = zip(*pairs)
        return cls(np.array(dofs), np.array(values, dtype=float))

    def __len__(self):
        return len(self.dofs)


@dataclass
class SparseSystem:
    """CSR matrix plus right-hand side."""

    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data


class _Pattern:
    """Sparsity pattern of a field plus the map from element entries to CSR slots."""

    def __init__(self, elem_dofs: np.ndarray, ndof: int):
        k = elem_dofs.shape[1]
        rows = np.repeat(elem_dofs, k, axis=1).ravel()
        cols = np.tile(elem_dofs, (1, k)).ravel()
        keys, self.slot = np.unique(rows * ndof + cols, return_inverse=True)
        self.slot = self.slot.ravel()
        self.ndof = ndof
        self.nnz = len(keys)
        self.row = (keys // ndof).astype(np.int64)
        self.indices = (keys % ndof).astype(np.int32)
        self.indptr = np.searchsorted(self.row, np.arange(ndof + 1)).astype(np.int32)
        self.elem_dofs = elem_dofs
        self._masks: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}

    def dirichlet_masks(self, dofs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """CSR slots in a constrained row or column, and constrained diagonal slots."""
        key = dofs.tobytes()
        if key not in self._masks:
            fixed = np.zeros(self.ndof, dtype=bool)
            fixed[dofs] = True
            cols = self.indices
            touched = fixed[self.row] | fixed[cols]
            self._masks[key] = (touched, (self.row == cols) & fixed[self.row])
        return self._masks[key]

    def matrix(self, elem_values: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=elem_values.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.ndof, self.ndof))

    def vector(self, elem_values: np.ndarray) -> np.ndarray:
        return np.bincount(self.elem_dofs.ravel(), weights=elem_values.ravel(), minlength=self.ndof)


class _Reference:
    """Grid-wide reference data shared by all assembly calls on one grid."""

    def __init__(self, grid: StructuredGrid):
        quad = gauss_2x2()
        self.grid = grid
        self.detJ = 0.25 * grid.hx * grid.hy
        self.wdet = quad.weights * self.detJ  # (nq,)
        nq = quad.n_points
        self.N = np.empty((nq, 4))  # N[q, a]
        self.G = np.empty((nq, 4, 2))  # physical gradients
        for q, (xi, eta) in enumerate(quad.points):
            vals, grads = shape_eval(xi, eta)
            self.N[q] = vals
            self.G[q] = grads * np.array([2.0 / grid.hx, 2.0 / grid.hy])
        # B[q] maps the 8 element DOFs to Voigt strain
        self.B = np.zeros((nq, 3, 8))
        self.B[:, 0, 0::2] = self.G[:, :, 0]
        self.B[:, 1, 1::2] = self.G[:, :, 1]
        self.B[:, 2, 0::2] = self.G[:, :, 1]
        self.B[:, 2, 1::2] = self.G[:, :, 0]
        # phase-field reference matrices
        self.M_q = self.wdet[:, None, None] * self.N[:, :, None] * self.N[:, None, :]
        self.L = np.einsum("q,qai,qbi->ab", self.wdet, self.G, self.G)
        self.Nw = self.wdet[:, None] * self.N
        self.vector = _Pattern(grid.element_dofs, 2 * grid.n_nodes)
        self.scalar = _Pattern(np.asarray(grid.elements, dtype=np.int64), grid.n_nodes)

    def stiffness_q(self, params: MaterialParams) -> np.ndarray:
        """Per-quadrature undegraded contributions ``w |J| B^T C B``, shape (nq, 8, 8)."""
        C = params.elasticity_matrix
        return np.einsum("q,qik,ij,qjl->qkl", self.wdet, self.B, C, self.B)


@lru_cache(maxsize=8)
def reference(grid: StructuredGrid) -> _Reference:
    return _Reference(grid)


def _check_size(name: str, arr: np.ndarray, n: int):
    if arr.shape != (n,):
        raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")


def phase_at_quadrature(grid: StructuredGrid, phi_nodal: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of nodal phi, shape (n_elements, nq)."""
    ref = reference(grid)
    return np.asarray(phi_nodal)[grid.elements] @ ref.N.T


def strain_at_quadrature(grid: StructuredGrid, u: np.ndarray) -> np.ndarray:
    """Tensor strain ``(exx, eyy, exy)`` at every quadrature point, shape (ne, nq, 3)."""
    ref = reference(grid)
    ue = np.asarray(u)[grid.element_dofs]
    eps = np.einsum("qij,ej->eqi", ref.B, ue)
    eps[..., 2] *= 0.5
    return eps


def stiffness_matrix(grid: StructuredGrid, params: MaterialParams, phi_nodal: np.ndarray) -> sp.csr_matrix:
    """Degraded stiffness matrix without boundary conditions."""
    phi_nodal = np.asarray(phi_nodal, dtype=float)
    _check_size("phi_nodal", phi_nodal, grid.n_nodes)
    ref = reference(grid)
    g = degradation(phase_at_quadrature(grid, phi_nodal), params.k_res)
    Kq = ref.stiffness_q(params).reshape(len(ref.wdet), 64)
    return ref.vector.matrix(g @ Kq)


def apply_dirichlet(matrix: sp.csr_matrix, rhs: np.ndarray, dirichlet: DirichletSet,
                    pattern: _Pattern | None = None) -> SparseSystem:
    """Symmetric elimination: constrained rows/columns become identity,
    the prescribed values are moved to the right-hand side.

    ``pattern`` supplies cached slot masks when ``matrix`` was built from it.
    """
    n = matrix.shape[0]
    rhs = np.array(rhs, dtype=float)
    if len(dirichlet) == 0:
        return SparseSystem(matrix, rhs)
    lift = np.zeros(n)
    lift[dirichlet.dofs] = dirichlet.values
    rhs -= matrix @ lift
    rhs[dirichlet.dofs] = dirichlet.values

    if pattern is not None:
        touched, diag = pattern.dirichlet_masks(dirichlet.dofs)
    else:
        fixed = np.zeros(n, dtype=bool)
        fixed[dirichlet.dofs] = True
        rows = np.repeat(np.arange(n), np.diff(matrix.indptr))
        touched = fixed[rows] | fixed[matrix.indices]
        diag = (rows == matrix.indices) & fixed[rows]
    A = matrix.copy()
    A.data[touched] = 0.0
    A.data[diag] = 1.0
    return SparseSystem(A, rhs)


def assemble_elasticity(grid: StructuredGrid, params: MaterialParams, phi_nodal: np.ndarray,
                        dirichlet: DirichletSet) -> SparseSystem:
    """Degraded plane-strain elasticity system with Dirichlet conditions eliminated."""
    K = stiffness_matrix(grid, params, phi_nodal)
    return apply_dirichlet(K, np.zeros(K.shape[0]), dirichlet, reference(grid).vector)


def assemble_phase(grid: StructuredGrid, params: MaterialParams, H: np.ndarray,
                   dirichlet: DirichletSet | None = None, lumped: bool = False) -> SparseSystem:
    """Weak form of ``(Gc/l0 + 2H) phi - Gc l0 lap(phi) = 2H`` with natural
    boundary conditions away from ``dirichlet``.

    With ``lumped=True`` the reaction term is row-sum lumped.  Together with
    the non-positive off-diagonals of the Q1 Laplacian on square elements this
    makes the matrix an M-matrix, so the discrete solution stays in [0, 1).
    The consistent form can overshoot 1 next to the steep initial-crack band.
    """
    H = np.asarray(H, dtype=float)
    if H.shape != (grid.n_elements, 4):
        raise ValueError(f"history field has shape {H.shape}, expected ({grid.n_elements}, 4)")
    ref = reference(grid)
    coef = params.Gc / params.l0 + 2.0 * H
    Ae = np.tile((params.Gc * params.l0) * ref.L.ravel(), (grid.n_elements, 1))
    if lumped:
        Ae[:, ::5] += coef @ ref.Nw
    else:
        Ae += coef @ ref.M_q.reshape(len(ref.wdet), 16)
    be = (2.0 * H) @ ref.Nw
    A = ref.scalar.matrix(Ae)
    b = ref.scalar.vector(be)
    return apply_dirichlet(A, b, dirichlet or DirichletSet.empty(), ref.scalar)


def internal_force(grid: StructuredGrid, params: MaterialParams, phi_nodal: np.ndarray,
                   u: np.ndarray) -> np.ndarray:
    """Nodal internal force ``sum_e sum_q w |J| B^T sigma`` (interleaved like u)."""
    phi_nodal = np.asarray(phi_nodal, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_size("phi_nodal", phi_nodal, grid.n_nodes)
    _check_size("u", u, 2 * grid.n_nodes)
    ref = reference(grid)
    eps = strain_at_quadrature(grid, u)
    sig = hybrid_stress(eps, phase_at_quadrature(grid, phi_nodal), params)  # tensor comps
    fe = np.einsum("q,qij,eqi->ej", ref.wdet, ref.B, sig)
    return ref.vector.vector(fe)


def edge_reaction(f: np.ndarray, dofs: np.ndarray) -> float:
    """Sum of force components over a set of constrained DOFs."""
    return float(np.sum(f[dofs]))
