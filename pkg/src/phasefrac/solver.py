"""Linear SPD solves and the staggered load-stepping loop."""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .assembly import DirichletSet, SparseSystem
from .history import initial_history, update_history
from .material import energy_split

log = logging.getLogger(__name__)

PHI_BOUND_TOL = 1e-3
PRECONDITIONERS = ("lu", "amg", "jacobi")


class LinearSolverError(RuntimeError):
    """Raised when an iterative solve stops before reaching its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class SimulationError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"simulation failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class SolverConfig:
    stag_tol: float = 1e-4
    max_stag_iters: int = 200
    lin_rtol: float = 1e-10
    lin_maxiter: int = 20000
    # displacement solves: "lu" (reused sparse factors), "amg" (smoothed
    # aggregation V-cycle) or "jacobi"
    preconditioner: str = "lu"
    phase_preconditioner: str = "jacobi"
    # row-sum lumped reaction term in the phase system (keeps phi in [0, 1))
    lumped_phase: bool = True

    def __post_init__(self):
        if not (self.stag_tol > 0 and self.lin_rtol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_stag_iters < 1:
            raise ValueError("max_stag_iters must be at least 1")
        for kind in (self.preconditioner, self.phase_preconditioner):
            if kind not in PRECONDITIONERS:
                raise ValueError(f"unknown preconditioner {kind!r}; choose from {PRECONDITIONERS}")

    def to_dict(self) -> dict:
        return dict(stag_tol=self.stag_tol, max_stag_iters=self.max_stag_iters, lin_rtol=self.lin_rtol,
                    lin_maxiter=self.lin_maxiter, preconditioner=self.preconditioner,
                    phase_preconditioner=self.phase_preconditioner, lumped_phase=self.lumped_phase)


@dataclass(frozen=True)
class LoadSchedule:
    """Applied boundary displacement (mm) at each load step."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("a load schedule needs at least one step")
        mags = np.abs(vals)
        if np.any(np.diff(mags) < 0):
            raise ValueError("load magnitudes must be non-decreasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, total: float, n_steps: int) -> "LoadSchedule":
        return cls(tuple(total * (k + 1) / n_steps for k in range(n_steps)))

    @classmethod
    def increments(cls, stages: Iterable[tuple[float, int]], start: float = 0.0) -> "LoadSchedule":
        """Piecewise-constant increments: ``[(du, n_steps), ...]``."""
        vals, u = [], start
        for du, n in stages:
            for k in range(1, n + 1):
                vals.append(u + k * du)
            u += n * du
        return cls(tuple(vals))

    def __len__(self):
        return len(self.values)


@dataclass
class StepRecord:
    step: int
    phi: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    displacement: float
    force: float
    iterations: int
    converged: bool
    max_dphi: float


@dataclass
class SimulationState:
    u: np.ndarray
    phi: np.ndarray
    H: np.ndarray  # (n_elements, nq)
    step: int = 0


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

@contextlib.contextmanager
def _fixed_global_seed(seed: int = 0):
    # pyamg draws start vectors for spectral-radius estimates from np.random
    state = np.random.get_state()
    np.random.seed(seed)
    try:
        yield
    finally:
        np.random.set_state(state)


def jacobi_preconditioner(A: sp.spmatrix) -> Callable[[np.ndarray], np.ndarray]:
    d = A.diagonal()
    if np.any(d <= 0):
        raise LinearSolverError("matrix has a non-positive diagonal entry")
    inv = 1.0 / d
    return lambda r: inv * r


def amg_preconditioner(A: sp.spmatrix, near_nullspace: np.ndarray | None = None) -> Callable[[np.ndarray], np.ndarray]:
    import pyamg

    with _fixed_global_seed():
        ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(A), B=near_nullspace, symmetry="symmetric")
    P = ml.aspreconditioner(cycle="V")
    return lambda r: P @ r


def lu_preconditioner(A: sp.spmatrix, order: np.ndarray | None = None,
                      single: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU factors of ``A`` used as a preconditioner.

    Kept across staggered iterations, the factors of an earlier matrix remain
    an excellent preconditioner while the phase field changes slowly.  With
    ``order`` the matrix is symmetrically permuted and factored without
    further column reordering; otherwise SuperLU's minimum degree ordering is
    used.  ``single`` factors in float32, which halves the memory traffic of
    each back-substitution; the outer iteration still runs in float64.
    """
    dtype = np.float32 if single else np.float64
    A = sp.csc_matrix(A)
    if order is not None:
        A = A[order][:, order].tocsc()
    try:
        lu = spla.splu(A.astype(dtype), permc_spec="NATURAL" if order is not None else "MMD_AT_PLUS_A",
                       diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise LinearSolverError(f"LU factorisation failed: {exc}") from exc
    if order is None:
        return lambda r: lu.solve(r.astype(dtype)).astype(float)

    def solve(r):
        z = np.empty_like(r)
        z[order] = lu.solve(r[order].astype(dtype))
        return z

    return solve


def make_preconditioner(kind: str, A: sp.spmatrix, near_nullspace: np.ndarray | None = None,
                        order: np.ndarray | None = None, single: bool = True):
    if kind == "amg":
        return amg_preconditioner(A, near_nullspace)
    if kind == "lu":
        return lu_preconditioner(A, order, single)
    if kind == "jacobi":
        return jacobi_preconditioner(A)
    if kind == "none":
        return None
    raise ValueError(f"unknown preconditioner {kind!r}")


def pcg(A, b: np.ndarray, precond: Callable[[np.ndarray], np.ndarray] | None = None,
        x0: np.ndarray | None = None, rtol: float = 1e-10, maxiter: int = 20000) -> tuple[np.ndarray, int]:
    """Preconditioned conjugate gradients stopping on ``||b - Ax|| <= rtol ||b||``.

    Returns the solution and the iteration count.  The stopping test is
    confirmed on the true residual, not only the recursively updated one.
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    precond = precond or (lambda r: r)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    target = rtol * bnorm
    if np.linalg.norm(r) <= target:
        return x, 0
    z = precond(r)
    p = z.copy()
    rz = r @ z
    for k in range(1, maxiter + 1):
        Ap = A @ p
        curv = p @ Ap
        if not curv > 0:
            raise LinearSolverError("non-positive curvature, matrix is not SPD",
                                    np.linalg.norm(r) / bnorm, k)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= target:
            r = b - A @ x
            if np.linalg.norm(r) <= target:
                return x, k
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise LinearSolverError("iteration cap reached", np.linalg.norm(b - A @ x) / bnorm, maxiter)


def solve_spd(system: SparseSystem, rtol: float = 1e-10, preconditioner: str = "jacobi",
              x0: np.ndarray | None = None, maxiter: int = 20000) -> np.ndarray:
    """Solve an SPD system by preconditioned CG (Jacobi by default)."""
    A = system.matrix
    M = make_preconditioner(preconditioner, A)
    x, _ = pcg(A, system.rhs, M, x0=x0, rtol=rtol, maxiter=maxiter)
    return x


class _ReusedPreconditioner:
    """Keeps a preconditioner across nearby matrices, rebuilding when the
    iteration count drifts well above the count seen right after a rebuild.

    Single-precision LU factors fall back to double precision for good if a
    fresh factorisation fails or does not bring PCG to tolerance.
    """

    def __init__(self, kind: str, near_nullspace: np.ndarray | None = None, growth: float = 1.5,
                 floor: int | None = None, order: np.ndarray | None = None):
        self.kind = kind
        self.near_nullspace = near_nullspace
        self.order = order
        self.growth = growth
        # a refactorisation costs about as much as a few dozen back-substitutions
        self.floor = floor if floor is not None else (6 if kind == "lu" else 25)
        self.single = kind == "lu"
        self._M = None
        self._baseline: int | None = None

    def invalidate(self):
        self._M = None

    def solve(self, A, b, x0, rtol, maxiter) -> np.ndarray:
        fresh = self._M is None
        try:
            if fresh:
                self._M = make_preconditioner(self.kind, A, self.near_nullspace, self.order, self.single)
            cap = maxiter if fresh else min(maxiter, max(200, 4 * (self._baseline or 0)))
            x, its = pcg(A, b, self._M, x0=x0, rtol=rtol, maxiter=cap)
        except LinearSolverError:
            self._M = None
            if fresh and not self.single:
                raise
            if fresh:
                log.warning("single-precision LU preconditioner failed, switching to double precision")
                self.single = False
            return self.solve(A, b, x0, rtol, maxiter)
        if fresh:
            self._baseline = its
        elif its > max(self.floor, self.growth * (self._baseline or 0)):
            self._M = None
        return x


# ---------------------------------------------------------------------------
# Staggered scheme
# ---------------------------------------------------------------------------

def rigid_body_modes(grid) -> np.ndarray:
    xy = grid.coords
    B = np.zeros((2 * grid.n_nodes, 3))
    B[0::2, 0] = 1.0
    B[1::2, 1] = 1.0
    B[0::2, 2] = -xy[:, 1]
    B[1::2, 2] = xy[:, 0]
    return B


class Simulation:
    """Staggered solver bound to one scenario.

    ``scenario`` must provide ``grid``, ``material``, ``decomposition``,
    ``cracks``, ``schedule`` and the methods ``displacement_bc(load)``,
    ``phase_bc()`` and ``reaction_dofs()``.
    """

    def __init__(self, scenario, config: SolverConfig | None = None):
        self.scenario = scenario
        self.config = config or SolverConfig()
        self.grid = scenario.grid
        self.params = scenario.material
        self.kind = scenario.decomposition
        self.phase_bc = scenario.phase_bc()
        self.reaction_dofs = np.asarray(scenario.reaction_dofs())
        near = rigid_body_modes(self.grid) if self.config.preconditioner == "amg" else None
        nodes = self.grid.nested_dissection()
        dofs = np.column_stack([2 * nodes, 2 * nodes + 1]).ravel()
        self._u_solver = _ReusedPreconditioner(self.config.preconditioner, near, order=dofs)
        self._phi_solver = _ReusedPreconditioner(self.config.phase_preconditioner, order=nodes)

    def _lin(self, solver: _ReusedPreconditioner, system: SparseSystem, x0) -> np.ndarray:
        return solver.solve(system.matrix, system.rhs, x0, self.config.lin_rtol, self.config.lin_maxiter)

    def initial_state(self) -> SimulationState:
        """Zero displacement and the phase field induced by the initial cracks alone."""
        grid = self.grid
        H0 = initial_history(grid.quadrature_coords(), self.scenario.cracks, self.params)
        phi = self.solve_phase(H0, np.zeros(grid.n_nodes))
        return SimulationState(u=np.zeros(2 * grid.n_nodes), phi=phi, H=H0, step=0)

    def solve_phase(self, H: np.ndarray, phi0: np.ndarray) -> np.ndarray:
        system = assembly.assemble_phase(self.grid, self.params, H, self.phase_bc, lumped=self.config.lumped_phase)
        return self._lin(self._phi_solver, system, phi0)

    def solve_displacement(self, phi: np.ndarray, load: float, u0: np.ndarray) -> np.ndarray:
        system = assembly.assemble_elasticity(self.grid, self.params, phi, self.scenario.displacement_bc(load))
        return self._lin(self._u_solver, system, u0)

    def tensile_energy(self, u: np.ndarray) -> np.ndarray:
        eps = assembly.strain_at_quadrature(self.grid, u)
        return energy_split(eps, self.kind, self.params).plus

    def reaction(self, phi: np.ndarray, u: np.ndarray) -> float:
        f = assembly.internal_force(self.grid, self.params, phi, u)
        return float(np.sum(f[self.reaction_dofs]))

    def staggered_step(self, state: SimulationState, load: float) -> tuple[SimulationState, StepRecord]:
        """Alternate displacement and phase solves at a fixed load until the
        largest nodal phase change drops below ``stag_tol``."""
        cfg = self.config
        u, phi, H = state.u, state.phi, state.H
        converged = False
        dphi = np.inf
        it = 0
        phi_eq = phi
        for it in range(1, cfg.max_stag_iters + 1):
            phi_eq = phi
            u = self.solve_displacement(phi, load, u)
            H = update_history(H, self.tensile_energy(u))
            phi_new = self.solve_phase(H, phi)
            dphi = float(np.max(np.abs(phi_new - phi)))
            phi = phi_new
            if dphi < cfg.stag_tol:
                converged = True
                break
        if not converged:
            log.warning("step %d: staggered loop stopped after %d iterations (max dphi %.3e)",
                        state.step + 1, it, dphi)
        lo, hi = float(phi.min()), float(phi.max())
        if lo < -PHI_BOUND_TOL or hi > 1.0 + PHI_BOUND_TOL:
            log.warning("step %d: phase field outside bounds [%.4g, %.4g]", state.step + 1, lo, hi)
        new_state = SimulationState(u=u, phi=phi, H=H, step=state.step + 1)
        record = StepRecord(
            step=state.step + 1,
            phi=phi.copy(),
            ux=u[0::2].copy(),
            uy=u[1::2].copy(),
            displacement=float(load),
            force=self.reaction(phi_eq, u),
            iterations=it,
            converged=converged,
            max_dphi=dphi,
        )
        return new_state, record

    def run(self, save_every: int = 1, on_step: Callable[[SimulationState, StepRecord], None] | None = None,
            state: SimulationState | None = None) -> list[StepRecord]:
        if save_every < 1:
            raise ValueError("save_every must be at least 1")
        if state is None:
            try:
                state = self.initial_state()
            except LinearSolverError as exc:
                raise SimulationError(0, exc) from exc
        self.initial_phi = state.phi.copy()
        records = []
        for k, load in enumerate(self.scenario.schedule.values):
            try:
                state, rec = self.staggered_step(state, load)
            except LinearSolverError as exc:
                raise SimulationError(k + 1, exc) from exc
            if on_step is not None:
                on_step(state, rec)
            if (k + 1) % save_every == 0:
                records.append(rec)
            log.debug("step %d load %.4e force %.4e iters %d", rec.step, load, rec.force, rec.iterations)
        self.final_state = state
        return records


def run_simulation(scenario, config: SolverConfig | None = None, save_every: int = 1,
                   on_step=None) -> list[StepRecord]:
    """Apply a scenario's load schedule and return the saved step records."""
    return Simulation(scenario, config).run(save_every=save_every, on_step=on_step)


def staggered_step(scenario, state: SimulationState, load: float,
                   config: SolverConfig | None = None) -> tuple[SimulationState, StepRecord]:
    return Simulation(scenario, config).staggered_step(state, load)


def force_displacement(records: Sequence[StepRecord]) -> tuple[np.ndarray, np.ndarray]:
    return (np.array([r.displacement for r in records]), np.array([r.force for r in records]))
