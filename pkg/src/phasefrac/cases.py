"""Benchmark and dataset scenarios, and the seeded random-crack sampler."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .assembly import DirichletSet
from .history import CrackSegment
from .material import DecompKind, MaterialParams
from .mesh import Component, Edge, EdgeSelector, StructuredGrid
from .solver import LoadSchedule

PRNG_ID = "numpy.random.Generator(PCG64)"
CRACK_LENGTH = 0.25
N_CRACKS = (10, 20)
DATASET_L0 = 0.01
DATASET_STEPS = 100


class BCKind(str, enum.Enum):
    TENSION_BENCHMARK = "tension-bench"
    SHEAR_BENCHMARK = "shear-bench"
    COALESCENCE_BENCHMARK = "coalescence-bench"
    BIAXIAL_DATASET = "tension"
    SHEAR_DATASET = "shear"

    @property
    def is_dataset(self) -> bool:
        return self in (BCKind.BIAXIAL_DATASET, BCKind.SHEAR_DATASET)


@dataclass(frozen=True)
class EdgeBC:
    """Displacement component on an edge set to ``scale * load``."""

    edge: Edge
    component: Component
    scale: float = 0.0


@dataclass(frozen=True)
class SampleSpec:
    seed: int
    n_cracks: int
    cracks: tuple[CrackSegment, ...]

    def __post_init__(self):
        if not N_CRACKS[0] <= self.n_cracks <= N_CRACKS[1]:
            raise ValueError(f"n_cracks must lie in {N_CRACKS}, got {self.n_cracks}")
        if len(self.cracks) != self.n_cracks:
            raise ValueError("crack list length differs from n_cracks")


def sample_cracks(seed: int, domain: tuple[float, float] = (1.0, 1.0), margin: float | None = None,
                  length: float = CRACK_LENGTH) -> SampleSpec:
    """Draw a random crack configuration as a pure function of ``seed``.

    The crack count is uniform on {10, ..., 20}; centres are uniform in the
    rectangle inset by ``margin`` from every edge and orientations uniform on
    [0, pi).  ``margin`` defaults to ``length / 2 + 2 * 0.01`` mm.
    """
    Lx, Ly = domain
    if margin is None:
        margin = 0.5 * length + 2.0 * DATASET_L0
    if margin < 0.5 * length:
        raise ValueError(f"margin {margin} is smaller than half the crack length")
    if 2 * margin >= min(Lx, Ly):
        raise ValueError(f"margin {margin} leaves no room inside a {Lx} x {Ly} domain")
    rng = np.random.default_rng(int(seed))
    n = int(rng.integers(N_CRACKS[0], N_CRACKS[1] + 1))
    cracks = []
    for _ in range(n):
        cx = float(rng.uniform(margin, Lx - margin))
        cy = float(rng.uniform(margin, Ly - margin))
        theta = float(rng.uniform(0.0, math.pi))
        cracks.append(CrackSegment(cx, cy, theta, length))
    return SampleSpec(seed=int(seed), n_cracks=n, cracks=tuple(cracks))


@dataclass(frozen=True)
class ScenarioSpec:
    bc: BCKind
    decomposition: DecompKind
    grid: StructuredGrid
    material: MaterialParams
    schedule: LoadSchedule
    cracks: tuple[CrackSegment, ...]
    displacement_edges: tuple[EdgeBC, ...]
    reaction: EdgeSelector
    phase_dirichlet_edges: tuple[Edge, ...] = ()
    seed: int | None = None
    l0_rescaled: bool = False

    def __post_init__(self):
        for c in self.cracks:
            if not c.inside(self.grid.Lx, self.grid.Ly):
                raise ValueError(f"crack {c} leaves the domain")

    @cached_property
    def _bc_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        dofs, scales = [], []
        for bc in self.displacement_edges:
            d = self.grid.boundary_dofs(EdgeSelector(bc.edge, bc.component))
            dofs.append(d)
            scales.append(np.full(len(d), float(bc.scale)))
        dofs = np.concatenate(dofs)
        scales = np.concatenate(scales)
        # corner DOFs shared by two edges keep their first definition
        _, first = np.unique(dofs, return_index=True)
        first.sort()
        return dofs[first], scales[first]

    def displacement_bc(self, load: float) -> DirichletSet:
        dofs, scales = self._bc_arrays
        return DirichletSet(dofs, scales * load)

    def phase_bc(self) -> DirichletSet:
        if not self.phase_dirichlet_edges:
            return DirichletSet.empty()
        nodes = np.unique(np.concatenate([self.grid.boundary_nodes(e) for e in self.phase_dirichlet_edges]))
        return DirichletSet(nodes, np.zeros(len(nodes)))

    def reaction_dofs(self) -> np.ndarray:
        return self.grid.boundary_dofs(self.reaction)

    @property
    def name(self) -> str:
        return f"{self.bc.value}-{self.decomposition.value}"

    def to_dict(self) -> dict:
        """Everything needed to rebuild the scenario, as plain JSON-able values."""
        return dict(
            bc=self.bc.value,
            decomposition=self.decomposition.value,
            grid=dict(nx=self.grid.nx, ny=self.grid.ny, Lx=self.grid.Lx, Ly=self.grid.Ly),
            material=self.material.to_dict(),
            schedule=list(self.schedule.values),
            cracks=[list(c.as_row()) for c in self.cracks],
            displacement_edges=[[b.edge.value, b.component.value, b.scale] for b in self.displacement_edges],
            reaction=[self.reaction.edge.value, self.reaction.component.value],
            phase_dirichlet_edges=[e.value for e in self.phase_dirichlet_edges],
            seed=self.seed,
            l0_rescaled=self.l0_rescaled,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        g = d["grid"]
        return cls(
            bc=BCKind(d["bc"]),
            decomposition=DecompKind(d["decomposition"]),
            grid=StructuredGrid(g["nx"], g["ny"], g["Lx"], g["Ly"]),
            material=MaterialParams(**d["material"]),
            schedule=LoadSchedule(tuple(d["schedule"])),
            cracks=tuple(CrackSegment(*row) for row in d["cracks"]),
            displacement_edges=tuple(EdgeBC(Edge(e), Component(c), float(s)) for e, c, s in d["displacement_edges"]),
            reaction=EdgeSelector(*d["reaction"]),
            phase_dirichlet_edges=tuple(Edge(e) for e in d["phase_dirichlet_edges"]),
            seed=d.get("seed"),
            l0_rescaled=bool(d.get("l0_rescaled", False)),
        )


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------

_X, _Y = Component.X, Component.Y

_CLAMPED_BOTTOM = (EdgeBC(Edge.BOTTOM, _X), EdgeBC(Edge.BOTTOM, _Y))

_DISPLACEMENT_BCS = {
    BCKind.TENSION_BENCHMARK: _CLAMPED_BOTTOM + (EdgeBC(Edge.TOP, _X), EdgeBC(Edge.TOP, _Y, 1.0)),
    BCKind.COALESCENCE_BENCHMARK: _CLAMPED_BOTTOM + (EdgeBC(Edge.TOP, _X), EdgeBC(Edge.TOP, _Y, 1.0)),
    BCKind.SHEAR_BENCHMARK: _CLAMPED_BOTTOM + (EdgeBC(Edge.TOP, _X, 1.0), EdgeBC(Edge.TOP, _Y)),
    BCKind.SHEAR_DATASET: _CLAMPED_BOTTOM + (EdgeBC(Edge.TOP, _X, 1.0), EdgeBC(Edge.TOP, _Y)),
    BCKind.BIAXIAL_DATASET: (
        EdgeBC(Edge.LEFT, _X, -1.0),
        EdgeBC(Edge.RIGHT, _X, 1.0),
        EdgeBC(Edge.BOTTOM, _Y, -1.0),
        EdgeBC(Edge.TOP, _Y, 1.0),
    ),
}

_REACTIONS = {
    BCKind.TENSION_BENCHMARK: EdgeSelector(Edge.TOP, _Y),
    BCKind.COALESCENCE_BENCHMARK: EdgeSelector(Edge.TOP, _Y),
    BCKind.SHEAR_BENCHMARK: EdgeSelector(Edge.TOP, _X),
    BCKind.SHEAR_DATASET: EdgeSelector(Edge.TOP, _X),
    BCKind.BIAXIAL_DATASET: EdgeSelector(Edge.TOP, _Y),
}

# Edge length of the square coalescence domain (mm).
COALESCENCE_SIZE = 5.0

# Final boundary displacement (mm) reached by the default 100-step dataset schedule.
DATASET_TOTAL_DISPLACEMENT = {
    (BCKind.BIAXIAL_DATASET, DecompKind.SPECTRAL): 8.0e-4,
    (BCKind.BIAXIAL_DATASET, DecompKind.VOLDEV): 8.0e-4,
    (BCKind.BIAXIAL_DATASET, DecompKind.STARCONVEX): 8.0e-4,
    (BCKind.SHEAR_DATASET, DecompKind.SPECTRAL): 8.0e-3,
    (BCKind.SHEAR_DATASET, DecompKind.VOLDEV): 8.0e-3,
    (BCKind.SHEAR_DATASET, DecompKind.STARCONVEX): 8.0e-3,
}


def benchmark_material(bc: BCKind) -> MaterialParams:
    if bc is BCKind.COALESCENCE_BENCHMARK:
        return MaterialParams.from_gpa(30.0, 0.333, 3e-3, 0.12)
    if bc.is_dataset:
        return MaterialParams.from_gpa(1000.0, 0.3, 1.0, DATASET_L0)
    return MaterialParams.from_gpa(210.0, 0.3, 2.7, 4e-3)


def default_schedule(bc: BCKind, decomposition: DecompKind, n_steps: int | None = None) -> LoadSchedule:
    if bc.is_dataset:
        total = DATASET_TOTAL_DISPLACEMENT[(bc, decomposition)]
        return LoadSchedule.uniform(total, n_steps or DATASET_STEPS)
    if bc is BCKind.TENSION_BENCHMARK:
        return LoadSchedule.increments([(1e-4, 45), (1e-5, 250)])
    if bc is BCKind.SHEAR_BENCHMARK:
        return LoadSchedule.uniform(2e-2, 100)
    return LoadSchedule.increments([(5e-5, 40), (1e-5, 150)])


def _benchmark_cracks(bc: BCKind) -> tuple[CrackSegment, ...]:
    if bc in (BCKind.TENSION_BENCHMARK, BCKind.SHEAR_BENCHMARK):
        return (CrackSegment.from_endpoints((0.0, 0.5), (0.5, 0.5)),)
    s = COALESCENCE_SIZE
    a = 1.0 / math.sqrt(2.0) * 0.5  # half-length of a 1 mm flaw projected on each axis
    return (
        CrackSegment.from_endpoints((0.38 * s - a, 0.46 * s - a), (0.38 * s + a, 0.46 * s + a)),
        CrackSegment.from_endpoints((0.62 * s - a, 0.54 * s - a), (0.62 * s + a, 0.54 * s + a)),
    )


def build_scenario(bc: BCKind | str, decomposition: DecompKind | str, resolution: int,
                   sample: SampleSpec | None = None, *, schedule: LoadSchedule | None = None,
                   material: MaterialParams | None = None, allow_rescale: bool = True,
                   n_steps: int | None = None) -> ScenarioSpec:
    """Assemble a fully specified scenario.

    If the element size does not resolve the regularisation length
    (``h <= l0 / 2``) then ``l0`` is raised to ``2 h`` with a warning, or a
    ``ValueError`` is raised when ``allow_rescale`` is false.
    """
    bc = BCKind(bc)
    decomposition = DecompKind(decomposition)
    size = COALESCENCE_SIZE if bc is BCKind.COALESCENCE_BENCHMARK else 1.0
    grid = StructuredGrid(resolution, resolution, size, size)
    material = material or benchmark_material(bc)

    rescaled = False
    if grid.h > 0.5 * material.l0 * (1 + 1e-12):
        if not allow_rescale:
            raise ValueError(f"element size {grid.h:g} does not resolve l0 = {material.l0:g} (need h <= l0/2)")
        warnings.warn(f"l0 raised from {material.l0:g} to {2 * grid.h:g} mm to satisfy h <= l0/2 "
                      f"at {resolution}x{resolution}", stacklevel=2)
        material = material.replace(l0=2.0 * grid.h)
        rescaled = True

    if bc.is_dataset:
        if sample is None:
            raise ValueError(f"{bc.value} scenarios need a crack sample")
        cracks, seed = sample.cracks, sample.seed
    else:
        cracks, seed = _benchmark_cracks(bc), None

    return ScenarioSpec(
        bc=bc,
        decomposition=decomposition,
        grid=grid,
        material=material,
        schedule=schedule or default_schedule(bc, decomposition, n_steps),
        cracks=tuple(cracks),
        displacement_edges=_DISPLACEMENT_BCS[bc],
        reaction=_REACTIONS[bc],
        phase_dirichlet_edges=(Edge.BOTTOM, Edge.TOP) if bc is BCKind.SHEAR_DATASET else (),
        seed=seed,
        l0_rescaled=rescaled,
    )
