"""Batch drivers shared by the command line front end and the test-suite."""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from . import io as sio
from .cases import PRNG_ID, BCKind, ScenarioSpec, build_scenario, sample_cracks
from .material import DecompKind, MaterialParams
from .solver import LoadSchedule, Simulation, SolverConfig, StepRecord

log = logging.getLogger(__name__)

BENCH_CASES = {
    "tension": BCKind.TENSION_BENCHMARK,
    "shear": BCKind.SHEAR_BENCHMARK,
    "coalescence": BCKind.COALESCENCE_BENCHMARK,
}
DATASET_CASES = {"tension": BCKind.BIAXIAL_DATASET, "shear": BCKind.SHEAR_DATASET}


def convergence_log(records: list[StepRecord]) -> list[dict]:
    return [dict(step=r.step, load=r.displacement, force=r.force, iterations=r.iterations,
                 converged=r.converged, max_dphi=r.max_dphi) for r in records]


@dataclass
class RunResult:
    scenario: ScenarioSpec
    records: list[StepRecord]
    initial_phi: np.ndarray
    final_H: np.ndarray | None = None
    seconds: float = 0.0

    @property
    def displacement(self) -> np.ndarray:
        return np.array([r.displacement for r in self.records])

    @property
    def force(self) -> np.ndarray:
        return np.array([r.force for r in self.records])


def run_scenario(scenario: ScenarioSpec, config: SolverConfig | None = None, save_every: int = 1,
                 on_step=None) -> RunResult:
    t0 = time.perf_counter()
    sim = Simulation(scenario, config)
    records = sim.run(save_every=save_every, on_step=on_step)
    return RunResult(scenario, records, sim.initial_phi, sim.final_state.H, time.perf_counter() - t0)


def _quiet_build(*args, **kw) -> ScenarioSpec:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sc = build_scenario(*args, **kw)
    for w in caught:
        log.warning("%s", w.message)
    return sc


def bench_scenario(case: str, decomposition: str, resolution: int, schedule: LoadSchedule | None = None,
                   material: MaterialParams | None = None) -> ScenarioSpec:
    if case not in BENCH_CASES:
        raise ValueError(f"unknown benchmark case {case!r}; choose from {sorted(BENCH_CASES)}")
    return _quiet_build(BENCH_CASES[case], DecompKind(decomposition), resolution, schedule=schedule,
                        material=material)


def dataset_scenario(bc: str, decomposition: str, resolution: int, seed: int, n_steps: int = 100,
                     total_displacement: float | None = None, material: MaterialParams | None = None) -> ScenarioSpec:
    if bc not in DATASET_CASES:
        raise ValueError(f"unknown dataset boundary condition {bc!r}; choose from {sorted(DATASET_CASES)}")
    schedule = LoadSchedule.uniform(total_displacement, n_steps) if total_displacement else None
    return _quiet_build(DATASET_CASES[bc], DecompKind(decomposition), resolution, sample_cracks(seed),
                        schedule=schedule, n_steps=n_steps, material=material)


def sample_metadata(scenario: ScenarioSpec, config: SolverConfig) -> dict:
    m = scenario.material
    return dict(
        seed=-1 if scenario.seed is None else int(scenario.seed),
        bc=scenario.bc.value,
        decomposition=scenario.decomposition.value,
        n_cracks=len(scenario.cracks),
        cracks=np.array([c.as_row() for c in scenario.cracks], dtype="<f8").reshape(-1, 4),
        E=m.E, nu=m.nu, Gc=m.Gc, l0=m.l0, gamma_star=m.gamma_star, k_res=m.k_res,
        schedule=np.array(scenario.schedule.values, dtype="<f8"),
        nx=scenario.grid.nx, ny=scenario.grid.ny, Lx=scenario.grid.Lx, Ly=scenario.grid.Ly,
        prng=PRNG_ID,
        scenario=json.dumps(scenario.to_dict(), sort_keys=True),
        solver_config=json.dumps(config.to_dict(), sort_keys=True),
        version=__version__,
    )


def generate_sample(seed: int, bc: str, decomposition: str, resolution: int, out_dir, n_steps: int = 100,
                    total_displacement: float | None = None, overwrite: bool = False, suffix: str = ".h5",
                    config: SolverConfig | None = None, save_every: int = 1) -> tuple[Path, RunResult]:
    """Simulate one random-crack sample and write ``{bc}-{decomp}/{seed}.h5``."""
    config = config or SolverConfig()
    path = sio.sample_path(out_dir, bc, DecompKind(decomposition).value, seed, suffix)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} exists (pass overwrite to replace it)")
    scenario = dataset_scenario(bc, decomposition, resolution, seed, n_steps, total_displacement)
    result = run_scenario(scenario, config, save_every=save_every)
    sio.write_sample(path, result.records, sample_metadata(scenario, config), scenario.grid.node_shape,
                     initial_phase=result.initial_phi)
    return path, result


def rerun_from_attrs(attrs: dict) -> RunResult:
    """Re-simulate a sample from the attributes stored in its file."""
    scenario = ScenarioSpec.from_dict(json.loads(attrs["scenario"]))
    config = SolverConfig(**json.loads(attrs["solver_config"]))
    return run_scenario(scenario, config)


def curve_distance(d1, f1, d2, f2, n_points: int | None = None) -> float:
    """L2 distance between two force-displacement curves.

    Both curves are linearly interpolated to common displacement points
    spanning their overlap and the squared difference is integrated with the
    trapezoid rule.
    """
    d1, f1, d2, f2 = map(np.asarray, (d1, f1, d2, f2))
    lo = max(d1.min(), d2.min())
    hi = min(d1.max(), d2.max())
    if not hi > lo:
        raise ValueError("force curves do not overlap in displacement")
    if n_points is None:
        pts = np.union1d(d1[(d1 >= lo) & (d1 <= hi)], d2[(d2 >= lo) & (d2 <= hi)])
    else:
        pts = np.linspace(lo, hi, n_points)
    diff = np.interp(pts, d1, f1) - np.interp(pts, d2, f2)
    return float(np.sqrt(trapezoid(diff**2, pts)))


def max_relative_deviation(f_ref, f_other) -> float:
    """Largest pointwise force gap relative to the peak of the reference curve."""
    f_ref = np.asarray(f_ref)
    f_other = np.asarray(f_other)
    return float(np.max(np.abs(f_ref - f_other)) / np.max(np.abs(f_ref)))


def mesh_study_scenarios(case: str, decomposition: str, resolutions: list[int], seed: int | None = None,
                         n_steps: int = 100, total_displacement: float | None = None) -> list[ScenarioSpec]:
    """One scenario per resolution sharing the crack pattern, schedule and l0.

    ``l0`` is fixed to the smallest value resolved by the coarsest grid (or
    the nominal value if that is already resolved) so that successive
    curves converge to a common limit.
    """
    if len(resolutions) < 2:
        raise ValueError("a mesh study needs at least two resolutions")
    coarse = min(resolutions)
    if seed is None:
        base = bench_scenario(case, decomposition, coarse)
        build = lambda n: bench_scenario(case, decomposition, n, material=base.material, schedule=base.schedule)
    else:
        base = dataset_scenario(case, decomposition, coarse, seed, n_steps, total_displacement)
        build = lambda n: dataset_scenario(case, decomposition, n, seed, n_steps, total_displacement,
                                           material=base.material)
    return [build(n) for n in resolutions]


def mesh_study_summary(results: list[RunResult]) -> dict:
    entries = []
    for a, b in zip(results[:-1], results[1:]):
        entries.append(dict(coarse=a.scenario.grid.nx, fine=b.scenario.grid.nx,
                            l2_distance=curve_distance(a.displacement, a.force, b.displacement, b.force)))
    return dict(resolutions=[r.scenario.grid.nx for r in results], l0=results[0].scenario.material.l0,
                distances=entries)
