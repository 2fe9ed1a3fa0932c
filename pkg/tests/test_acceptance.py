"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The simulation criteria (6 to 10) run full desk-scale scenarios and take
minutes each; everything else finishes in well under a second.
"""

import itertools
import math
import time
import warnings

import numpy as np
import pytest
from scipy import ndimage

from phasefrac import io as sio
from phasefrac import metrics, runs
from phasefrac.assembly import DirichletSet, assemble_elasticity, assemble_phase, edge_reaction, internal_force
from phasefrac.cli import main as cli_main
from phasefrac.history import CrackSegment, initial_history, update_history
from phasefrac.material import DecompKind, MaterialParams, eig2_sym, elastic_energy, energy_split
from phasefrac.mesh import Component, Edge, EdgeSelector, StructuredGrid
from phasefrac.solver import Simulation, SolverConfig, StepRecord, solve_spd

pytestmark = pytest.mark.filterwarnings("ignore:l0 raised")

STEEL = MaterialParams.from_gpa(210.0, 0.3, 2.7, 4e-3)
TABLE = MaterialParams.from_gpa(1000.0, 0.3, 1.0, 0.01)


def minutes(seconds):
    return f"{seconds / 60:.1f} min"


# ---------------------------------------------------------------------------
# Fast criteria
# ---------------------------------------------------------------------------

def test_criterion_01_decomposition_identities(report):
    t0 = time.perf_counter()
    eps = np.random.default_rng(1).normal(scale=1e-3, size=(10_000, 3))
    psi0 = elastic_energy(eps, STEEL)
    worst = 0.0
    for kind in DecompKind:
        s = energy_split(eps, kind, STEEL)
        worst = max(worst, float(np.max(np.abs(s.plus + s.minus - psi0) / psi0)))
    star = energy_split(eps, DecompKind.STARCONVEX, STEEL.replace(gamma_star=0.0))
    vd = energy_split(eps, DecompKind.VOLDEV, STEEL)
    gap = max(float(np.max(np.abs(star.plus - vd.plus))), float(np.max(np.abs(star.minus - vd.minus))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and gap <= 1e-14 and elapsed < 1.0
    assert report(1, ok, f"max split-sum rel. error {worst:.2e} (<= 1e-12), star-convex(0) vs vol-dev {gap:.2e} "
                         f"(<= 1e-14), {elapsed:.2f} s")


def test_criterion_02_spectral_reconstruction(report):
    t0 = time.perf_counter()
    eps = np.random.default_rng(2).normal(scale=1e-3, size=(10_000, 3))
    eps[:3] = [[1e-3, 1e-3, 0.0], [-2e-3, -2e-3, 0.0], [0.0, 0.0, 0.0]]  # repeated eigenvalues
    e1, e2, v1, v2 = eig2_sym(eps)
    rec = (e1[:, None, None] * v1[:, :, None] * v1[:, None, :]
           + e2[:, None, None] * v2[:, :, None] * v2[:, None, :])
    T = np.stack([np.stack([eps[:, 0], eps[:, 2]], -1), np.stack([eps[:, 2], eps[:, 1]], -1)], axis=1)
    norm = np.linalg.norm(T, axis=(1, 2))
    err = np.linalg.norm(rec - T, axis=(1, 2)) / np.where(norm > 0, norm, 1.0)
    elapsed = time.perf_counter() - t0
    ok = float(err.max()) <= 1e-12 and elapsed < 1.0
    assert report(2, ok, f"max reconstruction rel. error {err.max():.2e} (<= 1e-12) incl. repeated eigenvalues, "
                         f"{elapsed:.2f} s")


def test_criterion_03_patch_test(report):
    t0 = time.perf_counter()
    g = StructuredGrid(4, 4)
    x, y = g.coords[:, 0], g.coords[:, 1]
    exact = np.empty(2 * g.n_nodes)
    exact[0::2] = 1e-4 + 2e-3 * x - 1e-3 * y
    exact[1::2] = -3e-4 + 5e-4 * x + 1.5e-3 * y
    nodes = np.unique(np.concatenate([g.boundary_nodes(e) for e in Edge]))
    dofs = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
    phi = np.zeros(g.n_nodes)
    u = solve_spd(assemble_elasticity(g, STEEL, phi, DirichletSet(dofs, exact[dofs])), rtol=1e-14)
    patch_err = float(np.abs(u - exact).max())

    e = 1e-3
    params = STEEL.replace(k_res=0.0)
    sel = lambda edge, comp: g.boundary_dofs(EdgeSelector(edge, comp))
    right = sel(Edge.RIGHT, Component.X)
    fixed = np.concatenate([sel(Edge.LEFT, Component.X), right, sel(Edge.BOTTOM, Component.Y),
                            sel(Edge.TOP, Component.Y)])
    vals = np.concatenate([np.zeros(5), np.full(5, e * g.Lx), np.zeros(10)])
    u = solve_spd(assemble_elasticity(g, params, phi, DirichletSet(fixed, vals)), rtol=1e-14)
    force = edge_reaction(internal_force(g, params, phi, u), right)
    expected = (params.lam + 2 * params.mu) * e * g.Lx
    rel = abs(force - expected) / expected
    elapsed = time.perf_counter() - t0
    ok = patch_err <= 1e-10 and rel <= 1e-8 and elapsed < 1.0
    assert report(3, ok, f"patch error {patch_err:.1e} (<= 1e-10), stretch reaction rel. error {rel:.1e} (<= 1e-8), "
                         f"{elapsed:.2f} s")


def test_criterion_04_homogeneous_phase(report):
    t0 = time.perf_counter()
    g = StructuredGrid(16, 16)
    H = 123.0
    system = assemble_phase(g, STEEL, np.full((g.n_elements, 4), H), lumped=SolverConfig().lumped_phase)
    phi = solve_spd(system, rtol=1e-14)
    expected = 2 * H / (STEEL.Gc / STEEL.l0 + 2 * H)
    err = float(np.abs(phi - expected).max())
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-8 and elapsed < 1.0
    assert report(4, ok, f"max |phi - 2H/(Gc/l0 + 2H)| = {err:.1e} (<= 1e-8), {elapsed:.2f} s")


def test_criterion_05_initial_history(report):
    t0 = time.perf_counter()
    crack = CrackSegment.from_endpoints((0.25, 0.5), (0.75, 0.5))
    on = float(initial_history([0.5, 0.5], [crack], TABLE))
    l0 = TABLE.l0
    beyond = initial_history([[0.5, 0.5 + 0.5 * l0 + 1e-9], [0.5, 0.9]], [crack], TABLE)
    near = float(initial_history([0.5, 0.5 + 0.5 * l0 - 1e-12], [crack], TABLE))
    elapsed = time.perf_counter() - t0
    ok = on == pytest.approx(49950.0, rel=1e-12) and np.all(beyond == 0) and near < 1e-5 and elapsed < 1.0
    assert report(5, ok, f"H0 on crack {on:.6g} MPa (49950), zero beyond l0/2, {near:.1e} just inside cutoff, "
                         f"{elapsed:.2f} s")


def test_criterion_11_metrics(report):
    t0 = time.perf_counter()
    unit = (metrics.dice([1, 1], [1, 1]) == 1.0 and metrics.dice([1, 0], [0, 1]) == 0.0
            and metrics.dice([1, 1, 0], [1, 0, 0]) == 2 / 3)
    rng = np.random.default_rng(11)
    masks = list(rng.uniform(size=(3, 8, 8)) > 0.5)
    f = rng.uniform(size=(8, 8))
    voting = (np.array_equal(metrics.hard_vote([masks[0]]), masks[0])
              and np.array_equal(metrics.hard_vote(masks), metrics.hard_vote(masks[::-1]))
              and np.array_equal(metrics.hard_vote([masks[0]] * 4), masks[0])
              and np.allclose(metrics.soft_vote([f, f, f]), f)
              and np.allclose(metrics.soft_vote([f, 1 - f]), 0.5))
    preds = [rng.uniform(size=(5, 5)) for _ in range(2)]
    gts = [np.clip(p + rng.normal(scale=0.2, size=p.shape), 0, 1) for p in preds]
    pair, score = metrics.threshold_search(preds, gts)
    grid = [round(0.1 + 0.05 * k, 10) for k in range(11)]
    best = None
    for tg, tp in itertools.product(grid, grid):
        s = np.mean([metrics.dice(np.asarray(p) > tp, np.asarray(g) > tg) for p, g in zip(preds, gts)])
        if best is None or s > best[0]:
            best = (s, tg, tp)
    search = score == best[0] and (pair.thr_gt, pair.thr_pred) == pytest.approx(best[1:])
    elapsed = time.perf_counter() - t0
    ok = unit and voting and search and elapsed < 1.0
    assert report(11, ok, f"Dice unit cases {unit}, voting identities {voting}, search = brute force {search} "
                          f"(thr_gt {pair.thr_gt:g}, thr_pred {pair.thr_pred:g}), {elapsed:.2f} s")


def test_criterion_12_io(report, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    recs = [StepRecord(step=k + 1, phi=rng.uniform(size=30), ux=rng.normal(size=30), uy=rng.normal(size=30),
                       displacement=1e-3 * (k + 1), force=float(rng.normal()), iterations=3, converged=True,
                       max_dphi=1e-5) for k in range(4)]
    path = sio.write_sample(tmp_path / "s.h5", recs, {"seed": 1}, (5, 6))
    s = sio.read_sample(path)
    roundtrip = all(np.array_equal(s.fields["phase"][k].ravel(), r.phi) and np.array_equal(s.fields["ux"][k].ravel(), r.ux)
                    and np.array_equal(s.fields["uy"][k].ravel(), r.uy) for k, r in enumerate(recs))
    roundtrip &= np.array_equal(s.force, [r.force for r in recs])
    yy, xx = np.mgrid[0:257, 0:257] / 256.0
    down = sio.downsample(0.3 + 1.7 * xx - 0.9 * yy)
    c = (np.arange(128) + 0.5) / 128
    lin_err = float(np.abs(down - (0.3 + 1.7 * c[None, :] - 0.9 * c[:, None])).max())
    d, f = sio.read_curve(sio.export_curve(recs, tmp_path / "c.csv"))
    csv_exact = np.array_equal(d, [r.displacement for r in recs]) and np.array_equal(f, [r.force for r in recs])
    elapsed = time.perf_counter() - t0
    ok = roundtrip and lin_err <= 1e-12 and csv_exact and elapsed < 1.0
    assert report(12, ok, f"sample roundtrip bitwise {roundtrip}, downsample linear error {lin_err:.1e} (<= 1e-12), "
                          f"CSV exact {csv_exact}, {elapsed:.2f} s")


# ---------------------------------------------------------------------------
# Desk-scale simulations
# ---------------------------------------------------------------------------

def spanning_component(mask, seed_rc=None):
    """Whether a 4-connected component of ``mask`` touches the left and right
    columns (and contains ``seed_rc`` when given)."""
    lab, _ = ndimage.label(mask)
    left = set(lab[:, 0][lab[:, 0] > 0])
    right = set(lab[:, -1][lab[:, -1] > 0])
    both = left & right
    if seed_rc is not None:
        both &= {lab[seed_rc]}
    return bool(both)


@pytest.mark.slow
def test_criterion_06_tension_benchmark(report):
    t0 = time.perf_counter()
    sc = runs.bench_scenario("tension", "spect", 128)
    res = runs.run_scenario(sc)
    elapsed = time.perf_counter() - t0
    phi = res.records[-1].phi.reshape(sc.grid.node_shape)
    tip = (64, 64)  # notch tip at (0.5, 0.5)
    spans = spanning_component(phi > 0.9, tip)
    f = res.force
    k = int(np.argmax(f))
    drop = k < len(f) - 1 and f[-1] < 0.1 * f[k]
    ok = spans and drop and elapsed <= 15 * 60
    assert report(6, ok, f"crack spans width from notch tip {spans}; peak {f[k]:.4g} N at step {k + 1}, "
                         f"final {f[-1]:.4g} N ({f[-1] / f[k]:.1%} of peak, < 10%); l0 {sc.material.l0:g}; "
                         f"{minutes(elapsed)} (<= 15 min)")


@pytest.mark.slow
def test_criterion_07_shear_benchmark(report):
    t0 = time.perf_counter()
    forces = {}
    for kind in ("spect", "starconvex", "voldev"):
        res = runs.run_scenario(runs.bench_scenario("shear", kind, 128))
        forces[kind] = res.force
    elapsed = time.perf_counter() - t0
    dev_star = runs.max_relative_deviation(forces["spect"], forces["starconvex"])
    dev_vd = runs.max_relative_deviation(forces["spect"], forces["voldev"])
    ok = dev_star < dev_vd and elapsed <= 30 * 60
    assert report(7, ok, f"max rel. deviation spectral vs star-convex {dev_star:.3f} < spectral vs vol-dev "
                         f"{dev_vd:.3f}; {minutes(elapsed)} for three runs (<= 30 min)")


@pytest.mark.slow
def test_criterion_08_mesh_refinement(report):
    # With l0 fixed at 2/64 the coarse run peaks near 9e-4 mm; 1.5e-3 mm covers peak and separation.
    t0 = time.perf_counter()
    scenarios = runs.mesh_study_scenarios("tension", "spect", [64, 128, 256], seed=42, total_displacement=1.5e-3)
    results = [runs.run_scenario(sc) for sc in scenarios]
    summary = runs.mesh_study_summary(results)
    elapsed = time.perf_counter() - t0
    d = [e["l2_distance"] for e in summary["distances"]]
    ok = d[1] < d[0] and elapsed <= 45 * 60
    assert report(8, ok, f"L2 distances 64->128 {d[0]:.4g}, 128->256 {d[1]:.4g} (strictly decreasing); "
                         f"l0 fixed at {summary['l0']:g}; {minutes(elapsed)} (<= 45 min)")


@pytest.mark.slow
def test_criterion_09_irreversibility_and_bounds(report):
    t0 = time.perf_counter()
    sc = runs.dataset_scenario("tension", "spect", 256, seed=42)
    sim = Simulation(sc)
    state0 = sim.initial_state()
    track = dict(prev=state0.H.copy(), monotone=True, lo=float(state0.phi.min()), hi=float(state0.phi.max()))

    def on_step(state, rec):
        track["monotone"] &= bool(np.all(state.H >= track["prev"]))
        track["prev"] = state.H.copy()
        track["lo"] = min(track["lo"], float(rec.phi.min()))
        track["hi"] = max(track["hi"], float(rec.phi.max()))

    records = sim.run(on_step=on_step, state=state0)
    elapsed = time.perf_counter() - t0
    bounded = track["lo"] >= -1e-3 and track["hi"] <= 1 + 1e-3
    ok = len(records) == 100 and track["monotone"] and bounded and elapsed <= 20 * 60
    assert report(9, ok, f"100 steps at 256x256: H non-decreasing {track['monotone']}, phi in "
                         f"[{track['lo']:.2e}, {track['hi']:.6f}] within [-1e-3, 1+1e-3]; {minutes(elapsed)} (<= 20 min)")


@pytest.mark.slow
def test_criterion_10_determinism(report, tmp_path):
    t0 = time.perf_counter()
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        status = cli_main(["-q", "generate", "42", "tension", "spect", "--resolution", "128", "--out", str(out)])
        assert status == 0
        blobs.append((out / "tension-spect" / "42.h5").read_bytes())
    elapsed = time.perf_counter() - t0
    s = sio.read_sample(tmp_path / "a" / "tension-spect" / "42.h5")
    cracks = np.asarray(s.attrs["cracks"])
    n = int(s.attrs["n_cracks"])
    identical = blobs[0] == blobs[1]
    ok = (identical and 10 <= n <= 20 and len(cracks) == n and np.all(cracks[:, 3] == 0.25)
          and s.fields["phase"].shape[0] == 100 and elapsed <= 20 * 60)
    assert report(10, ok, f"seed 42 generated twice at 128x128: bitwise identical {identical} "
                          f"({len(blobs[0])} bytes); n_cracks {n} in [10, 20]; all lengths 0.25 mm "
                          f"{bool(np.all(cracks[:, 3] == 0.25))}; {minutes(elapsed)} (<= 20 min)")
