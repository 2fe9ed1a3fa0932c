import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from phasefrac.assembly import SparseSystem, assemble_phase
from phasefrac.cases import build_scenario, sample_cracks
from phasefrac.history import initial_history
from phasefrac.solver import (LinearSolverError, LoadSchedule, Simulation, SimulationError, SolverConfig,
                              lu_preconditioner, pcg,
                              rigid_body_modes, run_simulation, solve_spd)
from phasefrac.mesh import StructuredGrid

pytestmark = pytest.mark.filterwarnings("ignore:l0 raised")


def laplacian_2d(n):
    T = sp.diags([-1, 2, -1], [-1, 0, 1], shape=(n, n))
    return (sp.kron(sp.eye(n), T) + sp.kron(T, sp.eye(n))).tocsr()


def small_tension(n=16, schedule=None, **kw):
    return build_scenario("tension-bench", "spect", n, schedule=schedule, **kw)


class TestPCG:
    A = laplacian_2d(12)
    b = np.random.default_rng(0).normal(size=144)

    @pytest.mark.parametrize("kind", ["none", "jacobi", "amg", "lu"])
    def test_matches_direct_solve(self, kind):
        x = solve_spd(SparseSystem(self.A, self.b), rtol=1e-12, preconditioner=kind)
        ref = spla.spsolve(self.A.tocsc(), self.b)
        np.testing.assert_allclose(x, ref, rtol=1e-9, atol=1e-10)
        assert np.linalg.norm(self.b - self.A @ x) <= 1e-12 * np.linalg.norm(self.b)

    def test_zero_rhs(self):
        x, its = pcg(self.A, np.zeros(144))
        assert its == 0 and np.all(x == 0)

    def test_warm_start_at_solution(self):
        ref = spla.spsolve(self.A.tocsc(), self.b)
        _, its = pcg(self.A, self.b, x0=ref, rtol=1e-8)
        assert its == 0

    def test_indefinite_matrix_raises(self):
        A = sp.diags([1.0, -1.0, 2.0]).tocsr()
        with pytest.raises(LinearSolverError):
            pcg(A, np.array([1.0, 1.0, 1.0]))

    def test_iteration_cap(self):
        with pytest.raises(LinearSolverError) as info:
            pcg(self.A, self.b, rtol=1e-14, maxiter=2)
        assert info.value.iterations == 2
        assert info.value.residual > 1e-14

    def test_unknown_preconditioner(self):
        with pytest.raises(ValueError):
            solve_spd(SparseSystem(self.A, self.b), preconditioner="ilu")

    @pytest.mark.parametrize("single", [True, False])
    @pytest.mark.parametrize("ordered", [True, False])
    def test_lu_preconditioner(self, single, ordered):
        order = StructuredGrid(11, 11).nested_dissection() if ordered else None
        M = lu_preconditioner(self.A, order, single)
        z = M(self.b)
        assert z.dtype == np.float64
        ref = spla.spsolve(self.A.tocsc(), self.b)
        tol = 1e-5 if single else 1e-12
        assert np.linalg.norm(z - ref) <= tol * np.linalg.norm(ref)
        x, its = pcg(self.A, self.b, M, rtol=1e-12)
        assert its <= 3
        np.testing.assert_allclose(x, ref, rtol=1e-9)

    def test_single_precision_falls_back_to_double(self, monkeypatch, caplog):
        import phasefrac.solver as solver_mod

        calls = []
        real = solver_mod.make_preconditioner

        def flaky(kind, A, near, order, single):
            calls.append(single)
            if single:
                raise LinearSolverError("forced")
            return real(kind, A, near, order, single)

        monkeypatch.setattr(solver_mod, "make_preconditioner", flaky)
        rp = solver_mod._ReusedPreconditioner("lu")
        x = rp.solve(self.A, self.b, None, 1e-12, 100)
        assert calls == [True, False] and not rp.single
        assert np.linalg.norm(self.b - self.A @ x) <= 1e-12 * np.linalg.norm(self.b)
        assert "double precision" in caplog.text

    def test_amg_is_deterministic(self):
        a = solve_spd(SparseSystem(self.A, self.b), preconditioner="amg")
        b = solve_spd(SparseSystem(self.A, self.b), preconditioner="amg")
        assert np.array_equal(a, b)


class TestConfig:
    def test_defaults(self):
        c = SolverConfig()
        assert c.stag_tol == 1e-4 and c.max_stag_iters == 200

    @pytest.mark.parametrize("kw", [dict(stag_tol=0.0), dict(max_stag_iters=0), dict(preconditioner="ilu"),
                                    dict(phase_preconditioner="cholesky")])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_round_trip(self):
        c = SolverConfig(stag_tol=1e-3, preconditioner="jacobi")
        assert SolverConfig(**c.to_dict()) == c


class TestLoadSchedule:
    def test_uniform(self):
        s = LoadSchedule.uniform(1e-2, 4)
        assert s.values == pytest.approx((2.5e-3, 5e-3, 7.5e-3, 1e-2))
        assert len(s) == 4

    def test_increments(self):
        s = LoadSchedule.increments([(1e-3, 2), (1e-4, 3)])
        assert s.values == pytest.approx((1e-3, 2e-3, 2.1e-3, 2.2e-3, 2.3e-3))

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            LoadSchedule((1.0, 0.5))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            LoadSchedule(())


class TestPhaseSolve:
    def test_initial_crack_phase_matches_dense_solve(self):
        sc = small_tension(8, schedule=LoadSchedule((1e-4,)))
        sim = Simulation(sc, SolverConfig(lin_rtol=1e-13))
        H0 = initial_history(sc.grid.quadrature_coords(), sc.cracks, sc.material)
        phi = sim.initial_state().phi
        sys = assemble_phase(sc.grid, sc.material, H0, lumped=True)
        ref = np.linalg.solve(sys.matrix.toarray(), sys.rhs)
        np.testing.assert_allclose(phi, ref, rtol=1e-9, atol=1e-12)
        assert phi.max() > 0.5

    def test_rigid_body_modes_shape(self):
        B = rigid_body_modes(StructuredGrid(3, 2))
        assert B.shape == (24, 3)
        np.testing.assert_allclose(np.linalg.matrix_rank(B), 3)


class TestStaggered:
    def test_zero_load(self):
        sc = small_tension(schedule=LoadSchedule((0.0,)))
        sim = Simulation(sc)
        state0 = sim.initial_state()
        state, rec = sim.staggered_step(state0, 0.0)
        assert np.all(state.u == 0)
        assert rec.force == 0.0
        assert rec.converged and rec.iterations == 1
        np.testing.assert_allclose(state.phi, state0.phi, atol=1e-12)

    def test_converged_state_is_a_fixed_point(self):
        sc = small_tension(schedule=LoadSchedule((2e-3,)))
        sim = Simulation(sc, SolverConfig(stag_tol=1e-9))
        state, rec = sim.staggered_step(sim.initial_state(), 2e-3)
        assert rec.converged
        again, rec2 = sim.staggered_step(state, 2e-3)
        assert rec2.iterations == 1
        assert rec2.max_dphi < 1e-9
        assert rec2.force == pytest.approx(rec.force, rel=1e-8)

    def test_linear_regime(self):
        sc = small_tension(schedule=LoadSchedule.uniform(1e-4, 5))
        recs = run_simulation(sc)
        stiffness = np.array([r.force / r.displacement for r in recs])
        assert np.all(stiffness > 0)
        np.testing.assert_allclose(stiffness, stiffness[0], rtol=1e-3)

    def test_history_monotone_and_phase_bounded(self):
        sc = build_scenario("tension", "voldev", 16, sample_cracks(3), n_steps=20,
                            schedule=LoadSchedule.uniform(2e-2, 20))
        seen = []
        run_simulation(sc, on_step=lambda state, rec: seen.append((state.H.copy(), rec.phi)))
        for (h0, _), (h1, _) in zip(seen[:-1], seen[1:]):
            assert np.all(h1 >= h0)
        for _, phi in seen:
            assert phi.min() >= -1e-3 and phi.max() <= 1 + 1e-3

    def test_record_count_and_save_every(self):
        sc = build_scenario("shear", "spect", 8, sample_cracks(1), n_steps=100)
        recs = run_simulation(sc, SolverConfig(stag_tol=1e-3))
        assert len(recs) == 100
        assert [r.step for r in recs] == list(range(1, 101))
        sub = run_simulation(sc, SolverConfig(stag_tol=1e-3), save_every=25)
        assert [r.step for r in sub] == [25, 50, 75, 100]
        assert np.array_equal(sub[-1].phi, recs[-1].phi)

    def test_runs_are_reproducible(self):
        sc = small_tension(schedule=LoadSchedule.uniform(4e-3, 4))
        a = run_simulation(sc)
        b = run_simulation(sc)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.phi, rb.phi) and ra.force == rb.force

    def test_non_convergence_is_flagged(self, caplog):
        sc = small_tension(schedule=LoadSchedule((8e-3,)))
        recs = run_simulation(sc, SolverConfig(max_stag_iters=1, stag_tol=1e-12))
        assert not recs[0].converged
        assert recs[0].iterations == 1
        assert "staggered loop stopped" in caplog.text

    def test_linear_failure_reports_step(self):
        sc = small_tension(schedule=LoadSchedule((1e-4, 2e-4)))
        with pytest.raises(SimulationError) as info:
            run_simulation(sc, SolverConfig(preconditioner="jacobi", lin_maxiter=1, lin_rtol=1e-14))
        assert info.value.step == 0
        assert isinstance(info.value.cause, LinearSolverError)

    def test_bad_save_every(self):
        with pytest.raises(ValueError):
            Simulation(small_tension(schedule=LoadSchedule((1e-4,)))).run(save_every=0)
