import warnings

import numpy as np
import pytest

from torusns.derham_complex import codifferential, differential
from torusns.hodge_theory import harmonic_projection, leray_projection
from torusns.ns_solver import (
    NEWTON,
    NotCoClosedError,
    SolverConfig,
    assemble_rhs,
    dense_linearized_matrix,
    fixed_point_residual,
    mean_free,
    random_problem,
    recover_pressure,
    solve,
    solve_fixed_point,
    solve_linearized,
    spectral_decay_slope,
    stability_experiment,
    taylor_green_trajectory,
)
from torusns.spectral_field import ConfigurationError, FormField, Grid, SpaceTimeField, random_field


def small_config(**overrides):
    base = dict(mu=1.0, T=0.1, M=8, res=16, n=2, tol_fixed_point=1e-12)
    base.update(overrides)
    return SolverConfig(**base)


@pytest.fixture(scope="module")
def base_solution():
    cfg = small_config()
    f, u0 = random_problem(cfg.grid, cfg.times, 1.0, seed=2)
    v, report = solve(f, u0, cfg)
    return cfg, f, u0, v, report


class TestSolverConfig:
    @pytest.mark.parametrize("bad", [dict(mu=0.0), dict(T=-1.0), dict(M=0), dict(tol_fixed_point=0.0),
                                     dict(max_iter=0), dict(method="bisection"), dict(relaxation=1.5),
                                     dict(linear_method="lu")])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ConfigurationError):
            small_config(**bad)

    def test_time_grid(self):
        cfg = small_config(T=0.2, M=4)
        np.testing.assert_allclose(cfg.times, [0, 0.05, 0.1, 0.15, 0.2])

    def test_to_dict_roundtrip(self):
        cfg = small_config(res=(16, 8))
        again = SolverConfig(**{**cfg.to_dict(), "res": tuple(cfg.to_dict()["res"])})
        assert again == cfg


class TestAssembleRhs:
    def test_zero_data_gives_zero(self):
        cfg = small_config()
        F = assemble_rhs(None, FormField.zeros(cfg.grid, 1), cfg.mu, cfg.times)
        assert F.sup_norm() == 0.0

    def test_gradient_initial_datum_rejected(self, rng):
        grid = Grid(2, 16)
        grad = differential(random_field(grid, 0, rng, kmax=3))
        with pytest.raises(NotCoClosedError):
            assemble_rhs(None, grad, 1.0, np.linspace(0, 0.1, 5))

    def test_auto_project_warns_and_projects(self, rng):
        grid = Grid(2, 16)
        u0 = random_field(grid, 1, rng, kmax=3)
        times = np.linspace(0, 0.1, 5)
        with pytest.warns(UserWarning):
            F = assemble_rhs(None, u0, 1.0, times, auto_project=True)
        np.testing.assert_allclose(F.frame(0).physical().data, leray_projection(u0).physical().data,
                                   atol=1e-13)

    def test_missing_time_grid(self):
        grid = Grid(2, 8)
        with pytest.raises(ConfigurationError):
            assemble_rhs(None, FormField.zeros(grid, 1), 1.0)

    def test_forcing_is_projected(self, rng):
        grid = Grid(2, 16)
        times = np.linspace(0, 0.1, 5)
        grad = SpaceTimeField.constant_in_time(differential(random_field(grid, 0, rng, kmax=3)), times)
        F = assemble_rhs(grad, FormField.zeros(grid, 1), 1.0)
        assert F.sup_norm() < 1e-14


class TestFixedPoint:
    def test_zero_data_zero_solution(self):
        cfg = small_config()
        v, report = solve(None, FormField.zeros(cfg.grid, 1), cfg)
        assert report.converged
        assert v.sup_norm() == 0.0
        assert report.pressure.sup_norm() == 0.0

    def test_constant_velocity_is_stationary(self):
        cfg = small_config()
        u0 = FormField.from_components(cfg.grid, 1, {(0,): np.full(cfg.grid.shape, 0.7),
                                                     (1,): np.full(cfg.grid.shape, -0.2)})
        v, report = solve(None, u0, cfg)
        assert report.diagnostics.get("fast_path")
        for frame in v.frames():
            np.testing.assert_allclose(frame.physical().data, u0.physical().data, atol=1e-14)

    def test_solution_satisfies_fixed_point(self, base_solution):
        cfg, f, u0, v, report = base_solution
        assert report.converged
        F = assemble_rhs(f, u0, cfg.mu, cfg.times)
        assert fixed_point_residual(v, F, cfg.mu).sup_norm() <= 1e-11 * max(F.sup_norm(), 1)

    def test_residual_history_decreases(self, base_solution):
        history = base_solution[4].residual_history
        assert history[-1] < 1e-6 * history[0]

    def test_velocity_is_coclosed(self, base_solution):
        v = base_solution[3]
        assert codifferential(v.spectral()).sup_norm() <= 1e-12 * v.sup_norm()

    def test_picard_matches_newton(self, base_solution):
        cfg, f, u0, v, _ = base_solution
        vn, rn = solve(f, u0, small_config(method=NEWTON))
        assert rn.converged and rn.iterations <= 4
        assert (v - vn).sup_norm() <= 1e-8

    def test_multistart_agrees(self, base_solution):
        cfg, f, u0, v, _ = base_solution
        F = assemble_rhs(f, u0, cfg.mu, cfg.times)
        for start in (F * 0.0, F * -2.0):
            w, rep = solve_fixed_point(F, cfg, initial=start)
            assert rep.converged
            assert (w - v).sup_norm() <= 1e-8

    def test_max_iter_reports_nonconvergence(self, base_solution):
        cfg, f, u0, _, _ = base_solution
        _, rep = solve(f, u0, small_config(max_iter=1))
        assert not rep.converged
        assert rep.message

    def test_summary_is_serialisable(self, base_solution):
        import json

        json.dumps(base_solution[4].summary())


class TestPressureAndResiduals:
    def test_pressure_is_mean_free(self, base_solution):
        p = base_solution[4].pressure
        assert harmonic_projection(p).sup_norm() <= 1e-14 * max(p.sup_norm(), 1)

    def test_pressure_balances_exact_part(self, base_solution):
        cfg, f, u0, v, report = base_solution
        from torusns.nonlinearity import advect

        rhs = f.physical() - advect(v.physical())
        exact = rhs - leray_projection(rhs)
        gap = differential(report.pressure.spectral()) - exact.spectral()
        assert gap.sup_norm() <= 1e-11 * rhs.sup_norm()

    def test_gradient_forcing_only_moves_pressure(self, base_solution, rng):
        cfg, f, u0, v, report = base_solution
        g = random_field(cfg.grid, 0, rng, kmax=3)
        shifted = f + SpaceTimeField.constant_in_time(differential(g), cfg.times)
        v2, report2 = solve(shifted, u0, cfg)
        assert (v2 - v).sup_norm() <= 1e-11
        dp = mean_free(report2.pressure - report.pressure)
        frame = SpaceTimeField.constant_in_time(g - harmonic_projection(g), cfg.times)
        assert (dp - frame).sup_norm() <= 1e-11

    def test_initial_mismatch_vanishes(self, base_solution):
        assert base_solution[4].pde_residual["initial"][0] <= 1e-12

    def test_late_time_residual_drops_with_refinement(self):
        late = []
        for M in (8, 16, 32):
            cfg = small_config(M=M)
            f, u0 = random_problem(cfg.grid, cfg.times, 1.0, seed=2)
            _, rep = solve(f, u0, cfg)
            late.append(rep.pde_residual["equation"][-1])
        assert late[2] < late[1] < late[0]

    def test_recover_pressure_degree(self, base_solution):
        v = base_solution[3]
        assert recover_pressure(v, None).degree == 0


class TestTaylorGreen:
    def test_small_vortex(self):
        cfg = SolverConfig(mu=0.1, T=0.1, M=20, res=(16, 16, 4), n=3, tol_fixed_point=1e-12)
        exact_v, exact_p = taylor_green_trajectory(cfg.grid, cfg.times, cfg.mu)
        v, report = solve(None, exact_v.frame(0), cfg)
        assert report.converged
        assert (v - exact_v).sup_norm() <= 1e-10
        assert (mean_free(report.pressure) - mean_free(exact_p)).sup_norm() <= 1e-10

    def test_energy_budget(self):
        cfg = SolverConfig(mu=0.1, T=0.1, M=40, res=(16, 16, 4), n=3, tol_fixed_point=1e-12)
        exact_v, _ = taylor_green_trajectory(cfg.grid, cfg.times, cfg.mu)
        _, report = solve(None, exact_v.frame(0), cfg)
        ledger = report.energy
        assert np.abs(ledger.transport).max() <= 1e-12
        assert ledger.max_imbalance <= 1e-4 * np.abs(ledger.dissipation).max()


class TestLinearized:
    def test_identity_at_zero(self, rng):
        cfg = small_config(M=4, res=8)
        F = SpaceTimeField.constant_in_time(leray_projection(random_field(cfg.grid, 1, rng, kmax=2)),
                                            cfg.times)
        zero = SpaceTimeField.zeros(cfg.grid, 1, cfg.times)
        v, info = solve_linearized(zero, F, cfg, return_info=True)
        np.testing.assert_allclose(v.data, F.physical().data, atol=1e-14)

    def test_zero_rhs(self, base_solution):
        cfg, _, _, v, _ = base_solution
        out = solve_linearized(v, v * 0.0, cfg)
        assert out.sup_norm() == 0.0

    def test_dense_matches_iterative(self):
        cfg = small_config(M=4, res=8, tol_linear=1e-13)
        f, u0 = random_problem(cfg.grid, cfg.times, 1.0, seed=3)
        v, _ = solve(f, u0, cfg)
        A = dense_linearized_matrix(v, cfg)
        b = assemble_rhs(f, u0, cfg.mu, cfg.times).physical()
        direct = np.linalg.solve(A, b.data.ravel())
        iterative = solve_linearized(v, b, cfg).data.ravel()
        assert np.abs(direct - iterative).max() <= 1e-8 * np.abs(direct).max()
        assert np.linalg.svd(A, compute_uv=False).min() > 0.1

    def test_neumann_matches_gmres(self, base_solution):
        cfg, f, u0, v, _ = base_solution
        b = assemble_rhs(f, u0, cfg.mu, cfg.times)
        a = solve_linearized(v, b, cfg, method="gmres")
        c = solve_linearized(v, b, cfg, method="neumann")
        assert (a - c).sup_norm() <= 1e-9 * b.sup_norm()


class TestStability:
    def test_ratios_stabilise(self):
        cfg = SolverConfig(mu=0.5, T=0.1, M=8, res=16, n=2)
        f, u0 = random_problem(cfg.grid, cfg.times, 0.5, seed=7)
        result = stability_experiment(f, u0, [1e-2, 1e-3, 1e-4], cfg, seed=7)
        assert len(result.rows) == 3
        assert all(row.converged for row in result.rows)
        assert result.spread() < 0.2
        assert abs(result.rows[-1].ratio - result.linear_ratio) <= 0.1 * result.linear_ratio

    def test_zero_delta_skipped(self):
        cfg = SolverConfig(mu=0.5, T=0.1, M=4, res=8, n=2)
        f, u0 = random_problem(cfg.grid, cfg.times, 0.5, seed=1)
        result = stability_experiment(f, u0, [0.0, 1e-3], cfg)
        assert [row.delta for row in result.rows] == [1e-3]


class TestHelpers:
    def test_random_problem_is_coclosed(self):
        grid = Grid(2, 16)
        f, u0 = random_problem(grid, np.linspace(0, 1, 3), 2.0, seed=4)
        assert codifferential(u0.spectral()).norm() <= 1e-13
        assert codifferential(f.spectral()).sup_norm() <= 1e-13

    def test_random_problem_seeded(self):
        grid = Grid(2, 8)
        a = random_problem(grid, [0, 1], 1.0, seed=9)[1]
        b = random_problem(grid, [0, 1], 1.0, seed=9)[1]
        np.testing.assert_array_equal(a.data, b.data)

    def test_decay_slope_of_power_law(self):
        grid = Grid(1, 64)
        x = grid.mesh()[0]
        values = sum(np.cos(2 * np.pi * k * x) * k**-2.0 for k in range(1, 22))
        u = FormField.from_components(grid, 0, {(): values})
        assert abs(spectral_decay_slope(u) + 2.0) < 1e-10

    def test_no_warning_for_coclosed_datum(self, base_solution):
        cfg, _, u0, _, _ = base_solution
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assemble_rhs(None, u0, cfg.mu, cfg.times)
