import numpy as np
import pytest

from torusns.hodge_theory import harmonic_projection, leray_projection
from torusns.parabolic_potentials import (
    ETD,
    TRAPEZOID,
    ParabolicConfig,
    apply_parabolic_operator,
    cauchy_solve,
    duhamel,
    fitted_weights,
    green_reconstruct,
    heat_semigroup,
    heat_trajectory,
    phi_functions,
)
from torusns.spectral_field import ConfigurationError, FormField, Grid, SpaceTimeField, random_field


def refined_sup(u: FormField, factor: int = 8) -> float:
    """Sup of the trigonometric interpolant on a grid refined by zero padding."""
    g = u.grid
    spec = u.spectral().data[0]
    fine = [r * factor for r in g.shape]
    padded = np.zeros(fine, complex)
    k = np.meshgrid(*[np.fft.fftfreq(r, 1 / r).astype(int) for r in g.shape], indexing="ij")
    padded[tuple(kj % f for kj, f in zip(k, fine))] = spec
    return float(np.abs(np.fft.ifftn(padded, norm="forward").real).max())


def manufactured(grid, mu, M, method=ETD):
    times = np.linspace(0, 1.0, M + 1)
    s = np.sin(2 * np.pi * grid.mesh()[0])
    base = FormField.from_components(grid, 0, {(): s})
    exact = SpaceTimeField.from_frames([base * np.exp(-t) for t in times], times)
    forcing = exact * (4 * np.pi**2 * mu - 1.0)
    got = cauchy_solve(forcing, base, mu, method=method)
    return (got - exact).sup_norm() / exact.sup_norm()


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            ParabolicConfig(0.0, 1.0, 4)
        with pytest.raises(ConfigurationError):
            ParabolicConfig(1.0, 1.0, 0)
        with pytest.raises(ConfigurationError):
            ParabolicConfig(1.0, 1.0, 4, "simpson")
        assert np.allclose(ParabolicConfig(1.0, 2.0, 4).times, [0, 0.5, 1, 1.5, 2])


class TestPhiFunctions:
    def test_series_matches_closed_form(self):
        z = np.array([-0.49, -0.2, 0.0, 1e-8, 0.3, -0.51, -5.0])
        p1, p2 = phi_functions(z)
        safe = np.where(z == 0, 1.0, z)
        with np.errstate(all="ignore"):
            ref1 = np.where(z == 0, 1.0, np.expm1(safe) / safe)
            ref2 = np.where(z == 0, 0.5, (np.expm1(safe) - safe) / safe**2)
        assert np.allclose(p1, ref1, rtol=1e-12)
        assert np.allclose(p2[np.abs(z) > 1e-3], ref2[np.abs(z) > 1e-3], rtol=1e-9)
        assert np.isclose(p2[2], 0.5)


class TestSemigroup:
    def test_identity_at_zero(self, rng):
        u = random_field(Grid(2, 16), 1, rng)
        assert (heat_semigroup(u, 0.0, 1.0) - u).max_abs() < 1e-14

    def test_constant_preserved(self):
        c = FormField.from_components(Grid(2, 8), 0, {(): 2.0})
        assert (heat_semigroup(c, 3.0, 1.0) - c).max_abs() < 1e-14

    def test_sine_decay_factor(self):
        g = Grid(2, 16)
        s = np.sin(2 * np.pi * g.mesh()[0])
        out = heat_semigroup(FormField.from_components(g, 0, {(): s}), 1.0, 0.01)
        factor = np.exp(-4 * np.pi**2 * 0.01)
        assert np.isclose(factor, 0.6738, atol=1e-4)
        assert np.allclose(out.component(()), factor * s, atol=1e-14)

    def test_negative_time(self, rng):
        with pytest.raises(ValueError):
            heat_semigroup(random_field(Grid(2, 8), 0, rng), -0.1, 1.0)

    def test_semigroup_property(self, rng):
        u = random_field(Grid(3, 16), 2, rng)
        a = heat_semigroup(heat_semigroup(u, 0.013, 0.7), 0.021, 0.7)
        b = heat_semigroup(u, 0.034, 0.7)
        assert (a - b).norm() <= 1e-12 * u.norm()

    def test_commutes_with_projections(self, rng):
        u = random_field(Grid(3, 16), 1, rng)
        for proj in (leray_projection, harmonic_projection):
            a = proj(heat_semigroup(u, 0.01, 1.0))
            b = heat_semigroup(proj(u), 0.01, 1.0)
            assert (a - b).norm() <= 1e-13 * u.norm()

    def test_max_norm_decay(self, rng):
        g = Grid(2, 16)
        for _ in range(10):
            u = random_field(g, 0, rng, kmax=5)
            for t in (1e-4, 1e-3, 1e-2):
                assert heat_semigroup(u, t, 1.0).max_abs() <= refined_sup(u) + 1e-14

    def test_trajectory_matches_semigroup(self, rng):
        u = random_field(Grid(2, 8), 1, rng)
        traj = heat_trajectory(u, [0.0, 0.1, 0.3], 0.5)
        assert (traj.frame(2) - heat_semigroup(u, 0.3, 0.5)).max_abs() < 1e-14


class TestDuhamel:
    def test_zero_forcing(self):
        g = Grid(2, 8)
        f = SpaceTimeField.zeros(g, 1, np.linspace(0, 1, 5))
        assert duhamel(f, 1.0).max_abs() == 0

    def test_constant_forcing_closed_form(self, rng):
        g = Grid(2, 16)
        mu = 0.3
        times = np.linspace(0, 0.5, 7)
        f0 = random_field(g, 0, rng) + FormField.from_components(g, 0, {(): 0.4})
        out = duhamel(SpaceTimeField.constant_in_time(f0, times), mu).spectral()
        rate = mu * 4 * np.pi**2 * g.k_squared
        fhat = f0.spectral().data
        for m, t in enumerate(times):
            with np.errstate(divide="ignore", invalid="ignore"):
                factor = np.where(rate > 0, -np.expm1(-rate * t) / rate, t)
            assert np.allclose(out.data[m], factor * fhat, atol=1e-14)

    def test_vanishes_at_start(self, rng):
        g = Grid(2, 8)
        u = random_field(g, 1, rng)
        f = SpaceTimeField.from_frames([u * t for t in np.linspace(0, 1, 4)], np.linspace(0, 1, 4))
        assert duhamel(f, 1.0).frame(0).max_abs() == 0

    def test_time_grid_mismatch(self, rng):
        g = Grid(2, 8)
        f = SpaceTimeField.zeros(g, 0, np.linspace(0, 1, 5))
        with pytest.raises(ConfigurationError):
            duhamel(f, 1.0, times=np.linspace(0, 1, 6))

    def test_parabolic_operator_inverts_duhamel(self, rng):
        g = Grid(2, 16)
        times = np.linspace(0, 0.2, 81)
        u = random_field(g, 1, rng, kmax=3)
        f = SpaceTimeField.from_frames([u * np.cos(5 * t) for t in times], times)
        back = apply_parabolic_operator(duhamel(f, 0.5), 0.5)
        err = (back - f).node_norms()[2:-2].max() / f.sup_norm()
        assert err < 1e-4

    def test_trapezoid_agrees_with_etd(self, rng):
        g = Grid(2, 8)
        times = np.linspace(0, 0.1, 201)
        u = random_field(g, 0, rng, kmax=2)
        f = SpaceTimeField.from_frames([u * np.sin(3 * t) for t in times], times)
        a, b = duhamel(f, 0.2, ETD), duhamel(f, 0.2, TRAPEZOID)
        assert (a - b).sup_norm() <= 1e-4 * a.sup_norm()


class TestCauchy:
    def test_homogeneous_reduces_to_semigroup(self, rng):
        u = random_field(Grid(2, 8), 1, rng)
        times = np.linspace(0, 0.1, 4)
        assert (cauchy_solve(None, u, 1.0, times) - heat_trajectory(u, times, 1.0)).max_abs() == 0

    def test_manufactured_second_order(self):
        g = Grid(2, 16)
        errs = [manufactured(g, 0.05, M) for M in (10, 20, 40)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert orders.min() >= 1.9
        assert errs[-1] < 1e-4

    def test_linearity(self, rng):
        g = Grid(2, 16)
        times = np.linspace(0, 0.1, 6)
        f1, f2 = (SpaceTimeField.from_frames([random_field(g, 1, rng) for _ in times], times) for _ in range(2))
        u1, u2 = random_field(g, 1, rng), random_field(g, 1, rng)
        lhs = cauchy_solve(f1 + f2, u1 + u2, 0.4)
        rhs = cauchy_solve(f1, u1, 0.4) + cauchy_solve(f2, u2, 0.4)
        assert (lhs - rhs).sup_norm() <= 1e-12 * lhs.sup_norm()

    def test_initial_condition(self, rng):
        g = Grid(2, 8)
        u0 = random_field(g, 0, rng)
        f = SpaceTimeField.from_frames([u0, u0], [0.0, 0.1])
        assert (cauchy_solve(f, u0, 1.0).frame(0) - u0).max_abs() < 1e-14


class TestGreenReconstruct:
    def test_semigroup_trajectory(self, rng):
        g = Grid(3, 16)
        u = heat_trajectory(random_field(g, 1, rng), np.linspace(0, 0.1, 21), 1.0)
        _, err = green_reconstruct(u, 1.0)
        assert err <= 1e-10

    def test_constant(self):
        g = Grid(2, 8)
        c = FormField.from_components(g, 0, {(): 1.5})
        _, err = green_reconstruct(SpaceTimeField.constant_in_time(c, np.linspace(0, 1, 6)), 1.0)
        assert err <= 1e-12

    def test_smooth_field_converges(self, rng):
        g = Grid(2, 8)
        u = random_field(g, 0, rng, kmax=2)
        errs = []
        for M in (20, 40, 80):
            times = np.linspace(0, 0.2, M + 1)
            traj = SpaceTimeField.from_frames([u * np.cos(4 * t) + u * t**2 for t in times], times)
            errs.append(green_reconstruct(traj, 0.5)[1])
        assert errs[0] > errs[1] > errs[2]
        assert np.log2(errs[1] / errs[2]) >= 1.8


class TestFittedWeights:
    def test_exact_on_exponential_and_polynomials(self):
        offsets = np.array([-0.02, -0.01, 0.0, 0.01, 0.02])
        rates = np.array([0.0, 1.0, 50.0, 400.0, 1e4])
        W = fitted_weights(offsets, rates)
        for a, w in zip(rates, W):
            shifted = np.exp(-a * (offsets - offsets.min()))     # same function up to a constant factor
            assert abs(w @ shifted) <= 1e-12 * np.abs(w).sum()
            for p in range(3):
                target = (p * 0.0 ** (p - 1) if p else 0.0) + a * (0.0 ** p)
                assert np.isclose(w @ offsets**p, target, atol=1e-8 * (1 + a))
