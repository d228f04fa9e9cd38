import numpy as np
import pytest

from torusns.hoelder_norms import (
    HoelderIndex,
    anisotropic_norm,
    brute_force_seminorm,
    combined_norm,
    derivative_tensor,
    embedding_check,
    field_corpus,
    isotropic_norm,
    shift_distance,
    spatial_seminorm,
    time_derivative,
    time_seminorm,
)
from torusns.spectral_field import ConfigurationError, FormField, Grid, SpaceTimeField, random_field


def scalar(grid, values):
    return FormField.from_components(grid, 0, {(): values})


class TestHoelderIndex:
    @pytest.mark.parametrize("kw", [dict(s=-1), dict(k=-1), dict(lam=0.0), dict(lam=1.0),
                                    dict(lam=0.5, gamma=0.1), dict(lam=0.5, lam_prime=0.4)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            HoelderIndex(**kw)

    def test_time_exponent(self):
        assert HoelderIndex(lam=0.6).time_exponent == pytest.approx(0.3)
        assert HoelderIndex(lam=0.6, gamma=0.0).time_exponent == 0.0


class TestSpatialSeminorm:
    @pytest.mark.parametrize("lam", [0.2, 0.5, 0.8])
    @pytest.mark.parametrize("degree", [0, 1, 2])
    def test_exhaustive_equals_brute_force(self, rng, lam, degree):
        grid = Grid(2, 8)
        for _ in range(3):
            u = random_field(grid, degree, rng, kmax=3)
            assert spatial_seminorm(u, lam, mode="exhaustive") == brute_force_seminorm(u.physical().data, lam)

    def test_one_dimensional_brute_force(self, rng):
        grid = Grid(1, 16)
        u = random_field(grid, 0, rng, kmax=5)
        assert spatial_seminorm(u, 0.4) == brute_force_seminorm(u.physical().data, 0.4)

    def test_constant_is_zero(self):
        grid = Grid(2, 8)
        assert spatial_seminorm(scalar(grid, np.full(grid.shape, 3.0)), 0.5) == 0.0

    def test_sampled_is_lower_bound(self, rng):
        grid = Grid(2, 32)
        u = random_field(grid, 0, rng, kmax=6)
        sampled = spatial_seminorm(u, 0.5, mode="sampled", samples=64)
        full = spatial_seminorm(u, 0.5, mode="exhaustive")
        assert sampled <= full
        assert sampled >= 0.5 * full

    def test_single_mode_value(self):
        grid = Grid(1, 16)
        x = grid.mesh()[0]
        u = scalar(grid, np.sin(2 * np.pi * x))
        expected = max(2 * abs(np.sin(np.pi * m / 16)) / (m / 16) ** 0.5 for m in range(1, 9))
        assert spatial_seminorm(u, 0.5) == pytest.approx(expected, rel=1e-14)

    def test_array_input_needs_matching_res(self, rng):
        vals = rng.standard_normal((8, 8))
        assert spatial_seminorm(vals, 0.5) == brute_force_seminorm(vals[None], 0.5)

    def test_bad_exponent(self, rng):
        with pytest.raises(ValueError):
            spatial_seminorm(rng.standard_normal((4, 4)), 1.5)

    def test_bad_mode(self, rng):
        with pytest.raises(ValueError):
            spatial_seminorm(rng.standard_normal((4, 4)), 0.5, mode="fast")

    def test_shift_distance_wraps(self):
        assert shift_distance((7, 0), (8, 8)) == pytest.approx(1 / 8)
        assert shift_distance((4, 4), (8, 8)) == pytest.approx(np.sqrt(0.5))


class TestNormAxioms:
    @pytest.mark.parametrize("s,lam", [(0, 0.5), (1, 0.3), (2, 0.7)])
    def test_homogeneity_and_triangle(self, rng, s, lam):
        grid = Grid(2, 8)
        for _ in range(5):
            u, v = random_field(grid, 1, rng, kmax=3), random_field(grid, 1, rng, kmax=3)
            c = rng.uniform(-3, 3)
            nu, nv = isotropic_norm(u, s, lam), isotropic_norm(v, s, lam)
            assert isotropic_norm(u * c, s, lam) == pytest.approx(abs(c) * nu, rel=1e-12)
            assert isotropic_norm(u + v, s, lam) <= nu + nv + 1e-10

    def test_anisotropic_axioms(self, rng):
        grid = Grid(2, 8)
        times = np.linspace(0, 0.1, 5)
        idx = HoelderIndex(s=1, lam=0.5)

        def trajectory():
            a, b = random_field(grid, 0, rng, kmax=2), random_field(grid, 0, rng, kmax=2)
            return SpaceTimeField.from_frames([a + b * t for t in times], times)

        u, v = trajectory(), trajectory()
        nu, nv = anisotropic_norm(u, idx), anisotropic_norm(v, idx)
        assert anisotropic_norm(u * -2.5, idx) == pytest.approx(2.5 * nu, rel=1e-12)
        assert anisotropic_norm(u + v, idx) <= nu + nv + 1e-10

    def test_constant_norm(self):
        grid = Grid(2, 8)
        assert isotropic_norm(scalar(grid, np.full(grid.shape, -2.0)), 2, 0.5) == pytest.approx(2.0)

    def test_isotropic_rejects_trajectory(self):
        grid = Grid(2, 8)
        with pytest.raises(ConfigurationError):
            isotropic_norm(SpaceTimeField.zeros(grid, 0, [0, 1]), 1, 0.5)


class TestDerivatives:
    def test_gradient_of_mode(self):
        grid = Grid(2, 16)
        x, y = grid.mesh()
        u = scalar(grid, np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
        grad = derivative_tensor(u, 1)
        np.testing.assert_allclose(grad[0], 2 * np.pi * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y),
                                   atol=1e-12)
        np.testing.assert_allclose(grad[1], -2 * np.pi * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y),
                                   atol=1e-12)

    def test_hessian_tensor_norm(self, rng):
        grid = Grid(2, 16)
        u = random_field(grid, 0, rng, kmax=3)
        hess = derivative_tensor(u, 2)
        spec = u.spectral().data[0]
        full = np.zeros(grid.shape)
        for a in range(2):
            for b in range(2):
                mult = grid.derivative_multipliers[a] * grid.derivative_multipliers[b]
                full += grid.ifft_real(spec * mult) ** 2
        np.testing.assert_allclose((hess**2).sum(axis=0), full, rtol=1e-12, atol=1e-9)

    def test_time_derivative_exact_on_quartics(self):
        grid = Grid(1, 4)
        times = np.linspace(0, 1, 9)
        base = scalar(grid, np.ones(grid.shape))
        u = SpaceTimeField.from_frames([base * (t**4 - 2 * t) for t in times], times)
        dt = time_derivative(u, 1)
        np.testing.assert_allclose(dt.node_norms(), np.abs(4 * times**3 - 2), atol=1e-10)

    def test_time_derivative_too_coarse(self):
        grid = Grid(1, 4)
        with pytest.raises(ConfigurationError):
            time_derivative(SpaceTimeField.zeros(grid, 0, [0.0, 1.0]), 2)

    def test_time_seminorm_linear(self):
        times = np.linspace(0, 0.5, 6)
        frames = np.array([np.full((1, 4), t) for t in times])
        assert time_seminorm(frames, times, 0.25) == pytest.approx(0.5**0.75)


class TestNorms:
    def test_gamma_zero_drops_time_seminorm(self, rng):
        grid = Grid(2, 8)
        times = np.linspace(0, 0.1, 5)
        a = random_field(grid, 0, rng, kmax=2)
        u = SpaceTimeField.from_frames([a * np.exp(-t) for t in times], times)
        with_time = anisotropic_norm(u, HoelderIndex(s=1, lam=0.5))
        without = anisotropic_norm(u, HoelderIndex(s=1, lam=0.5, gamma=0.0))
        assert with_time > without

    def test_combined_requires_prime(self):
        grid = Grid(2, 8)
        u = SpaceTimeField.zeros(grid, 0, np.linspace(0, 1, 3))
        with pytest.raises(ConfigurationError):
            combined_norm(u, HoelderIndex(s=0, lam=0.5))
        assert combined_norm(u, HoelderIndex(s=0, lam=0.5, lam_prime=0.7)) == 0.0

    def test_anisotropic_needs_nodes(self):
        grid = Grid(2, 8)
        with pytest.raises(ConfigurationError):
            anisotropic_norm(SpaceTimeField.zeros(grid, 0, [0.0, 1.0]), HoelderIndex(s=1))


class TestEmbedding:
    def test_corpus_has_no_violations(self):
        grid = Grid(2, 16)
        corpus = field_corpus(grid, count=100, seed=0)
        assert len(corpus) == 100
        result = embedding_check(corpus, (2, 0.5), (1, 0.5))
        assert result.holds
        assert result.observed_constant <= 1.0

    def test_inapplicable_orders(self):
        grid = Grid(2, 8)
        result = embedding_check(field_corpus(grid, count=3), (1, 0.25), (1, 0.75))
        assert not result.applicable
        assert not result.holds

    def test_corpus_is_seeded(self):
        grid = Grid(2, 8)
        a = field_corpus(grid, count=6, seed=3)
        b = field_corpus(grid, count=6, seed=3)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u.data, v.data)
