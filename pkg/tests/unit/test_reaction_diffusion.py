"""
Unit tests for the reaction-diffusion solvers
"""

import math

import numpy as np
import pytest

from hydrolimit.core import DomainError, SolverError
from hydrolimit.services.front_geometry import front_speed
from hydrolimit.services.glauber_rates import ReactionPolynomial, derived_constants
from hydrolimit.services.lattice_core import TorusGeometry
from hydrolimit.services.reaction_diffusion import (
    ContinuumField, LatticeField, ReactionDiffusionSolver, check_comparison, discrete_laplacian,
    embed_step, generation_check, generation_time_pe, generation_time_pnk, gradient_bounds,
    laplacian, solve_pe, solve_pnk, sweep_generation_m0,
)


def lattice(values, d=1):
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    return LatticeField(TorusGeometry(d, N), values)


def sine_field(N, mean=0.5, amplitude=0.2, shift=0.0):
    x = np.arange(N) / N
    return lattice(mean + shift + amplitude * np.sin(2 * np.pi * x))


class TestLaplacian:
    """Test the discrete Laplacian"""

    def test_constant_field(self):
        assert np.all(laplacian(np.full((8, 8), 0.3), 8) == 0.0)

    def test_sine_is_an_eigenfunction(self):
        N = 64
        u = sine_field(N, mean=0.0, amplitude=1.0).values
        eigenvalue = -2.0 * N * N * (1.0 - math.cos(2 * math.pi / N))
        assert np.allclose(laplacian(u, N), eigenvalue * u)

    def test_pointwise_version_agrees(self):
        rng = np.random.default_rng(0)
        u = LatticeField(TorusGeometry(2, 5), rng.random((5, 5)))
        full = laplacian(u.values, 5)
        for x in range(25):
            assert discrete_laplacian(u, x) == pytest.approx(full.ravel()[x])


class TestSolvePNK:
    """Test the lattice problem"""

    def test_upper_equilibrium_is_stationary(self, default_cubic):
        trajectory = solve_pnk(lattice(np.full(16, 0.75)), default_cubic, K=16.0, t_end=1.0)
        assert np.abs(trajectory.values - 0.75).max() < 1e-10

    def test_above_threshold_goes_up(self, default_cubic):
        trajectory = solve_pnk(lattice(np.full(8, 0.46)), default_cubic, K=16.0, t_end=2.0,
                               output_times=[0.0, 0.5, 1.0, 2.0])
        means = trajectory.values.reshape(4, -1).mean(axis=1)
        assert means[1] > 0.46
        assert np.all(np.diff(means) >= 0)
        assert means[-1] > 0.74

    def test_below_threshold_goes_down(self, default_cubic):
        trajectory = solve_pnk(lattice(np.full(8, 0.44)), default_cubic, K=16.0, t_end=2.0)
        assert trajectory.values[-1].max() < 0.26

    def test_pure_diffusion_conserves_mass(self):
        u0 = sine_field(32)
        trajectory = solve_pnk(u0, ReactionPolynomial((0.0,)), K=4.0, t_end=0.05,
                               output_times=[0.0, 0.025, 0.05])
        sums = trajectory.values.reshape(3, -1).sum(axis=1)
        assert np.abs(sums - sums[0]).max() < 1e-10

    def test_output_times_are_landed_exactly(self, default_cubic):
        trajectory = solve_pnk(sine_field(16), default_cubic, K=4.0, t_end=0.1,
                               output_times=[0.0, 0.0123, 0.1])
        assert trajectory.times.tolist() == [0.0, 0.0123, 0.1]
        assert trajectory.at(0.0123).shape == (16,)

    def test_rejects_small_K(self, default_cubic):
        with pytest.raises(DomainError):
            solve_pnk(sine_field(8), default_cubic, K=1.0, t_end=0.1)

    def test_rejects_values_outside_unit_interval(self, default_cubic):
        with pytest.raises(DomainError):
            solve_pnk(lattice(np.full(8, 1.0)), default_cubic, K=4.0, t_end=0.1)

    def test_bound_violation_is_a_solver_error(self, default_cubic):
        solver = ReactionDiffusionSolver(default_cubic, 1, 8, 1.0, 1.0)
        solver.dt_max = 10.0
        with pytest.raises(SolverError) as info:
            solver.integrate(sine_field(8).values, [0.0, 10.0])
        assert "time" in info.value.diagnostics

    def test_to_frame(self, default_cubic):
        frame = solve_pnk(sine_field(8), default_cubic, K=4.0, t_end=0.01).to_frame()
        assert list(frame.columns) == ["t", "index", "value"]
        assert len(frame) == 2 * 8


class TestSolvePE:
    """Test the continuum problem"""

    def test_under_resolved_grid(self, default_cubic):
        u0 = ContinuumField.from_function(lambda x: 0.5 + 0.1 * np.sin(2 * np.pi * x), 100)
        with pytest.raises(DomainError):
            solve_pe(u0, default_cubic, eps=0.02, t_end=0.01)

    def test_eps_range(self, default_cubic):
        u0 = ContinuumField.from_function(lambda x: 0.5 + 0.0 * x, 100)
        with pytest.raises(DomainError):
            solve_pe(u0, default_cubic, eps=1.5, t_end=0.01)

    def test_records_eps(self, default_cubic):
        u0 = ContinuumField.from_function(lambda x: 0.5 + 0.1 * np.sin(2 * np.pi * x), 200)
        trajectory = solve_pe(u0, default_cubic, eps=0.1, t_end=0.001)
        assert trajectory.params["kind"] == "pe"
        assert trajectory.params["eps"] == 0.1

    @pytest.mark.slow
    def test_second_order_mesh_convergence(self, default_cubic):
        def smooth(x):
            return 0.5 + 0.2 * np.cos(2 * np.pi * x)

        finals = {}
        for M in (200, 400, 800):
            u0 = ContinuumField.from_function(smooth, M)
            finals[M] = solve_pe(u0, default_cubic, eps=0.1, t_end=0.02).values[-1]
        coarse = np.abs(finals[400][::2] - finals[200]).max()
        fine = np.abs(finals[800][::2] - finals[400]).max()
        assert coarse / fine > 3.0


class TestFrontSpeeds:
    """Interface speeds of both problems against the wave speed"""

    @pytest.mark.slow
    def test_continuum_front_speed(self, default_cubic, default_wave):
        eps, M = 0.01, 4000
        u0 = ContinuumField.from_function(
            lambda x: 0.5 + 0.24 * np.tanh((0.25 - np.abs(x - 0.5)) / 0.02), M)
        times = np.linspace(0.03, 0.13, 6)
        trajectory = solve_pe(u0, default_cubic, eps, 0.13, [0.0, *times])
        estimate = front_speed(trajectory, default_cubic.alpha_star, t_start=0.03)
        assert estimate.speed == pytest.approx(default_wave.c_star, rel=0.02)

    @pytest.mark.slow
    def test_lattice_front_speed(self, default_cubic, default_wave):
        N, K = 512, 25.0
        eps = 1.0 / math.sqrt(K)
        x = np.arange(N) / N
        gap = np.abs(x - 0.4)
        dist = np.minimum(gap, 1.0 - gap) - 0.2
        # the wave itself, so no generation transient enters the speed
        u0 = default_wave.evaluate(dist / eps)
        times = np.linspace(0.02, 0.15, 6)
        trajectory = solve_pnk(lattice(u0), default_cubic, K, 0.15, [0.0, *times])
        estimate = front_speed(trajectory, default_cubic.alpha_star, t_start=0.02)
        assert estimate.speed == pytest.approx(default_wave.c_star, rel=0.05)


class TestComparison:
    """Test the ordering check"""

    def test_ordered_data_stay_ordered(self, default_cubic):
        rng = np.random.default_rng(7)
        for _ in range(5):
            amplitude, gap = rng.uniform(0.05, 0.2), rng.uniform(0.001, 0.05)
            lower = solve_pnk(sine_field(32, amplitude=amplitude), default_cubic, K=9.0, t_end=0.1,
                              output_times=[0.0, 0.05, 0.1])
            upper = solve_pnk(sine_field(32, amplitude=amplitude, shift=gap), default_cubic, K=9.0,
                              t_end=0.1, output_times=[0.0, 0.05, 0.1])
            assert check_comparison(lower, upper).passed

    @pytest.mark.slow
    def test_random_ordered_pairs_stay_ordered_and_bounded(self, default_cubic):
        rng = np.random.default_rng(11)
        tol = 1e-9
        times = [0.0, 0.05, 0.1]
        for _ in range(100):
            low = rng.uniform(0.05, 0.85, 32)
            high = low + rng.uniform(0.0, 0.1, 32)
            lower = solve_pnk(lattice(low), default_cubic, K=9.0, t_end=0.1, output_times=times)
            upper = solve_pnk(lattice(high), default_cubic, K=9.0, t_end=0.1, output_times=times)
            assert check_comparison(lower, upper, tol=tol).passed
            floor = min(low.min(), default_cubic.alpha_minus) - tol
            ceiling = max(high.max(), default_cubic.alpha_plus) + tol
            assert lower.values.min() >= floor
            assert upper.values.max() <= ceiling

    def test_violation_is_located(self, default_cubic):
        upper = solve_pnk(sine_field(8), default_cubic, K=4.0, t_end=0.01)
        lower = solve_pnk(sine_field(8, shift=0.1), default_cubic, K=4.0, t_end=0.01)
        report = check_comparison(lower, upper)
        assert not report.passed
        assert report.first_violation["time"] == 0.0

    def test_mismatched_trajectories(self, default_cubic):
        a = solve_pnk(sine_field(8), default_cubic, K=4.0, t_end=0.01)
        b = solve_pnk(sine_field(16), default_cubic, K=4.0, t_end=0.01)
        with pytest.raises(DomainError):
            check_comparison(a, b)


class TestEmbedding:
    """Test the step-function embedding"""

    def test_boxes_are_centred_on_sites(self):
        step = embed_step(lattice([0.1, 0.2, 0.3, 0.4]))
        assert step(0.26)[0] == pytest.approx(0.2)
        assert step(0.95)[0] == pytest.approx(0.1)
        assert step(0.0)[0] == pytest.approx(0.1)

    def test_sample(self):
        sampled = embed_step(lattice([0.1, 0.2, 0.3, 0.4])).sample(8)
        assert sampled.values.tolist() == pytest.approx([0.1, 0.2, 0.2, 0.3, 0.3, 0.4, 0.4, 0.1])


class TestGeneration:
    """Test the generation-time check"""

    def test_generation_times(self):
        assert generation_time_pe(0.02, 1.92) == pytest.approx(0.02 * math.log(50) / 1.92)
        assert generation_time_pnk(16.0, 1.92) == pytest.approx(math.log(16) / (8 * 1.92))

    def test_equilibrium_passes(self, default_cubic):
        constants = derived_constants(default_cubic, 0.2, 0.8)
        K = 16.0
        t_gen = generation_time_pnk(K, constants.gamma)
        u0 = np.full(16, 0.75)
        trajectory = solve_pnk(lattice(u0), default_cubic, K, t_gen, [0.0, t_gen])
        report = generation_check(trajectory, constants, default_cubic, u0, 0.05, M0=0.0, K=K)
        assert report.passed
        assert report.M0_min == 0.0

    def test_reported_m0_passes_when_used(self, default_cubic):
        constants = derived_constants(default_cubic, 0.2, 0.8)
        K = 16.0
        t_gen = generation_time_pnk(K, constants.gamma)
        x = np.arange(64) / 64
        u0 = 0.5 + 0.24 * np.tanh((0.25 - np.abs(x - 0.5)) / 0.05)
        trajectory = solve_pnk(lattice(u0), default_cubic, K, t_gen, [0.0, t_gen])
        first = generation_check(trajectory, constants, default_cubic, u0, 0.05, M0=0.0, K=K)
        assert first.M0_min > 0.0
        assert not first.passed
        again = generation_check(trajectory, constants, default_cubic, u0, 0.05, M0=first.M0_min, K=K)
        assert again.passed
        assert again.M0_min == first.M0_min

    def test_delta_must_be_below_delta0(self, default_cubic):
        constants = derived_constants(default_cubic, 0.2, 0.8)
        trajectory = solve_pnk(lattice(np.full(8, 0.75)), default_cubic, 4.0, 0.01)
        with pytest.raises(DomainError):
            generation_check(trajectory, constants, default_cubic, np.full(8, 0.75),
                             constants.delta0, M0=1.0, K=4.0)

    def test_needs_exactly_one_scale(self, default_cubic):
        constants = derived_constants(default_cubic, 0.2, 0.8)
        trajectory = solve_pnk(lattice(np.full(8, 0.75)), default_cubic, 4.0, 0.01)
        with pytest.raises(DomainError):
            generation_check(trajectory, constants, default_cubic, np.full(8, 0.75), 0.05, M0=1.0)

    @pytest.mark.slow
    def test_m0_is_bounded_in_eps(self, default_cubic):
        constants = derived_constants(default_cubic, 0.2, 0.8)

        def front(x):
            return 0.5 + 0.24 * np.tanh((0.25 - np.abs(x - 0.5)) / 0.05)

        sweep = sweep_generation_m0(default_cubic, constants, front, [0.04, 0.02], delta=0.05)
        assert sweep["bounded"]
        assert all(r["bounds_ok"] for r in sweep["results"])


class TestGradientBounds:
    """Test the gradient and Laplacian constants"""

    def test_constant_data(self, default_cubic):
        trajectory = solve_pnk(lattice(np.full(8, 0.75)), default_cubic, 4.0, 0.01)
        report = gradient_bounds(trajectory, 4.0)
        assert report.C_gradient == pytest.approx(0.0, abs=1e-9)
        assert report.C_laplacian == pytest.approx(0.0, abs=1e-6)

    def test_sine_data(self, default_cubic):
        N = 32
        trajectory = solve_pnk(sine_field(N), default_cubic, 4.0, 0.0, [0.0])
        report = gradient_bounds(trajectory, 4.0)
        assert 0.0 < report.C_gradient <= N * 0.2 * 2 * math.pi / N / 4.0 + 1e-12
