"""
Unit tests for the kinetic Monte Carlo engine
"""

import math

import numpy as np
import pytest

from hydrolimit.core import AbsorbedError, CapacityError, DomainError
from hydrolimit.services.glauber_rates import RateFunction, design_rates
from hydrolimit.services.kmc_engine import (
    MarkovState, ReplicaRunner, ReplicaSpec, check_invariants, empirical_measure, exact_distribution,
    generator_matrix, make_rng, pairing, relative_entropy_product, run_replica, sample_product_measure,
    simulate, state_frequencies, step,
)
from hydrolimit.services.lattice_core import Configuration, LocalWindow, TorusGeometry
from hydrolimit.utils import StatsUtils

WINDOW = LocalWindow(1, 1)
UNIT_RATES = RateFunction.constant(1.0, WINDOW)


def single_particle(N=4):
    occ = np.zeros(N, dtype=np.uint8)
    occ[0] = 1
    return Configuration(TorusGeometry(1, N), occ)


class TestMarkovState:
    """Test the event-rate bookkeeping"""

    def test_totals(self):
        state = MarkovState(single_particle(), UNIT_RATES, K=4.0)
        # two discordant bonds at N^2/sqrt(K) = 8, four sites at sqrt(K) * 1
        assert state.kawasaki_total == pytest.approx(16.0)
        assert state.glauber_total == pytest.approx(8.0)
        assert state.total_rate == pytest.approx(24.0)

    def test_K_must_exceed_one(self):
        with pytest.raises(DomainError):
            MarkovState(single_particle(), UNIT_RATES, K=1.0)

    def test_window_dimension_mismatch(self):
        with pytest.raises(DomainError):
            MarkovState(single_particle(), RateFunction.constant(1.0, LocalWindow(1, 2)), K=4.0)

    def test_absorbed_state(self):
        state = MarkovState(Configuration.full(TorusGeometry(1, 4)), RateFunction.constant(0.0, WINDOW), K=4.0)
        assert state.total_rate == 0.0
        with pytest.raises(AbsorbedError):
            step(state, make_rng(1))

    def test_bookkeeping_survives_many_events(self, default_rates):
        geometry = TorusGeometry(1, 16)
        eta = sample_product_measure(np.full(16, 0.5), 7, geometry)
        state = MarkovState(eta, default_rates, K=9.0)
        rng = make_rng(3)
        for _ in range(500):
            step(state, rng)
        assert check_invariants(state).passed

    def test_bookkeeping_in_two_dimensions(self, default_cubic):
        rates = design_rates(default_cubic, LocalWindow(1, 2))
        geometry = TorusGeometry(2, 6)
        state = MarkovState(sample_product_measure(np.full(36, 0.4), 11, geometry), rates, K=4.0)
        rng = make_rng(5)
        for _ in range(300):
            step(state, rng)
        assert check_invariants(state).passed

    def test_step_stops_at_the_horizon(self, default_rates):
        eta = single_particle(8)
        state = MarkovState(eta, default_rates, K=4.0)
        assert step(state, make_rng(1), horizon=0.0) is None
        assert state.time == 0.0
        assert state.configuration == eta

    def test_flip_selection_reuses_its_buffers(self, default_rates):
        state = MarkovState(sample_product_measure(np.full(16, 0.5), 7, TorusGeometry(1, 16)),
                            default_rates, K=9.0)
        buffers = (state._level_weights, state._level_cumulative)
        rng = make_rng(4)
        flips = sum(step(state, rng).kind == "flip" for _ in range(300))
        assert flips > 0
        assert state._level_weights is buffers[0]
        assert state._level_cumulative is buffers[1]
        assert check_invariants(state).passed

    def test_exchange_conserves_particles_without_flips(self):
        state = MarkovState(single_particle(8), RateFunction.constant(0.0, WINDOW), K=4.0)
        rng = make_rng(2)
        for _ in range(50):
            record = step(state, rng)
            assert record.kind == "exchange"
        assert state.configuration.particle_count == 1


class TestDensities:
    """Test product sampling and empirical fields"""

    def test_product_measure_extremes(self):
        geometry = TorusGeometry(1, 8)
        assert sample_product_measure(np.ones(8), 0, geometry) == Configuration.full(geometry)
        assert sample_product_measure(np.zeros(8), 0, geometry) == Configuration.empty(geometry)

    def test_product_measure_needs_geometry(self):
        with pytest.raises(DomainError):
            sample_product_measure(np.ones(8), 0)

    def test_product_measure_range(self):
        with pytest.raises(DomainError):
            sample_product_measure(np.full(4, 1.5), 0, TorusGeometry(1, 4))

    def test_empirical_measure_blocks(self):
        geometry = TorusGeometry(1, 8)
        assert empirical_measure(Configuration.full(geometry), 2).densities.tolist() == [1.0] * 4
        checkerboard = Configuration(geometry, np.arange(8) % 2)
        assert empirical_measure(checkerboard, 2).densities.tolist() == [0.5] * 4

    def test_empirical_measure_2d(self):
        geometry = TorusGeometry(2, 4)
        field = empirical_measure(Configuration.full(geometry), 2)
        assert field.densities.shape == (2, 2)
        assert field.pairing(lambda x, y: np.ones_like(x)) == pytest.approx(1.0)

    def test_block_must_divide_N(self):
        with pytest.raises(DomainError):
            empirical_measure(Configuration.full(TorusGeometry(1, 8)), 3)

    def test_pairing(self):
        geometry = TorusGeometry(1, 8)
        assert pairing(Configuration.full(geometry), lambda x: np.ones_like(x)) == pytest.approx(1.0)
        assert pairing(Configuration.full(geometry), lambda x: np.cos(2 * np.pi * x)) == pytest.approx(0.0, abs=1e-12)

    def test_relative_entropy(self):
        assert relative_entropy_product([1.0], [0.5]) == pytest.approx(math.log(2))
        assert relative_entropy_product([0.3, 0.6], [0.3, 0.6]) == pytest.approx(0.0)

    def test_relative_entropy_reference_interior(self):
        with pytest.raises(DomainError):
            relative_entropy_product([0.5], [1.0])


class TestSimulate:
    """Test the simulation loop"""

    def test_zero_horizon_records_initial_state(self, default_rates):
        eta = single_particle(8)
        trajectory = simulate(eta, default_rates, K=4.0, t_end=0.0, seed=1)
        assert trajectory.times == [0.0]
        assert trajectory.final == eta
        assert trajectory.events == 0

    def test_observer_times(self, default_rates):
        trajectory = simulate(single_particle(8), default_rates, K=4.0, t_end=0.01,
                              observers=[0.005, 0.02], seed=1)
        assert trajectory.times == [0.0, 0.005, 0.01]
        assert trajectory.at(0.005).geometry.N == 8
        with pytest.raises(DomainError):
            trajectory.at(0.02)

    def test_absorbed_run_keeps_observing(self):
        eta = Configuration.empty(TorusGeometry(1, 4))
        trajectory = simulate(eta, RateFunction.constant(0.0, WINDOW), K=4.0, t_end=1.0,
                              observers=[0.5], seed=0)
        assert trajectory.absorbed
        assert trajectory.times == [0.0, 0.5, 1.0]
        assert all(s == eta for s in trajectory.snapshots)

    def test_negative_horizon(self, default_rates):
        with pytest.raises(DomainError):
            simulate(single_particle(), default_rates, K=4.0, t_end=-1.0)

    def test_seeded_runs_are_identical(self, default_rates):
        geometry = TorusGeometry(1, 16)
        eta = sample_product_measure(np.full(16, 0.5), 4, geometry)
        first = simulate(eta, default_rates, K=4.0, t_end=0.02, seed=99)
        second = simulate(eta, default_rates, K=4.0, t_end=0.02, seed=99)
        assert first.events == second.events
        assert first.final == second.final

    def test_callbacks_see_every_snapshot(self, default_rates):
        seen = []
        simulate(single_particle(8), default_rates, K=4.0, t_end=0.01, observers=[0.005],
                 seed=2, callbacks=[lambda t, snap: seen.append(t)])
        assert seen == [0.0, 0.005, 0.01]

    def test_matches_a_manual_step_loop(self, default_rates):
        eta = sample_product_measure(np.full(16, 0.5), 4, TorusGeometry(1, 16))
        trajectory = simulate(eta, default_rates, K=4.0, t_end=0.02, observers=[0.01], seed=99)
        state = MarkovState(eta, default_rates, K=4.0)
        rng = make_rng(99)
        events = 0
        for t in (0.0, 0.01, 0.02):
            while step(state, rng, horizon=t) is not None:
                events += 1
        assert trajectory.events == events
        assert trajectory.final == state.configuration

    def test_to_frame(self, default_rates):
        frame = simulate(single_particle(8), default_rates, K=4.0, t_end=0.0, seed=0).to_frame(block=4)
        assert list(frame.columns) == ["t", "t_rescaled", "block", "density"]
        assert frame["density"].tolist() == [0.25, 0.0]


class TestExactLaw:
    """Test the generator matrix and uniformization"""

    def test_generator_rows_sum_to_zero(self, default_rates):
        Q = generator_matrix(TorusGeometry(1, 4), default_rates, K=4.0)
        assert Q.shape == (16, 16)
        assert np.allclose(np.asarray(Q.sum(axis=1)).ravel(), 0.0)

    def test_capacity_limit(self, default_rates):
        with pytest.raises(CapacityError):
            generator_matrix(TorusGeometry(1, 17), default_rates, K=4.0)

    def test_point_mass_at_time_zero(self, default_rates):
        eta = single_particle()
        law = exact_distribution(eta.geometry, default_rates, 4.0, 0.0, eta)
        assert law[eta.state_index()] == 1.0
        assert law.sum() == 1.0

    def test_law_is_a_probability_vector(self, default_rates):
        eta = single_particle()
        law = exact_distribution(eta.geometry, default_rates, 4.0, 0.1, eta)
        assert law.min() >= -1e-12
        assert law.sum() == pytest.approx(1.0, abs=1e-10)

    def test_pure_exchange_spreads_uniformly(self):
        eta = single_particle()
        law = exact_distribution(eta.geometry, RateFunction.constant(0.0, WINDOW), 4.0, 5.0, eta)
        one_particle = [1 << i for i in range(4)]
        assert law[one_particle] == pytest.approx([0.25] * 4, abs=1e-8)

    @pytest.mark.slow
    def test_simulation_matches_exact_law(self, default_rates):
        eta = single_particle()
        spec = ReplicaSpec(d=1, N=4, rates=default_rates.to_dict(), K=4.0, t_end=0.1,
                           initial_state=eta.to_bytes(), seed=2024)
        results = ReplicaRunner(workers=1, show_progress=False).run(spec, 2000)
        counts = state_frequencies(results)
        law = exact_distribution(eta.geometry, default_rates, 4.0, 0.1, eta)
        assert StatsUtils.chi_square_agreement(counts, law, alpha=0.01).passed


class TestReplicas:
    """Test replica runs"""

    def test_replica_seed_is_xored(self, default_rates):
        spec = ReplicaSpec(d=1, N=8, rates=default_rates.to_dict(), K=4.0, t_end=0.0,
                           initial_density=np.full(8, 0.5), seed=40)
        assert run_replica(spec, 3).seed == 40 ^ 3

    def test_replica_needs_initial_data(self, default_rates):
        spec = ReplicaSpec(d=1, N=8, rates=default_rates.to_dict(), K=4.0, t_end=0.0)
        with pytest.raises(DomainError):
            run_replica(spec, 0)

    def test_runner_keeps_replica_order(self, default_rates):
        spec = ReplicaSpec(d=1, N=8, rates=default_rates.to_dict(), K=4.0, t_end=0.005,
                           initial_density=np.full(8, 0.5), seed=1)
        results = ReplicaRunner(workers=1, show_progress=False).run(spec, 3)
        assert [r.seed for r in results] == [1, 0, 3]

    def test_state_frequencies(self, default_rates):
        spec = ReplicaSpec(d=1, N=4, rates=default_rates.to_dict(), K=4.0, t_end=0.0,
                           initial_state=single_particle().to_bytes())
        counts = state_frequencies(ReplicaRunner(workers=1, show_progress=False).run(spec, 5))
        assert counts[1] == 5
        assert counts.sum() == 5
