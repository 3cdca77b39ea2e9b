import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streamcalib import (
    EmptyStateError,
    FixedPointError,
    ProbabilityGrid,
    RegretMatchingCalibrator,
    read_transcript,
    sample_forecast,
    write_transcript,
)
from oracles import (
    build_regret_chain,
    instance_calibration_error,
    regret_matrix_from_rounds,
    stationary_by_eigen,
)


def normalized(values):
    arr = np.asarray(values, dtype=float)
    total = arr.sum()
    if total <= 0.0:
        arr = np.zeros_like(arr)
        arr[0] = 1.0
        return arr
    return arr / total


def distributions(k):
    return st.lists(
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        min_size=k,
        max_size=k,
    ).map(normalized)


def rounds_strategy(n, max_rounds=30):
    k = n + 1
    one_round = st.tuples(
        distributions(k),
        st.integers(min_value=0, max_value=n),
        st.integers(min_value=0, max_value=1),
    )
    return st.lists(one_round, min_size=1, max_size=max_rounds)


def replay(n, rounds, record_transcript=False):
    state = RegretMatchingCalibrator(ProbabilityGrid(n), record_transcript=record_transcript)
    for dist, sampled, y in rounds:
        state.update(dist, sampled, y)
    return state


def self_play(n, outcomes, seed):
    state = RegretMatchingCalibrator(ProbabilityGrid(n))
    rng = np.random.default_rng(seed)
    for y in outcomes:
        dist = state.forecast_distribution()
        sampled = sample_forecast(dist, rng)
        state.update(dist, sampled, y)
    return state


class TestColdStart:
    def test_fresh_state_plays_midpoint(self):
        state = RegretMatchingCalibrator(ProbabilityGrid(10))
        w = state.forecast_distribution()
        expected = np.zeros(11)
        expected[5] = 1.0
        assert np.array_equal(w, expected)

    def test_midpoint_tie_breaks_low(self):
        state = RegretMatchingCalibrator(ProbabilityGrid(1))
        assert np.array_equal(state.forecast_distribution(), [1.0, 0.0])

    def test_tracks_outcome_mean(self):
        state = RegretMatchingCalibrator(ProbabilityGrid(10))
        # Point-mass plays accrue no positive regret against themselves only
        # when the outcome matches; steer the mean to 1 with matching plays.
        top = np.zeros(11)
        top[10] = 1.0
        for _ in range(5):
            state.update(top, 10, 1)
        assert np.array_equal(state.forecast_distribution(), top)


class TestUpdate:
    def test_point_mass_update_single_row(self):
        state = replay(1, [(np.array([1.0, 0.0]), 0, 0)])
        assert state.regret[0][1] == -1.0
        assert state.regret[1][0] == 0.0

    def test_interior_point_update(self):
        state = replay(2, [(np.array([0.0, 1.0, 0.0]), 1, 1)])
        assert state.regret[1][2] == pytest.approx(0.25, abs=1e-15)
        assert state.weighted_outcome[1] == 1.0

    def test_diagonal_stays_zero(self):
        state = replay(3, [(normalized([1, 2, 3, 4]), 2, 1), (normalized([4, 1, 1, 0]), 0, 0)])
        assert np.array_equal(np.diag(state.regret), np.zeros(4))

    def test_rejects_bad_outcome(self):
        state = RegretMatchingCalibrator(ProbabilityGrid(2))
        with pytest.raises(ValueError):
            state.update(np.array([1.0, 0.0, 0.0]), 0, 2)
        with pytest.raises(ValueError):
            state.update(np.array([1.0, 0.0, 0.0]), 0, 0.5)

    def test_rejects_bad_distribution(self):
        state = RegretMatchingCalibrator(ProbabilityGrid(2))
        with pytest.raises(ValueError):
            state.update(np.array([0.9, 0.0, 0.0]), 0, 1)
        with pytest.raises(ValueError):
            state.update(np.array([0.5, 0.5]), 0, 1)

    @given(rounds_strategy(4))
    @settings(max_examples=100, deadline=None)
    def test_weighted_count_grows_by_one_per_round(self, rounds):
        state = RegretMatchingCalibrator(ProbabilityGrid(4))
        for step, (dist, sampled, y) in enumerate(rounds, start=1):
            state.update(dist, sampled, y)
            assert state.weighted_count.sum() == pytest.approx(step, abs=1e-12)
        assert state.sampled_count.sum() == len(rounds)


class TestForecastDistribution:
    def test_two_point_chain_reaches_better_action(self):
        # One expected update with the uniform play and outcome 1 leaves
        # positive regret only for swapping 0 -> 1, so the chain's unique
        # stationary distribution is all mass on point 1.
        state = replay(1, [(np.array([0.5, 0.5]), 0, 1)])
        w = state.forecast_distribution()
        assert np.allclose(w, [0.0, 1.0], atol=1e-9)
        chain = build_regret_chain(state.regret)
        assert np.allclose(stationary_by_eigen(chain), [0.0, 1.0], atol=1e-12)

    @given(rounds_strategy(4))
    @settings(max_examples=150, deadline=None)
    def test_emitted_distribution_is_fixed_point(self, rounds):
        state = replay(4, rounds)
        w = state.forecast_distribution()
        assert w.shape == (5,)
        assert np.all(w >= 0.0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        chain = build_regret_chain(state.regret)
        if chain is not None:
            assert np.abs(w - w @ chain).sum() <= 1e-8

    @given(rounds_strategy(3))
    @settings(max_examples=60, deadline=None)
    def test_deterministic_given_history(self, rounds):
        a = replay(3, rounds)
        b = replay(3, rounds)
        assert np.array_equal(a.forecast_distribution(), b.forecast_distribution())
        assert np.array_equal(a.regret, b.regret)

    def test_fixed_point_error_carries_residual(self):
        err = FixedPointError(0.25, 64)
        assert err.residual == 0.25
        assert "64" in str(err)


class TestRegretTelescoping:
    @given(rounds_strategy(5, max_rounds=40))
    @settings(max_examples=80, deadline=None)
    def test_matches_batch_recomputation(self, rounds):
        state = RegretMatchingCalibrator(ProbabilityGrid(5), record_transcript=True)
        for dist, sampled, y in rounds:
            state.update(dist, sampled, y)
        batch = np.asarray(regret_matrix_from_rounds(state.transcript, 5))
        assert np.abs(state.regret - batch).max() <= 1e-10


class TestInternalRegret:
    def test_empty_state_rejected(self):
        state = RegretMatchingCalibrator(ProbabilityGrid(2))
        with pytest.raises(EmptyStateError):
            state.internal_regret()
        with pytest.raises(EmptyStateError):
            state.expected_point_mass_gap()
        with pytest.raises(EmptyStateError):
            state.external_regret(0)

    def test_single_matching_round_is_minus_one(self):
        state = replay(1, [(np.array([0.0, 1.0]), 1, 1)])
        assert state.internal_regret() == -1.0

    def test_constant_stream_converges(self):
        state = self_play(10, [1] * 50_000, seed=21)
        assert state.internal_regret() <= 0.01

    def test_iid_stream_converges(self):
        rng = np.random.default_rng(4)
        outcomes = (rng.random(100_000) < 0.3).astype(int)
        state = self_play(10, outcomes, seed=22)
        assert state.internal_regret() <= 0.01

    def test_calibration_bounded_by_regret_plus_floor(self):
        rng = np.random.default_rng(40)
        streams = [
            [1] * 4_000,
            (rng.random(6_000) < 0.37).astype(int),
            [int(t % 3 == 0) for t in range(5_000)],
        ]
        for idx, outcomes in enumerate(streams):
            state = self_play(10, outcomes, seed=idx)
            bound = max(state.internal_regret(), 0.0) + 1.0 / (4 * 10**2) + 1e-9
            assert instance_calibration_error(state) <= bound

    def test_external_regret_bounded_by_internal(self):
        rng = np.random.default_rng(41)
        outcomes = (rng.random(5_000) < 0.6).astype(int)
        state = self_play(8, outcomes, seed=5)
        cap = max(state.internal_regret(), 0.0) * (8 + 1)
        for j in range(9):
            assert state.external_regret(j) <= cap + 1e-12


class TestExpectedPointMassGap:
    def test_point_mass_play_has_zero_gap(self):
        state = RegretMatchingCalibrator(ProbabilityGrid(4))
        mass = np.zeros(5)
        mass[2] = 1.0
        for _ in range(50):
            state.update(mass, 2, 1)
        assert state.expected_point_mass_gap() == 0.0

    def test_single_round_half_mass(self):
        state = replay(1, [(np.array([0.5, 0.5]), 0, 1)])
        assert state.expected_point_mass_gap() == 0.5

    def test_long_run_concentration(self):
        state = RegretMatchingCalibrator(ProbabilityGrid(1))
        rng = np.random.default_rng(123)
        dist = np.array([0.5, 0.5])
        for _ in range(100_000):
            sampled = sample_forecast(dist, rng)
            state.update(dist, sampled, 0)
        assert state.expected_point_mass_gap() <= 0.01


class TestSampleForecast:
    def test_point_mass_every_seed(self):
        dist = np.zeros(11)
        dist[3] = 1.0
        for seed in range(25):
            assert sample_forecast(dist, np.random.default_rng(seed)) == 3

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(77)
        dist = np.full(11, 1.0 / 11)
        counts = np.zeros(11)
        draws = 100_000
        for _ in range(draws):
            counts[sample_forecast(dist, rng)] += 1
        assert np.abs(counts / draws - 1.0 / 11).max() <= 0.01

    def test_even_binary_split(self):
        rng = np.random.default_rng(78)
        dist = np.array([0.5, 0.5])
        draws = 100_000
        zeros = sum(1 for _ in range(draws) if sample_forecast(dist, rng) == 0)
        assert 0.49 <= zeros / draws <= 0.51

    def test_deterministic_given_seed(self):
        dist = np.array([0.25, 0.25, 0.5])
        a = [sample_forecast(dist, np.random.default_rng(5)) for _ in range(20)]
        b = [sample_forecast(dist, np.random.default_rng(5)) for _ in range(20)]
        assert a == b


class TestTranscript:
    def test_round_trip(self, tmp_path):
        state = RegretMatchingCalibrator(ProbabilityGrid(3), record_transcript=True)
        rng = np.random.default_rng(9)
        for y in (rng.random(25) < 0.5).astype(int):
            dist = state.forecast_distribution()
            state.update(dist, sample_forecast(dist, rng), int(y))
        path = tmp_path / "transcript.jsonl"
        write_transcript(state.transcript, path)
        assert read_transcript(path) == state.transcript
        with open(path, encoding="utf-8") as handle:
            first = json.loads(next(iter(handle)))
        assert set(first) == {"t", "distribution", "sampled", "y"}

    def test_state_round_trip_through_dict(self):
        state = self_play(4, [1, 0, 1, 1, 0, 1], seed=3)
        clone = RegretMatchingCalibrator.from_dict(state.to_dict())
        assert np.array_equal(clone.regret, state.regret)
        assert np.array_equal(clone.weighted_count, state.weighted_count)
        assert np.array_equal(clone.weighted_outcome, state.weighted_outcome)
        assert np.array_equal(clone.sampled_count, state.sampled_count)
        assert clone.t == state.t
