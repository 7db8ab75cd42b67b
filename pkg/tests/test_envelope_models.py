# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""Tests for the pure and Bayesian two-envelope models."""

import logging
import math

import numpy as np
import pytest

from src.envelope_models import (
    NAIVE_ANNOTATION,
    DensitySpec,
    bayesian_envelope_report,
    build_bayesian_envelope,
    build_envelope_pair,
    envelope_pure_report,
    lln_experiment,
    measured_value_expectation,
    naive_other_expectation,
    outcome_density,
    pure_switch_gain,
    single_pair_model,
)
from src.errors import DomainError
from src.measure_core import MixedState, PureState
from src.measurement import (
    RngStream,
    goodness_of_fit,
    outcome_distribution_pure,
    outcome_distribution_statistical,
    sample_indices,
)


class TestNaiveExpectation:
    """The 1.25*alpha argument, kept only to be compared."""

    def test_value(self):
        """Finding 100 gives the naive 125."""
        naive = naive_other_expectation(100.0)
        assert naive.e_other == 125.0
        assert naive.annotation == NAIVE_ANNOTATION

    def test_zero(self):
        """An empty envelope gives zero."""
        assert naive_other_expectation(0.0).e_other == 0.0

    def test_negative_alpha(self):
        """Amounts cannot be negative."""
        with pytest.raises(DomainError):
            naive_other_expectation(-1.0)

    def test_side_by_side_with_pure_gain(self):
        """alpha=20: naive says 25, both compatible fixed pairs give gain 0."""
        assert naive_other_expectation(20.0).e_other == 25.0
        assert pure_switch_gain(single_pair_model(10.0, 20.0), PureState(0)) == 0.0
        assert pure_switch_gain(single_pair_model(20.0, 40.0), PureState(0)) == 0.0


class TestPairModel:
    """Tests for build_envelope_pair and the fixed-state report."""

    def test_single_pair(self):
        """A fixed pair shows each amount half the time."""
        model = single_pair_model(10.0, 20.0)
        d = outcome_distribution_pure(model.observable, PureState(0))
        assert d.outcomes == (10.0, 20.0)
        assert d.probs.tolist() == [0.5, 0.5]
        assert model.quasi.outcomes == ((10.0, 20.0), (20.0, 10.0))

    def test_equal_payouts(self):
        """Equal amounts give a single pair and no gain."""
        model = single_pair_model(10.0, 10.0)
        assert model.quasi.outcomes == ((10.0, 10.0),)
        assert pure_switch_gain(model, PureState(0)) == 0.0

    def test_pure_gain_is_zero_on_lattice(self, lattice_model):
        """Switching gains nothing at any fixed pair."""
        for i in range(len(lattice_model.space)):
            assert pure_switch_gain(lattice_model, PureState(i)) == 0.0

    def test_pure_report(self, lattice_model):
        """The pure report puts the naive value next to the zero gain and MLE pairs."""
        report = envelope_pure_report(
            single_pair_model(10.0, 20.0), PureState(0), alpha=20.0, mle_model=lattice_model
        )
        assert report["pure_switch_gain"] == 0.0
        assert report["expectation_you"] == 15.0
        assert report["expectation_host"] == 15.0
        assert report["naive"]["e_other"] == 25.0
        assert report["mle"]["maximizers"] == [[10.0, 20.0], [20.0, 40.0]]
        assert report["mle"]["maximizer_labels"] == [10.0, 20.0]
        assert report["mle"]["excluded_count"] == 28

    def test_negative_payout(self, small_space):
        """Payout maps must be non-negative."""
        with pytest.raises(DomainError, match="non-negative"):
            build_envelope_pair(small_space, lambda w: w - 3.0)

    def test_unknown_resolution(self, small_space):
        """Only exact and cell resolutions exist."""
        with pytest.raises(DomainError, match="resolution"):
            build_envelope_pair(small_space, resolution="coarse")

    def test_mixture_sampling_matches_law(self, lattice_model, stats_settings):
        """Sampled measured values pass chi-square under a prior."""
        mass = np.exp(-lattice_model.space.points / 5.0)
        prior = MixedState(space=lattice_model.space, mass=mass / mass.sum())
        d = outcome_distribution_statistical(lattice_model.observable, prior)
        indices = sample_indices(
            lattice_model.observable, prior, RngStream(stats_settings.seed), stats_settings.samples
        )
        assert goodness_of_fit(d, indices, stats_settings.significance).passed

    def test_quasi_product_sampling_matches_law(self, lattice_model, stats_settings):
        """Sampled (you, host) pairs pass chi-square."""
        state = PureState(9)
        d = outcome_distribution_pure(lattice_model.quasi, state)
        indices = sample_indices(
            lattice_model.quasi, state, RngStream(stats_settings.seed), stats_settings.samples
        )
        assert goodness_of_fit(d, indices, stats_settings.significance).passed


class TestLlnExperiment:
    """Repeated measurements of one fixed pair."""

    def test_averages_converge(self):
        """After 10^5 trials both averages are within 1% of 15."""
        record = lln_experiment(single_pair_model(10.0, 20.0), PureState(0), 100_000, RngStream(7))
        assert 14.85 <= record.statistics["avg_you"] <= 15.15
        assert 14.85 <= record.statistics["avg_host"] <= 15.15
        assert record.statistics["target"] == 15.0

    def test_averages_are_complementary(self):
        """The two running averages always sum to v1 + v2."""
        record = lln_experiment(single_pair_model(10.0, 20.0), PureState(0), 5000, RngStream(3))
        np.testing.assert_allclose(record.trace[:, 1] + record.trace[:, 2], 30.0, rtol=1e-12)

    def test_single_trial(self):
        """One trial shows one of the two amounts."""
        record = lln_experiment(single_pair_model(10.0, 20.0), PureState(0), 1, RngStream(1))
        assert record.trace.shape == (1, 3)
        assert {record.statistics["avg_you"], record.statistics["avg_host"]} == {10.0, 20.0}

    def test_replay_and_workers(self):
        """Records replay exactly for any thread count."""
        model = single_pair_model(10.0, 20.0)
        a = lln_experiment(model, PureState(0), 3000, RngStream(5), chunk_size=500, workers=1)
        b = lln_experiment(model, PureState(0), 3000, RngStream(5), chunk_size=500, workers=3)
        np.testing.assert_array_equal(a.trace, b.trace)
        assert a.stream_ids == b.stream_ids

    def test_zero_trials(self):
        """At least one trial is required."""
        with pytest.raises(DomainError):
            lln_experiment(single_pair_model(10.0, 20.0), PureState(0), 0, RngStream(1))


class TestBayesianModel:
    """The measured-value law under a prior density."""

    def test_measured_value_law_is_normalized(self, exponential_bayes):
        """The measured-value law sums to one."""
        model, prior = exponential_bayes
        d = outcome_distribution_statistical(model.observable, prior)
        assert abs(math.fsum(d.probs) - 1.0) < 1e-12

    def test_density_at_alpha(self, exponential_bayes):
        """The density at 2 is h(2)/2 + h(1)/4."""
        model, prior = exponential_bayes
        expected = 0.5 * math.exp(-2.0) + 0.25 * math.exp(-1.0)
        assert outcome_density(model, prior, 2.0) == pytest.approx(expected, rel=2e-3)

    def test_measured_value_expectation_on_grid(self, exponential_bayes):
        """On the lattice E[x] is 1.5 E[w] minus a quarter step."""
        model, prior = exponential_bayes
        expected = 1.5 * prior.mean() - model.space.step / 4
        assert measured_value_expectation(model, prior) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("density,hi", [
        (DensitySpec("expon"), 30.0),
        (DensitySpec("uniform"), 1.0),
        (DensitySpec("gamma", shape=2.0), 40.0),
    ])
    def test_measured_value_expectation_is_three_halves_mean(self, density, hi):
        """E[measured value] is 1.5 times the prior mean, within 1e-3."""
        model, prior = build_bayesian_envelope(density, 0.0, hi, 30000)
        assert abs(measured_value_expectation(model, prior) - 1.5 * density.mean()) <= 1e-3

    def test_tail_mass_recorded(self):
        """Prior mass beyond the grid is recorded."""
        _, prior = build_bayesian_envelope(DensitySpec("expon"), 0.0, 5.0, 500)
        assert prior.tail_mass == pytest.approx(math.exp(-5.0), rel=1e-9)

    def test_tail_mass_of_callable_density(self):
        """A plain density gets its discarded mass by quadrature."""
        _, prior = build_bayesian_envelope(lambda w: np.exp(-w), 0.0, 5.0, 500)
        assert prior.tail_mass == pytest.approx(math.exp(-5.0), rel=1e-6)

    def test_tail_mass_of_callable_below_grid(self):
        """Mass below a positive grid start counts as discarded too."""
        _, prior = build_bayesian_envelope(lambda w: np.exp(-w), 1.0, 6.0, 500)
        assert prior.tail_mass == pytest.approx(1.0 - math.exp(-1.0) + math.exp(-6.0), rel=1e-6)

    def test_unknown_tail_mass_is_logged(self, caplog):
        """A density whose tail cannot be integrated leaves a warning."""
        density = lambda w: np.where(np.asarray(w) > 6.0, np.nan, np.exp(-np.asarray(w)))
        with caplog.at_level(logging.WARNING, logger="src.envelope_models"):
            _, prior = build_bayesian_envelope(density, 0.0, 5.0, 500)
        assert prior.tail_mass == 0.0
        assert "unknown" in caplog.text

    def test_negative_grid(self):
        """Grids start at or above zero."""
        with pytest.raises(DomainError, match="non-negative"):
            build_bayesian_envelope(DensitySpec("expon"), -1.0, 5.0, 100)

    @pytest.mark.parametrize("kwargs", [
        {"name": "cauchy"},
        {"name": "expon", "scale": 0.0},
        {"name": "gamma"},
    ])
    def test_bad_density(self, kwargs):
        """Unknown families and bad parameters are rejected."""
        with pytest.raises(DomainError):
            DensitySpec(**kwargs)


class TestBayesianReport:
    """bayesian_envelope_report at one measured value."""

    def test_exponential_at_two(self, exponential_bayes):
        """Posterior weights and gain after finding 2 under Exp(1)."""
        model, prior = exponential_bayes
        report = bayesian_envelope_report(model, prior, 2.0, density=DensitySpec("expon"))
        w1 = (math.exp(-1) / 2) / (math.exp(-1) / 2 + math.exp(-2))

        assert report.posterior_weights["lower"]["pair"] == pytest.approx([1.0, 2.0])
        assert report.posterior_weights["lower"]["weight"] == pytest.approx(w1, abs=1e-6)
        assert report.posterior_weights["upper"]["weight"] == pytest.approx(1 - w1, abs=1e-6)
        assert report.posterior_weights["lower"]["weight"] == pytest.approx(0.576, abs=1e-3)
        assert report.conditional_gain == pytest.approx(0.272, abs=1e-3)
        assert abs(report.unconditional_gain) <= 1e-3
        assert report.prior_mean == 1.0

    def test_to_dict_fields(self, exponential_bayes):
        """Reports carry every documented field."""
        model, prior = exponential_bayes
        data = bayesian_envelope_report(model, prior, 2.0).to_dict()
        for key in ("p_alpha", "posterior_weights", "conditional_gain", "unconditional_gain",
                    "gain_error_bound", "measured_value_expectation", "prior"):
            assert key in data
        assert data["monte_carlo"] is None

    def test_off_grid_alpha(self, exponential_bayes):
        """An off-grid amount names the nearest grid values."""
        model, prior = exponential_bayes
        with pytest.raises(DomainError, match="nearest grid values"):
            bayesian_envelope_report(model, prior, 2.0005)

    def test_half_alpha_below_grid(self, exponential_bayes):
        """An amount whose half is below the grid is rejected."""
        model, prior = exponential_bayes
        with pytest.raises(DomainError, match="alpha/2"):
            bayesian_envelope_report(model, prior, model.space.step)

    def test_alpha_above_grid(self, exponential_bayes):
        """Above the grid only the lower pair remains."""
        model, prior = exponential_bayes
        report = bayesian_envelope_report(model, prior, 40.0)
        assert report.posterior_weights["lower"]["weight"] == 1.0
        assert report.posterior_weights["upper"]["weight"] == 0.0
        assert report.conditional_gain == pytest.approx(-20.0)

    def test_monte_carlo_cross_check(self, exponential_bayes):
        """10^6 simulated gains agree with the exact gain within 3 standard errors."""
        model, prior = exponential_bayes
        report = bayesian_envelope_report(model, prior, 2.0, trials=1_000_000, rng=RngStream(11))
        mc = report.monte_carlo
        assert mc.n == 1_000_000
        assert abs(mc.mean - report.unconditional_gain) <= 3 * mc.stderr
        assert report.seed == 11

    def test_monte_carlo_needs_rng(self, exponential_bayes):
        """Simulation needs an explicit random stream."""
        model, prior = exponential_bayes
        with pytest.raises(DomainError, match="RngStream"):
            bayesian_envelope_report(model, prior, 2.0, trials=10)
