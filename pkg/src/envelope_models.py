# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Two-envelope models.

A pair model identifies the state (w, 2w) with w: the smaller envelope holds
V1(w) dollars, the larger V2(w). The pure problem measures one fixed state;
the Bayesian problem puts a prior density h on w. The naive 1.25*alpha
argument is kept as an annotated operation so both answers can be shown
side by side.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import integrate, stats

from .errors import DomainError
from .inference import SwitchGainResult, bayes_posterior, fisher_mle, posterior_switch_gain
from .measure_core import (
    MixedState,
    PureState,
    StateSpace,
    check_state,
    evaluate_on_grid,
    find_point,
    make_uniform_grid,
    mixed_from_density,
    nearest_labels,
)
from .measurement import (
    DEFAULT_CHUNK_SIZE,
    ExperimentRecord,
    RngStream,
    expectation,
    lln_running_average,
    outcome_distribution_pure,
    outcome_distribution_statistical,
    sample_chunked,
)
from .observables import (
    Observable,
    cell_lift,
    iid_parallel,
    lift_values,
    marginal,
    mix_observables,
    quasi_product_envelope,
)

logger = logging.getLogger(__name__)

NAIVE_ANNOTATION = (
    "INVALID REASONING: gives the pairs (alpha/2, alpha) and (alpha, 2*alpha) "
    "probability 1/2 each after seeing alpha; no measurement of a fixed state "
    "produces that law, so 1.25*alpha is not an expectation of anything"
)

# Prior mass lost to truncation above which a warning is logged
TAIL_WARNING_THRESHOLD = 1e-3

# scipy.stats name -> name of its shape parameter (None if it has none)
SUPPORTED_DENSITIES: Dict[str, Optional[str]] = {
    "expon": None,
    "uniform": None,
    "halfnorm": None,
    "gamma": "a",
    "lognorm": "s",
    "pareto": "b",
}

Density = Union["DensitySpec", Callable[[Any], float]]


@dataclass(frozen=True)
class DensitySpec:
    """A named scipy.stats prior density on the amount w."""
    name: str = "expon"
    loc: float = 0.0
    scale: float = 1.0
    shape: Optional[float] = None

    def __post_init__(self):
        if self.name not in SUPPORTED_DENSITIES:
            raise DomainError(
                f"Unknown density '{self.name}' (use one of {', '.join(SUPPORTED_DENSITIES)})"
            )
        if not self.scale > 0:
            raise DomainError(f"Density scale must be positive, got {self.scale}")
        needs_shape = SUPPORTED_DENSITIES[self.name] is not None
        if needs_shape and (self.shape is None or not self.shape > 0):
            raise DomainError(f"Density '{self.name}' needs a positive shape parameter")

    def frozen(self):
        """The frozen scipy.stats distribution."""
        family = getattr(stats, self.name)
        if SUPPORTED_DENSITIES[self.name] is None:
            return family(loc=self.loc, scale=self.scale)
        return family(self.shape, loc=self.loc, scale=self.scale)

    def pdf(self, w):
        return self.frozen().pdf(w)

    def mean(self) -> float:
        return float(self.frozen().mean())

    def outside_mass(self, lo: float, hi: float) -> float:
        """Prior probability outside (lo, hi]."""
        dist = self.frozen()
        return float(dist.cdf(lo) + dist.sf(hi))

    def to_dict(self) -> dict:
        return {"name": self.name, "loc": self.loc, "scale": self.scale, "shape": self.shape}


def callable_outside_mass(pdf: Callable[[float], float], lo: float, hi: float) -> Optional[float]:
    """
    Mass of a plain density on (0, lo] and (hi, inf), by adaptive quadrature.

    Returns None when the quadrature fails or does not converge.
    """
    def f(w: float) -> float:
        return float(pdf(w))

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            upper, _ = integrate.quad(f, hi, np.inf, limit=200)
            lower = integrate.quad(f, 0.0, lo, limit=200)[0] if lo > 0 else 0.0
    except (integrate.IntegrationWarning, ArithmeticError, ValueError, TypeError) as e:
        logger.debug(f"Tail quadrature failed: {e}")
        return None
    if not (math.isfinite(upper) and math.isfinite(lower)):
        return None
    return max(upper + lower, 0.0)


@dataclass(frozen=True, eq=False)
class EnvelopePairModel:
    """
    Envelope pair over the amount w in the smaller envelope.

    observable mixes the lifts of V1 and V2 half and half; quasi is the
    (you, host) quasi-product. resolution is "exact" for point lifts and
    "cell" for cell-resolved lifts on a right-aligned lattice.
    """
    space: StateSpace
    v1: np.ndarray
    v2: np.ndarray
    observable: Observable
    quasi: Observable
    resolution: str = "exact"

    def pair(self, state: PureState) -> Tuple[float, float]:
        """(V1(w), V2(w)) at a grid state."""
        check_state(self.space, state)
        return float(self.v1[state.index]), float(self.v2[state.index])


def build_envelope_pair(
    space: StateSpace,
    v1: Optional[Callable[[Any], float]] = None,
    v2: Optional[Callable[[Any], float]] = None,
    resolution: str = "exact",
    align: str = "right",
) -> EnvelopePairModel:
    """
    Build the pair model from payout maps (defaults V1(w) = w, V2 = 2*V1).

    resolution="cell" spreads each lifted cell over outcome bins of the grid
    step, which keeps the measured-value law a density on the lattice.
    """
    v1_map = v1 if v1 is not None else (lambda w: w)
    v1_values = evaluate_on_grid(space, v1_map)
    v2_values = evaluate_on_grid(space, v2) if v2 is not None else 2.0 * v1_values
    if np.any(v1_values < 0) or np.any(v2_values < 0):
        raise DomainError("Envelope payouts must be non-negative")

    first, second = lift_values(space, v1_values), lift_values(space, v2_values)
    if resolution == "exact":
        observable = mix_observables([first, second], [0.5, 0.5])
    elif resolution == "cell":
        v2_map = v2 if v2 is not None else (lambda w: 2.0 * np.asarray(v1_map(w), dtype=float))
        observable = mix_observables(
            [cell_lift(space, v1_map, align=align), cell_lift(space, v2_map, align=align)],
            [0.5, 0.5],
        )
    else:
        raise DomainError(f"Unknown lift resolution '{resolution}' (use 'exact' or 'cell')")

    logger.debug(f"Envelope model ({resolution}): {len(space)} states, {observable.num_outcomes} outcomes")
    return EnvelopePairModel(
        space=space,
        v1=v1_values,
        v2=v2_values,
        observable=observable,
        quasi=quasi_product_envelope(first, second),
        resolution=resolution,
    )


def single_pair_model(v1: float, v2: float) -> EnvelopePairModel:
    """One fixed state whose envelopes hold v1 and v2 dollars."""
    if not (math.isfinite(v1) and math.isfinite(v2)):
        raise DomainError(f"Payouts must be finite, got ({v1}, {v2})")
    space = StateSpace(points=np.array([min(v1, v2)]), weights=np.array([1.0]))
    return build_envelope_pair(space, lambda w: v1, lambda w: v2)


@dataclass
class NaiveExpectation:
    """The 1.25*alpha computation, carried with its annotation."""
    alpha: float
    e_other: float
    annotation: str = NAIVE_ANNOTATION

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "e_other": self.e_other, "annotation": self.annotation}


def naive_other_expectation(alpha: float) -> NaiveExpectation:
    """(1/2)(alpha/2) + (1/2)(2*alpha). Deliberately wrong; see NAIVE_ANNOTATION."""
    if not (isinstance(alpha, (int, float)) and math.isfinite(alpha)) or alpha < 0:
        raise DomainError(f"alpha must be a finite non-negative amount, got {alpha!r}")
    e_other = 0.5 * (alpha / 2) + 0.5 * (2 * alpha)
    return NaiveExpectation(alpha=float(alpha), e_other=e_other)


def pure_switch_gain(model: EnvelopePairModel, state: PureState) -> float:
    """Expected host-minus-you payout at a fixed state, summed term by term."""
    d = outcome_distribution_pure(model.quasi, state)
    return math.fsum(p * (host - you) for (you, host), p in zip(d.outcomes, d.probs))


def lln_experiment(
    model: EnvelopePairModel,
    state: PureState,
    n: int,
    rng: RngStream,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> ExperimentRecord:
    """
    Repeat the quasi-product measurement n times at one state.

    Both running averages head for (V1 + V2)/2; the trace keeps them at
    every step.

    Returns:
        ExperimentRecord whose trace rows are (step, your average, host average).
    """
    if n < 1:
        raise DomainError(f"Trial count must be at least 1, got {n}")
    parallel = iid_parallel(model.quasi, n, materialize=False)
    draws, streams = sample_chunked(parallel, state, rng, 1, chunk_size, workers)
    pairs = draws[0]

    avg_you = lln_running_average(pairs[:, 0])
    avg_host = lln_running_average(pairs[:, 1])
    v1, v2 = model.pair(state)

    trace = np.column_stack([np.arange(1, n + 1, dtype=float), avg_you, avg_host])
    logger.info(f"LLN experiment: {n} trials, final averages {avg_you[-1]:.4f} / {avg_host[-1]:.4f}")
    return ExperimentRecord(
        kind="envelope-lln",
        seed=rng.seed,
        stream_ids=streams,
        parameters={"v1": v1, "v2": v2, "trials": n, "chunk_size": chunk_size},
        statistics={
            "avg_you": float(avg_you[-1]),
            "avg_host": float(avg_host[-1]),
            "target": (v1 + v2) / 2,
        },
        trace_columns=("n", "avg_you", "avg_host"),
        trace=trace,
    )


def build_bayesian_envelope(
    density: Density, lo: float = 0.0, hi: float = 30.0, n: int = 30000
) -> Tuple[EnvelopePairModel, MixedState]:
    """
    Cell-resolved pair model on the right-aligned lattice over (lo, hi],
    plus the prior built from density. The mass outside the grid is recorded
    on the prior: exactly for a DensitySpec, by quadrature for a callable.
    """
    if lo < 0:
        raise DomainError(f"Amounts are non-negative; grid lo must be >= 0, got {lo}")
    space = make_uniform_grid(lo, hi, n, align="right")
    pdf = density.pdf if isinstance(density, DensitySpec) else density
    prior = mixed_from_density(space, pdf)

    if isinstance(density, DensitySpec):
        name, tail = density.name, density.outside_mass(lo, hi)
    else:
        name, tail = getattr(density, "__name__", "callable"), callable_outside_mass(density, lo, hi)

    if tail is None:
        logger.warning(f"Prior '{name}' truncated to ({lo}, {hi}]: mass outside the grid is unknown")
    else:
        prior = prior.with_tail_mass(tail)
        log = logger.warning if tail > TAIL_WARNING_THRESHOLD else logger.info
        log(f"Prior '{name}' truncated to ({lo}, {hi}]: {tail:.3g} mass outside the grid")

    model = build_envelope_pair(space, resolution="cell", align="right")
    logger.info(f"Bayesian envelope model on {n} cells, {model.observable.num_outcomes} outcomes")
    return model, prior


def measured_value_expectation(model: EnvelopePairModel, prior: MixedState) -> float:
    """Expected measured value under the prior."""
    return expectation(outcome_distribution_statistical(model.observable, prior))


def outcome_density(model: EnvelopePairModel, prior: MixedState, alpha: float) -> float:
    """Density of the measured value at alpha: bin probability over bin width."""
    label = _outcome_label(model, alpha)
    prob = outcome_distribution_statistical(model.observable, prior).prob(label)
    return prob / model.space.step


def _outcome_label(model: EnvelopePairModel, alpha: float) -> float:
    label = model.observable.nearest_outcome(alpha)
    if label is None:
        raise DomainError(
            f"alpha={alpha} is not a measured value of this grid; "
            f"nearest grid values are {nearest_labels(model.space, alpha)}"
        )
    return label


@dataclass
class MonteCarloGain:
    """Simulated switching gains: mean, standard error and sample count."""
    mean: float
    stderr: float
    n: int
    stream_ids: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n, "stream_ids": self.stream_ids}


def simulate_switch_gains(
    model: EnvelopePairModel,
    prior: MixedState,
    n: int,
    rng: RngStream,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> MonteCarloGain:
    """Draw (state ~ prior, (you, host) ~ quasi-product) and average host - you."""
    pairs, streams = sample_chunked(model.quasi, prior, rng, n, chunk_size, workers)
    gains = pairs[:, 1] - pairs[:, 0]
    stderr = float(np.std(gains, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MonteCarloGain(mean=math.fsum(gains) / n, stderr=stderr, n=n, stream_ids=streams)


@dataclass
class BayesianEnvelopeReport:
    """Measured-value density, posterior and switching gains at one alpha."""
    alpha: float
    p_alpha: float
    prob_alpha: float
    posterior_weights: Dict[str, Dict[str, Any]]
    conditional_gain: float
    switch: SwitchGainResult
    measured_value_expectation: float
    prior_mean: float
    grid: Dict[str, Any]
    prior: Dict[str, Any]
    model: Dict[str, Any] = field(default_factory=dict)
    monte_carlo: Optional[MonteCarloGain] = None
    seed: Optional[int] = None

    @property
    def unconditional_gain(self) -> float:
        return self.switch.gain

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "grid": self.grid,
            "prior": self.prior,
            "alpha": self.alpha,
            "p_alpha": self.p_alpha,
            "prob_alpha": self.prob_alpha,
            "posterior_weights": self.posterior_weights,
            "conditional_gain": self.conditional_gain,
            "unconditional_gain": self.switch.gain,
            "gain_error_bound": self.switch.error_bound,
            "divergence_warning": self.switch.warning,
            "measured_value_expectation": self.measured_value_expectation,
            "prior_mean": self.prior_mean,
            "monte_carlo": self.monte_carlo.to_dict() if self.monte_carlo else None,
            "seed": self.seed,
        }


def bayesian_envelope_report(
    model: EnvelopePairModel,
    prior: MixedState,
    alpha: float,
    density: Optional[DensitySpec] = None,
    trials: int = 0,
    rng: Optional[RngStream] = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> BayesianEnvelopeReport:
    """
    Posterior after measuring alpha, with the conditional and aggregate
    switching gains. alpha/2 must be a grid state; alpha itself may lie
    above the grid, in which case the upper pair has weight 0.

    Args:
        model: Cell-resolved pair model from build_bayesian_envelope.
        prior: Prior on the amount in the smaller envelope.
        alpha: Amount found in the opened envelope.
        density: Prior description to embed in the report.
        trials: Monte Carlo draws for the cross-check (0 skips it).
        rng: Random stream; required when trials > 0.
        chunk_size: Draws per random stream.
        workers: Sampling threads; results do not depend on it.

    Returns:
        BayesianEnvelopeReport with posterior weights, both gains and the
        optional Monte Carlo estimate.

    Raises:
        DomainError: If alpha or alpha/2 is not on the grid.
    """
    label = _outcome_label(model, alpha)
    lower = find_point(model.space, label / 2)
    if lower is None:
        raise DomainError(
            f"alpha/2={label / 2} is not a grid state; "
            f"nearest grid values are {nearest_labels(model.space, label / 2)}"
        )
    upper = find_point(model.space, label)

    posterior = bayes_posterior(model.observable, prior, label)
    w1 = float(posterior.mass[lower])
    w2 = float(posterior.mass[upper]) if upper is not None else 0.0
    stray = 1.0 - (w1 + w2)
    if abs(stray) > 1e-9:
        logger.warning(f"Posterior at alpha={label} puts {stray:.3g} outside its two atoms")

    prior_mean = density.mean() if density is not None else prior.mean()
    switch = posterior_switch_gain(model.observable, prior, prior_mean=prior_mean)
    dist = outcome_distribution_statistical(model.observable, prior)
    prob_alpha = dist.prob(label)

    monte_carlo = None
    if trials > 0:
        if rng is None:
            raise DomainError("Monte Carlo cross-check needs an RngStream")
        monte_carlo = simulate_switch_gains(model, prior, trials, rng, chunk_size, workers)

    step = model.space.step
    return BayesianEnvelopeReport(
        alpha=label,
        p_alpha=prob_alpha / step,
        prob_alpha=prob_alpha,
        posterior_weights={
            "lower": {"pair": [label / 2, label], "weight": w1},
            "upper": {"pair": [label, 2 * label], "weight": w2},
        },
        conditional_gain=switch.conditional_gain(label),
        switch=switch,
        measured_value_expectation=expectation(dist),
        prior_mean=prior_mean,
        grid={
            "lo": float(model.space.points[0] - step),
            "hi": float(model.space.points[-1]),
            "n": len(model.space),
            "align": "right",
        },
        prior={
            "density": density.to_dict() if density is not None else None,
            "normalizer": prior.normalizer,
            "tail_mass": prior.tail_mass,
            "grid_mean": prior.mean(),
        },
        model={"v2": "2*v1", "resolution": model.resolution},
        monte_carlo=monte_carlo,
        seed=rng.seed if (rng is not None and trials > 0) else None,
    )


def envelope_pure_report(
    model: EnvelopePairModel,
    state: PureState,
    alpha: Optional[float] = None,
    mle_model: Optional[EnvelopePairModel] = None,
) -> dict:
    """
    The fixed-state problem in one record: the measured-value law, the zero
    switching gain, both parties' expectations, and (given alpha) the naive
    1.25*alpha next to the two maximum-likelihood pairs.
    """
    you = expectation(outcome_distribution_pure(marginal(model.quasi, 0), state))
    host = expectation(outcome_distribution_pure(marginal(model.quasi, 1), state))
    v1, v2 = model.pair(state)
    report = {
        "model": {"v1": v1, "v2": v2},
        "distribution": outcome_distribution_pure(model.observable, state).to_dict(),
        "pure_switch_gain": pure_switch_gain(model, state),
        "expectation_you": you,
        "expectation_host": host,
    }

    if alpha is not None:
        report["naive"] = naive_other_expectation(alpha).to_dict()
        if mle_model is not None:
            label = _outcome_label(mle_model, alpha)
            mle = fisher_mle(mle_model.observable, label)
            report["mle"] = {
                **mle.to_dict(mle_model.space),
                "alpha": label,
                "maximizers": [
                    list(mle_model.pair(s)) for s in sorted(mle.maximizers, key=lambda s: s.index)
                ],
            }
    return report
