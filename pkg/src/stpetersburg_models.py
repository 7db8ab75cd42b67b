# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
St. Petersburg two-envelope models.

Each envelope holds 2^k dollars with probability 2^-k. The series is
truncated at k_max and renormalised; the discarded tail 2^-k_max is kept on
the model. The pure formulation is one state with effect 2^-k on 2^k, the
statistical one a prior over states 2^k read by an identity observable, and
the pin labeling a prior over the pins (2^-k, 2^(1-k)] of (0, 1].
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResourceError
from .measure_core import MixedState, PureState, StateSpace, mixed_from_density, product_mixed
from .measurement import (
    DEFAULT_CHUNK_SIZE,
    ExperimentRecord,
    OutcomeDistribution,
    RngStream,
    chunk_plan,
    outcome_distribution,
    sample_chunked,
)
from .observables import (
    DEFAULT_MAX_TABLE_CELLS,
    Observable,
    deterministic_observable,
    lift_values,
    product_observable,
)

logger = logging.getLogger(__name__)

# Deepest truncation whose masses stay exact binary fractions
MAX_K = 60
FORMULATIONS = ("pure", "statistical")
LABELINGS = ("coin", "pin")

# Window of far terms used to decide whether an untruncated series converges.
# Only a term ratio at most CONVERGENCE_RATIO across the whole window counts
# as convergence; anything slower is reported as divergent.
DIVERGENCE_START_K = 200
DIVERGENCE_WINDOW = 8
CONVERGENCE_RATIO = 0.99
LIMIT_TERMS = 1000


def _check_depth(k_max: int) -> int:
    if isinstance(k_max, bool) or int(k_max) != k_max or not 1 <= k_max <= MAX_K:
        raise DomainError(f"k_max must be an integer in [1, {MAX_K}], got {k_max!r}")
    return int(k_max)


def raw_masses(k_max: int) -> Tuple[Fraction, ...]:
    """Untruncated masses 2^-k for k = 1..k_max."""
    return tuple(Fraction(1, 2 ** k) for k in range(1, _check_depth(k_max) + 1))


def normalized_masses(k_max: int) -> np.ndarray:
    """Masses renormalised over k <= k_max, each rounded once from the exact value."""
    total = 1 - Fraction(1, 2 ** _check_depth(k_max))
    return np.array([float(m / total) for m in raw_masses(k_max)])


@dataclass(frozen=True, eq=False)
class StPetersburgModel:
    """One envelope of the St. Petersburg game, in one formulation."""
    k_max: int
    formulation: str
    labeling: str
    observable: Observable
    state: Optional[PureState] = None
    prior: Optional[MixedState] = None

    @property
    def raw_masses(self) -> Tuple[Fraction, ...]:
        return raw_masses(self.k_max)

    @property
    def tail_mass(self) -> Fraction:
        return Fraction(1, 2 ** self.k_max)

    @property
    def payouts(self) -> List[int]:
        return [2 ** k for k in range(1, self.k_max + 1)]

    def distribution(self) -> OutcomeDistribution:
        """Law of the amount found in one envelope."""
        return outcome_distribution(self.observable, self.state if self.prior is None else self.prior)

    def measured_state(self):
        return self.state if self.prior is None else self.prior

    def describe(self) -> dict:
        return {
            "k_max": self.k_max,
            "formulation": self.formulation,
            "labeling": self.labeling,
            "tail_mass": float(self.tail_mass),
        }


def build_stp(formulation: str, k_max: int, labeling: str = "coin") -> StPetersburgModel:
    """
    Build one envelope truncated at k_max.

    labeling="pin" is only a statistical parameterisation: the states are
    the pins ordered by position, pin k weighted by its length 2^-k.

    Args:
        formulation: "pure" (one state, outcome law from the coin) or
            "statistical" (one state per outcome, prior 2^-k).
        k_max: Truncation depth, 1..MAX_K.
        labeling: "coin" or "pin".

    Returns:
        The StPetersburgModel.
    """
    k_max = _check_depth(k_max)
    if formulation not in FORMULATIONS:
        raise DomainError(f"Unknown formulation '{formulation}' (use 'pure' or 'statistical')")
    if labeling not in LABELINGS:
        raise DomainError(f"Unknown labeling '{labeling}' (use 'coin' or 'pin')")
    if labeling == "pin" and formulation != "statistical":
        raise DomainError("The pin labeling needs the statistical formulation")

    masses = normalized_masses(k_max)
    payouts = np.array([float(2 ** k) for k in range(1, k_max + 1)])

    if formulation == "pure":
        space = StateSpace(points=np.array([0.0]), weights=np.array([1.0]))
        effects = sp.csr_matrix(masses.reshape(1, -1))
        observable = Observable(space=space, outcomes=tuple(payouts), effects=effects)
        model = StPetersburgModel(k_max, formulation, labeling, observable, state=PureState(0))
    elif labeling == "coin":
        space = StateSpace(points=payouts, weights=np.ones(k_max))
        observable = deterministic_observable(space, lambda w: w)
        prior = MixedState(space=space, mass=masses).with_tail_mass(2.0 ** -k_max)
        model = StPetersburgModel(k_max, formulation, labeling, observable, prior=prior)
    else:
        # Pins sorted by position: pin k_max first, pin 1 = (1/2, 1] last
        depth = np.arange(k_max, 0, -1)
        lengths = 2.0 ** -depth
        space = StateSpace(points=1.5 * lengths, weights=lengths)
        observable = lift_values(space, 2.0 ** depth)
        prior = mixed_from_density(space, lambda w: 1.0).with_tail_mass(2.0 ** -k_max)
        model = StPetersburgModel(k_max, formulation, labeling, observable, prior=prior)

    logger.debug(f"St. Petersburg model: {formulation}/{labeling}, k_max={k_max}")
    return model


@dataclass
class TruncatedExpectation:
    """
    Partial sum of payoff(2^k) * 2^-k for k <= k_max, before renormalisation.

    divergent says whether the untruncated series diverges; limit is its sum
    when it does not. conclusive is False when the far terms decay too slowly
    to tell, in which case divergent is True and no limit is given.
    """
    partial_sum: float
    divergent: bool
    k_max: int
    limit: Optional[float] = None
    exact: Optional[Fraction] = None
    conclusive: bool = True

    def to_dict(self) -> dict:
        return {
            "partial_sum": self.partial_sum,
            "divergence_flag": self.divergent,
            "divergence_conclusive": self.conclusive,
            "k_max": self.k_max,
            "limit": self.limit,
        }


def _term(payoff: Callable[[int], Any], k: int) -> float:
    return payoff(2 ** k) / 2 ** k


def _tail_behaviour(payoff: Callable[[int], Any]) -> Tuple[bool, bool]:
    """(divergent, conclusive) from the far terms of sum payoff(2^k) 2^-k."""
    far = range(DIVERGENCE_START_K, DIVERGENCE_START_K + DIVERGENCE_WINDOW + 1)
    try:
        window = [abs(float(_term(payoff, k))) for k in far]
    except OverflowError:
        return True, True
    if not all(math.isfinite(t) for t in window):
        return True, True
    if all(t == 0 for t in window):
        return False, True
    if any(t == 0 for t in window):
        return True, False
    ratios = [b / a for a, b in zip(window, window[1:])]
    if max(ratios) <= CONVERGENCE_RATIO:
        return False, True
    # Terms that do not shrink at all diverge; slower decay is undecided
    if min(ratios) >= 1.0 - 1e-12:
        return True, True
    return True, False


def stp_truncated_expectation(
    model: StPetersburgModel, payoff: Optional[Callable[[int], Any]] = None
) -> TruncatedExpectation:
    """
    Truncated expectation of payoff(amount), with a divergence verdict.

    Integer or Fraction payoffs give an exact partial sum. The verdict looks
    at a window of far terms: ratios at most CONVERGENCE_RATIO mean the sum
    converges, ratios at or above one (or overflow) mean it diverges, and
    anything in between is reported divergent but inconclusive, with no limit.

    Args:
        model: Truncated St. Petersburg model.
        payoff: Map from amount to value; the identity when not given.

    Returns:
        TruncatedExpectation with the partial sum and the verdict.
    """
    payoff = payoff if payoff is not None else (lambda x: x)
    terms = [payoff(2 ** k) for k in range(1, model.k_max + 1)]

    if all(isinstance(v, (int, Fraction)) for v in terms):
        exact = sum(
            (Fraction(v) * m for v, m in zip(terms, model.raw_masses)), Fraction(0)
        )
        partial = float(exact)
    else:
        exact = None
        partial = math.fsum(float(v) * float(m) for v, m in zip(terms, model.raw_masses))

    divergent, conclusive = _tail_behaviour(payoff)

    limit = None
    if divergent and not conclusive:
        logger.warning(
            f"Far terms decay too slowly to decide convergence; treating the expectation as "
            f"divergent and reporting the partial sum {partial} at k_max={model.k_max}"
        )
    elif divergent:
        logger.warning(f"Expectation diverges; reporting the partial sum {partial} at k_max={model.k_max}")
    else:
        limit = math.fsum(float(_term(payoff, k)) for k in range(1, LIMIT_TERMS + 1))

    return TruncatedExpectation(
        partial_sum=partial,
        divergent=divergent,
        k_max=model.k_max,
        limit=limit,
        exact=exact,
        conclusive=conclusive,
    )


@dataclass
class ProbabilityCriterion:
    """P(other envelope > 2^m): exact, truncated and (optionally) sampled."""
    m: int
    exact: Fraction
    truncated: Optional[float] = None
    empirical: Optional[float] = None
    stderr: Optional[float] = None
    samples: int = 0
    k_max: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "prob_other_greater_exact": float(self.exact),
            "prob_other_greater_truncated": self.truncated,
            "prob_other_greater_empirical": self.empirical,
            "stderr": self.stderr,
            "samples": self.samples,
        }


def truncated_prob_greater(m: int, k_max: int) -> Fraction:
    """P(amount > 2^m) in the model renormalised over k <= k_max."""
    if m >= k_max:
        return Fraction(0)
    tail = Fraction(1, 2 ** k_max)
    return (Fraction(1, 2 ** m) - tail) / (1 - tail)


def stp_prob_other_greater(
    m: int,
    k_max: Optional[int] = None,
    samples: int = 0,
    rng: Optional[RngStream] = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> ProbabilityCriterion:
    """
    Probability that the unopened envelope beats 2^m: exactly 2^-m.

    With samples > 0 the frequency is also estimated from draws of a model
    truncated at k_max (MAX_K when not given).

    Args:
        m: Exponent of the amount found, at least 1.
        k_max: Truncation depth for the truncated probability and sampling.
        samples: Number of draws for the empirical frequency.
        rng: Random stream; required when samples > 0.

    Returns:
        ProbabilityCriterion with the exact, truncated and sampled values.
    """
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise DomainError(f"m must be an integer >= 1, got {m!r}")
    m = int(m)
    exact = Fraction(1, 2 ** m)
    result = ProbabilityCriterion(m=m, exact=exact, k_max=k_max)
    if k_max is not None:
        result.truncated = float(truncated_prob_greater(m, _check_depth(k_max)))

    if samples > 0:
        if rng is None:
            raise DomainError("Sampling the probability criterion needs an RngStream")
        depth = k_max if k_max is not None else MAX_K
        model = build_stp("pure", depth)
        draws, _ = sample_chunked(model.observable, model.state, rng, samples, chunk_size, workers)
        result.empirical = float(np.mean(draws > 2.0 ** m))
        result.stderr = math.sqrt(float(exact) * (1 - float(exact)) / samples)
        result.samples = samples
    return result


def switch_verdict(m: int, k_max: int) -> Dict[str, str]:
    """Both criteria for keeping or switching after finding 2^m."""
    return {
        "expectation_criterion": (
            f"switch: E(y) diverges (partial sum {k_max} at k_max={k_max}, still growing by 1 per term) "
            f"and exceeds {2 ** m}"
        ),
        "probability_criterion": f"P(y > {2 ** m}) = 2^-{m} = {1 / 2 ** m:g}",
        "truncation_caveat": (
            f"samples come from a model truncated at k_max={k_max} "
            f"(tail mass 2^-{k_max}); empirical means are finite"
        ),
    }


def _pair_draws(
    model: StPetersburgModel,
    n: int,
    rng: RngStream,
    chunk_size: int,
    workers: int,
    max_cells: int,
) -> Tuple[np.ndarray, np.ndarray, List[int], str]:
    """(x, y) draws from the product observable, or from measuring twice."""
    try:
        product = product_observable(model.observable, model.observable, max_cells)
    except ResourceError:
        product = None

    if product is not None:
        if model.prior is None:
            state = PureState(0)
        else:
            state = product_mixed(model.prior, model.prior)
        pairs, streams = sample_chunked(product, state, rng, n, chunk_size, workers)
        return pairs[:, 0], pairs[:, 1], streams, "product"

    source = model.measured_state()
    x, first = sample_chunked(model.observable, source, rng, n, chunk_size, workers)
    second_rng = rng.substream(len(chunk_plan(n, chunk_size)))
    y, second = sample_chunked(model.observable, source, second_rng, n, chunk_size, workers)
    return x, y, first + second, "twice"


def stp_parallel_experiment(
    model: StPetersburgModel,
    n: int,
    rng: RngStream,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
    max_cells: int = DEFAULT_MAX_TABLE_CELLS,
    m: int = 3,
) -> ExperimentRecord:
    """
    n independent (x, y) pairs: overall P(y > x), and per observed x = 2^m
    the count, mean of y and frequency of y > 2^m against its exact value.
    The statistics carry the switch verdict for an observed 2^m and the
    truncation caveat.
    """
    if n < 1:
        raise DomainError(f"Trial count must be at least 1, got {n}")
    x, y, streams, method = _pair_draws(model, n, rng, chunk_size, workers, max_cells)

    p_y = float(np.mean(y > x))
    p_x = float(np.mean(x > y))
    rows = []
    for k in range(1, model.k_max + 1):
        mask = x == 2.0 ** k
        count = int(mask.sum())
        if count == 0:
            continue
        y_given = y[mask]
        rows.append([
            k,
            count,
            float(y_given.mean()),
            float(np.mean(y_given > 2.0 ** k)),
            float(truncated_prob_greater(k, model.k_max)),
        ])

    logger.info(f"St. Petersburg pairs: n={n} ({method}), P(y>x)={p_y:.4f}, P(x>y)={p_x:.4f}")
    return ExperimentRecord(
        kind="stpetersburg",
        seed=rng.seed,
        stream_ids=streams,
        parameters={**model.describe(), "trials": n, "chunk_size": chunk_size, "method": method},
        statistics={
            "p_y_greater": p_y,
            "p_x_greater": p_x,
            "p_equal": float(np.mean(x == y)),
            "stderr": math.sqrt(max(p_y * (1 - p_y), 1e-12) / n),
            "switch_verdict": switch_verdict(m, model.k_max),
        },
        trace_columns=("m", "count", "mean_y", "p_y_greater", "p_y_greater_exact"),
        trace=np.array(rows, dtype=float).reshape(-1, 5),
    )
