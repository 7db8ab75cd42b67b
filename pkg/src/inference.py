# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
State inference from a measured value: Fisher maximum likelihood on a pure
state, Bayes updating of a mixed state, and the posterior switching gain of
an envelope mixture.
"""

import logging
import math
import sys
from dataclasses import dataclass
from typing import Any, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .measure_core import Label, MixedState, PureState, StateSpace
from .observables import Observable

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MleResult:
    """Maximizers of the normalized likelihood of one measured value."""
    outcome: Any
    maximizers: FrozenSet[PureState]
    likelihood: np.ndarray
    excluded: np.ndarray

    def labels(self, space: StateSpace) -> List[Label]:
        """Maximizer labels in grid order."""
        return [space.label(s.index) for s in sorted(self.maximizers, key=lambda s: s.index)]

    def to_dict(self, space: StateSpace) -> dict:
        return {
            "outcome": self.outcome,
            "maximizer_labels": self.labels(space),
            "excluded_count": int(self.excluded.size),
        }


def normalized_likelihood(column: np.ndarray) -> np.ndarray:
    """f(x, w_i) = e[i][x] / sup_j e[j][x]; exactly 1 on every maximizer."""
    column = np.asarray(column, dtype=float)
    sup = float(column.max()) if column.size else 0.0
    if sup <= 0:
        raise DomainError("Measured value has zero effect at every state")
    return column / sup


def fisher_mle(o: Observable, x: Any) -> MleResult:
    """
    Fisher maximum likelihood on a finite alphabet.

    Ties are returned as a set; nothing breaks them.

    Raises:
        DomainError: If x is outside the alphabet or has zero likelihood everywhere.
    """
    if not o.has_outcome(x):
        raise DomainError(f"Measured value {x!r} is not in the observable's alphabet")
    column = o.column(x)
    if not column.max() > 0:
        raise DomainError(f"Measured value {x!r} is never produced by any state")

    likelihood = normalized_likelihood(column)
    maximizers = frozenset(PureState(int(i)) for i in np.flatnonzero(likelihood == 1.0))
    excluded = np.flatnonzero(likelihood == 0.0)
    logger.debug(f"MLE for {x!r}: {len(maximizers)} maximizers, {excluded.size} states excluded")
    return MleResult(outcome=x, maximizers=maximizers, likelihood=likelihood, excluded=excluded)


def bayes_posterior(o: Observable, prior: MixedState, x: Any) -> MixedState:
    """
    Bayes update of a prior on one measured value.

    posterior_i = prior_i * e[i][x] / sum_j prior_j * e[j][x].

    Args:
        o: Observable that produced the value.
        prior: Mixed state on the observable's space.
        x: Measured value; must be in the observable's alphabet.

    Returns:
        The posterior MixedState.

    Raises:
        DomainError: If x is unknown or has zero probability under the prior.
    """
    if not prior.space.matches(o.space):
        raise DomainError("Prior and observable live on different state spaces")
    if not o.has_outcome(x):
        raise DomainError(f"Measured value {x!r} is not in the observable's alphabet")

    joint = prior.mass * o.column(x)
    evidence = math.fsum(joint)
    if evidence <= 0:
        raise DomainError(f"Measured value {x!r} has zero probability under the prior")
    return MixedState(space=prior.space, mass=joint / evidence)


def sequential_posterior(
    prior: MixedState, observations: Sequence[Tuple[Observable, Any]]
) -> MixedState:
    """Fold bayes_posterior over (observable, measured value) pairs in order."""
    posterior = prior
    for o, x in observations:
        posterior = bayes_posterior(o, posterior, x)
    return posterior


@dataclass
class SwitchGainResult:
    """
    Expected switching gain of an envelope mixture under a prior.

    conditional_gains[j] is E[other - mine | measured value = outcomes[j]],
    0 where that value has probability 0.
    """
    gain: float
    error_bound: float
    outcomes: Tuple[Any, ...]
    outcome_probs: np.ndarray
    conditional_gains: np.ndarray
    tail_mass: float = 0.0
    divergent: bool = False
    warning: Optional[str] = None

    def conditional_gain(self, x: Any) -> float:
        return float(self.conditional_gains[self.outcomes.index(x)])

    def to_dict(self) -> dict:
        return {
            "gain": self.gain,
            "error_bound": self.error_bound,
            "tail_mass": self.tail_mass,
            "divergent": self.divergent,
            "warning": self.warning,
        }


def _components(o: Observable) -> Tuple[Tuple[float, Observable], Tuple[float, Observable]]:
    if len(o.components) != 2 or any(part.values is None for _, part in o.components):
        raise DomainError("Switching gain needs a two-part mixture of lifted payout maps")
    return o.components[0], o.components[1]


def posterior_switch_gain(
    o: Observable, prior: MixedState, prior_mean: Optional[float] = None
) -> SwitchGainResult:
    """
    Expected gain of switching, aggregated over every measured value.

    Each (state, part, outcome) entry contributes prior mass * weight * effect
    times the gain of holding that part's payout: V2 - V1 when the first
    part produced the value, V1 - V2 when the second did.

    Args:
        o: Two-part mixture of deterministic lifts, V1 then V2.
        prior: Mixed state on the observable's space.
        prior_mean: Mean of the untruncated prior, if known. An infinite
            mean sets the divergence flag.

    Returns:
        SwitchGainResult with the total gain, its error bound and the
        conditional gain per measured value.
    """
    if not prior.space.matches(o.space):
        raise DomainError("Prior and observable live on different state spaces")
    (w1, first), (w2, second) = _components(o)
    v1, v2 = first.values, second.values

    probs, gains, cols = [], [], []
    for weight, part, gain in ((w1, first, v2 - v1), (w2, second, v1 - v2)):
        coo = part.effects.tocoo()
        remap = np.array([o.index_of(x) for x in part.outcomes], dtype=np.int64)
        probs.append(prior.mass[coo.row] * weight * coo.data)
        gains.append(gain[coo.row])
        cols.append(remap[coo.col])
    probs, gains, cols = np.concatenate(probs), np.concatenate(gains), np.concatenate(cols)

    terms = probs * gains
    outcome_probs = np.bincount(cols, weights=probs, minlength=o.num_outcomes)
    numerators = np.bincount(cols, weights=terms, minlength=o.num_outcomes)
    conditional = np.divide(
        numerators, outcome_probs, out=np.zeros_like(numerators), where=outcome_probs > 0
    )

    gain = math.fsum(terms)
    error_bound = terms.size * sys.float_info.epsilon * math.fsum(np.abs(terms))

    divergent = prior_mean is not None and not math.isfinite(prior_mean)
    warning = None
    if divergent:
        warning = "prior has infinite mean: the zero-gain identity does not apply"
        logger.warning(f"Switching gain {gain} reported with a divergence warning: {warning}")

    return SwitchGainResult(
        gain=gain,
        error_bound=error_bound,
        outcomes=o.outcomes,
        outcome_probs=outcome_probs,
        conditional_gains=conditional,
        tail_mass=prior.tail_mass,
        divergent=divergent,
        warning=warning,
    )
