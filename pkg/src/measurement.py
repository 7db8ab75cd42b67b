# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Measurement: outcome distributions, expectations, reproducible sampling,
running averages and goodness-of-fit checks.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .errors import DomainError
from .measure_core import MASS_TOLERANCE, MixedState, PureState, check_state
from .observables import AnyObservable, Observable, ParallelObservable, canonical

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "Philox4x64"
DEFAULT_CHUNK_SIZE = 65536
RUNNING_AVERAGE_BLOCK = 1024
# Expected count below which chi-square categories are pooled
MIN_EXPECTED_COUNT = 5.0

State = Union[PureState, MixedState]


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """A probability vector over an observable's outcomes."""
    outcomes: Tuple[Any, ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.shape != (len(self.outcomes),):
            raise DomainError(f"Got {probs.size} probabilities for {len(self.outcomes)} outcomes")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise DomainError("Outcome probabilities must be finite and non-negative")
        total = math.fsum(probs)
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise DomainError(f"Outcome probabilities sum to {total}, not 1")
        probs.flags.writeable = False
        object.__setattr__(self, "outcomes", tuple(canonical(x) for x in self.outcomes))
        object.__setattr__(self, "probs", probs)

    @cached_property
    def _index(self) -> Dict[Any, int]:
        return {x: j for j, x in enumerate(self.outcomes)}

    def prob(self, x: Any) -> float:
        """Probability of outcome x (0 for outcomes outside the alphabet)."""
        j = self._index.get(canonical(x))
        return 0.0 if j is None else float(self.probs[j])

    def to_dict(self) -> dict:
        return {
            "outcomes": [list(x) if isinstance(x, tuple) else x for x in self.outcomes],
            "probs": [float(p) for p in self.probs],
        }


@dataclass(frozen=True)
class RngStream:
    """
    A reproducible random stream: a Philox generator keyed by (seed, stream).

    Every call to generator() restarts the same sequence.
    """
    seed: int
    stream: int = 0

    def __post_init__(self):
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise DomainError(f"Seed must be an integer in [0, 2^64), got {self.seed!r}")
        if int(self.stream) != self.stream or self.stream < 0:
            raise DomainError(f"Stream id must be a non-negative integer, got {self.stream!r}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", int(self.stream))

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(sequence))

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream + offset)


def outcome_distribution_pure(o: Observable, state: PureState) -> OutcomeDistribution:
    """The row of the effect table at the state's grid point."""
    if isinstance(o, ParallelObservable):
        raise DomainError("Lazy parallel observables only support sampling")
    check_state(o.space, state)
    return OutcomeDistribution(o.outcomes, o.effects.getrow(state.index).toarray().ravel())


def outcome_distribution_statistical(o: Observable, rho: MixedState) -> OutcomeDistribution:
    """P(x) = sum_i rho_i * e[i][x]."""
    if isinstance(o, ParallelObservable):
        raise DomainError("Lazy parallel observables only support sampling")
    if not rho.space.matches(o.space):
        raise DomainError("Mixed state and observable live on different state spaces")
    return OutcomeDistribution(o.outcomes, o.effects.transpose().dot(rho.mass))


def outcome_distribution(o: Observable, state: State) -> OutcomeDistribution:
    if isinstance(state, MixedState):
        return outcome_distribution_statistical(o, state)
    return outcome_distribution_pure(o, state)


def expectation(
    d: OutcomeDistribution,
    payoff: Optional[Callable[[Any], float]] = None,
    extended: bool = False,
) -> float:
    """
    sum_x payoff(x) * P(x) over outcomes with positive probability.

    An infinite payoff is an error unless extended=True, where the infinite
    value is returned. NaN payoffs are always an error.
    """
    mask = d.probs > 0
    support = [x for x, keep in zip(d.outcomes, mask) if keep]
    if payoff is None:
        values = np.array(support, dtype=float)
        if values.ndim != 1:
            raise DomainError("Tuple-valued outcomes need an explicit payoff")
    else:
        values = np.array([payoff(x) for x in support], dtype=float)

    if np.any(np.isnan(values)):
        raise DomainError("Payoff is NaN on an outcome with positive probability")
    if not np.all(np.isfinite(values)):
        if extended:
            return math.inf if np.any(values == math.inf) else -math.inf
        raise DomainError("Payoff is infinite on an outcome with positive probability")
    return math.fsum(values * d.probs[mask])


def _draw_in_rows(o: Observable, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Outcome index per draw by inverse CDF within each drawn row."""
    indptr = o.effects.indptr
    pos = np.searchsorted(o.row_keys, rows + u, side="right")
    pos = np.clip(pos, indptr[rows], indptr[rows + 1] - 1)
    return o.effects.indices[pos]


def _sample_chunk(o: Observable, state: State, rng: RngStream, n: int) -> np.ndarray:
    gen = rng.generator()
    if isinstance(state, MixedState):
        if not state.space.matches(o.space):
            raise DomainError("Mixed state and observable live on different state spaces")
        rows = gen.choice(len(o.space), size=n, p=state.mass)
    else:
        check_state(o.space, state)
        rows = np.full(n, state.index)
    return _draw_in_rows(o, rows, gen.random(n))


def chunk_plan(n: int, chunk_size: int) -> List[int]:
    """Sizes of the sampling chunks: chunk t uses stream base + t."""
    if n < 1:
        raise DomainError(f"Sample size must be at least 1, got {n}")
    if chunk_size < 1:
        raise DomainError(f"Chunk size must be at least 1, got {chunk_size}")
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def stream_ids(rng: RngStream, n: int, chunk_size: int = DEFAULT_CHUNK_SIZE) -> List[int]:
    return [rng.stream + t for t in range(len(chunk_plan(n, chunk_size)))]


def sample_indices(
    o: AnyObservable,
    state: State,
    rng: RngStream,
    n: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> np.ndarray:
    """
    Draw n outcome indices, chunk t from rng.substream(t).

    The result depends only on (seed, stream, chunk_size), never on the
    number of worker threads. A ParallelObservable yields an (n, repetitions)
    array of base outcome indices.

    Args:
        o: Observable or lazy parallel observable.
        state: Pure or statistical state.
        rng: Seeded stream; chunk t draws from rng.substream(t).
        n: Number of draws.
        chunk_size: Draws per chunk.
        workers: Threads used to fill the chunks.

    Returns:
        Integer array of outcome indices.
    """
    if isinstance(o, ParallelObservable):
        flat = sample_indices(o.base, state, rng, n * o.n, chunk_size, workers)
        return flat.reshape(n, o.n)

    plan = chunk_plan(n, chunk_size)
    jobs = [(rng.substream(t), size) for t, size in enumerate(plan)]
    if workers <= 1 or len(jobs) == 1:
        chunks = [_sample_chunk(o, state, stream, size) for stream, size in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda job: _sample_chunk(o, state, *job), jobs))
    logger.debug(f"Drew {n} samples in {len(plan)} chunks from seed {rng.seed}")
    return np.concatenate(chunks)


def sample(
    o: AnyObservable,
    state: State,
    rng: RngStream,
    n: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> np.ndarray:
    """Draw n outcome values (rows of pairs for tuple outcomes)."""
    indices = sample_indices(o, state, rng, n, chunk_size, workers)
    base = o.base if isinstance(o, ParallelObservable) else o
    return base.outcome_array[indices]


def sample_chunked(
    o: AnyObservable,
    state: State,
    rng: RngStream,
    n: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> Tuple[np.ndarray, List[int]]:
    """Samples plus the stream ids that produced them, for experiment records."""
    draws = n * o.n if isinstance(o, ParallelObservable) else n
    values = sample(o, state, rng, n, chunk_size, workers)
    return values, stream_ids(rng, draws, chunk_size)


def sample_from_distribution(d: OutcomeDistribution, rng: RngStream, n: int) -> np.ndarray:
    """n outcome indices drawn directly from an outcome distribution."""
    if n < 1:
        raise DomainError(f"Sample size must be at least 1, got {n}")
    return rng.generator().choice(len(d.outcomes), size=n, p=d.probs)


def lln_running_average(samples: Sequence[float]) -> np.ndarray:
    """
    Prefix means (x_1 + ... + x_k) / k for k = 1..n.

    Sums are compensated: plain cumulative sums within blocks of
    RUNNING_AVERAGE_BLOCK values, Neumaier summation across block totals.
    """
    values = np.asarray(samples, dtype=float).ravel()
    n = values.size
    if n == 0:
        raise DomainError("Running average needs at least one sample")

    pad = (-n) % RUNNING_AVERAGE_BLOCK
    blocks = np.concatenate([values, np.zeros(pad)]).reshape(-1, RUNNING_AVERAGE_BLOCK)
    inner = np.cumsum(blocks, axis=1)

    offsets = np.empty(len(blocks))
    total, compensation = 0.0, 0.0
    for b, block_total in enumerate(blocks.sum(axis=1)):
        offsets[b] = total + compensation
        t = total + block_total
        if abs(total) >= abs(block_total):
            compensation += (total - t) + block_total
        else:
            compensation += (block_total - t) + total
        total = t

    prefix = (offsets[:, None] + inner).ravel()[:n]
    return prefix / np.arange(1, n + 1)


@dataclass
class GoodnessOfFit:
    """Pearson chi-square comparison of sampled counts with a distribution."""
    statistic: float
    p_value: float
    dof: int
    passed: bool
    pooled: int = 0

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "dof": self.dof,
            "passed": self.passed,
            "pooled": self.pooled,
        }


def _pool_small(observed: np.ndarray, expected: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    small = expected < MIN_EXPECTED_COUNT
    if not small.any():
        return observed, expected, 0
    f_obs = np.append(observed[~small], observed[small].sum())
    f_exp = np.append(expected[~small], expected[small].sum())
    return f_obs, f_exp, int(small.sum())


def goodness_of_fit(
    d: OutcomeDistribution, indices: np.ndarray, significance: float = 1e-3
) -> GoodnessOfFit:
    """Chi-square test of sampled outcome indices against d."""
    indices = np.asarray(indices).ravel()
    counts = np.bincount(indices, minlength=len(d.outcomes)).astype(float)
    n = counts.sum()
    if n == 0:
        raise DomainError("Goodness of fit needs at least one sample")

    impossible = d.probs == 0
    if counts[impossible].sum() > 0:
        logger.warning(f"{int(counts[impossible].sum())} samples fell on zero-probability outcomes")
        return GoodnessOfFit(statistic=math.inf, p_value=0.0, dof=0, passed=False)

    f_obs, f_exp, pooled = _pool_small(counts[~impossible], d.probs[~impossible] * n)
    if len(f_obs) < 2:
        return GoodnessOfFit(statistic=0.0, p_value=1.0, dof=0, passed=True, pooled=pooled)

    f_exp = f_exp * (f_obs.sum() / f_exp.sum())
    result = stats.chisquare(f_obs, f_exp)
    p_value = float(result.pvalue)
    return GoodnessOfFit(
        statistic=float(result.statistic),
        p_value=p_value,
        dof=len(f_obs) - 1,
        passed=p_value >= significance,
        pooled=pooled,
    )


def homogeneity_test(
    first: np.ndarray, second: np.ndarray, num_outcomes: int, significance: float = 1e-3
) -> GoodnessOfFit:
    """Chi-square test that two samples of outcome indices share one law."""
    table = np.vstack([
        np.bincount(np.asarray(first).ravel(), minlength=num_outcomes),
        np.bincount(np.asarray(second).ravel(), minlength=num_outcomes),
    ]).astype(float)

    totals = table.sum(axis=0)
    keep = totals >= 2 * MIN_EXPECTED_COUNT
    pooled = int((~keep & (totals > 0)).sum())
    columns = [table[:, keep]]
    if table[:, ~keep].sum() > 0:
        columns.append(table[:, ~keep].sum(axis=1, keepdims=True))
    table = np.hstack(columns)
    if table.shape[1] < 2:
        return GoodnessOfFit(statistic=0.0, p_value=1.0, dof=0, passed=True, pooled=pooled)

    statistic, p_value, dof, _ = stats.chi2_contingency(table, correction=False)
    return GoodnessOfFit(
        statistic=float(statistic),
        p_value=float(p_value),
        dof=int(dof),
        passed=float(p_value) >= significance,
        pooled=pooled,
    )


@dataclass
class ExperimentRecord:
    """
    Everything needed to reproduce and report one sampling experiment.

    trace holds per-step rows (columns named by trace_columns) for CSV output.
    """
    kind: str
    seed: int
    stream_ids: List[int]
    parameters: Dict[str, Any] = field(default_factory=dict)
    statistics: Dict[str, Any] = field(default_factory=dict)
    trace_columns: Tuple[str, ...] = ()
    trace: Optional[np.ndarray] = None
    rng_algorithm: str = RNG_ALGORITHM

    def trace_rows(self, stride: int = 1) -> List[List[float]]:
        """Trace rows, keeping every stride-th one plus the last."""
        if self.trace is None or len(self.trace) == 0:
            return []
        keep = list(range(stride - 1, len(self.trace), stride))
        if not keep or keep[-1] != len(self.trace) - 1:
            keep.append(len(self.trace) - 1)
        return self.trace[keep].tolist()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "stream_ids": list(self.stream_ids),
            "rng_algorithm": self.rng_algorithm,
            "parameters": dict(self.parameters),
            "statistics": dict(self.statistics),
        }
