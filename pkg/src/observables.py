# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Observables over a StateSpace.

An observable is stored as a sparse effect table: row i, column x holds
[F({x})](w_i). Constructors cover deterministic lifts, cell-resolved lifts,
mixtures, the envelope quasi-product and independent (parallel) products.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResourceError
from .measure_core import StateSpace, evaluate_on_grid, product_space

logger = logging.getLogger(__name__)

# Largest table (grid cells x outcomes) that constructors will materialize
DEFAULT_MAX_TABLE_CELLS = 1_000_000
ROW_SUM_TOLERANCE = 1e-9
# Relative slack when snapping lifted cell edges onto outcome bin edges
BIN_SNAP_TOLERANCE = 1e-9


def canonical(value: Any) -> Any:
    """Canonical outcome key: plain floats (no -0.0), tuples recursively."""
    if isinstance(value, (tuple, list, np.ndarray)):
        return tuple(canonical(v) for v in value)
    return float(value) + 0.0


@dataclass(frozen=True, eq=False)
class Observable:
    """
    A finite-outcome observable O = (X, 2^X, F).

    values keeps the generating map on the grid for lifts, components the
    (weight, part) pairs of a mixture.
    """
    space: StateSpace
    outcomes: Tuple[Any, ...]
    effects: sp.csr_matrix
    values: Optional[np.ndarray] = None
    components: Tuple[Tuple[float, "Observable"], ...] = ()

    def __post_init__(self):
        outcomes = tuple(canonical(x) for x in self.outcomes)
        if len(set(outcomes)) != len(outcomes):
            raise DomainError("Observable outcomes must be distinct")

        effects = sp.csr_matrix(self.effects, dtype=float)
        if effects.shape != (len(self.space), len(outcomes)):
            raise DomainError(
                f"Effect table shape {effects.shape} does not match "
                f"{len(self.space)} grid points x {len(outcomes)} outcomes"
            )
        effects.eliminate_zeros()
        effects.sort_indices()

        if effects.nnz and (effects.data.min() < 0 or effects.data.max() > 1 + ROW_SUM_TOLERANCE):
            raise DomainError("Effects must lie in [0, 1]")
        row_sums = np.asarray(effects.sum(axis=1)).ravel()
        worst = np.max(np.abs(row_sums - 1.0))
        if worst > ROW_SUM_TOLERANCE:
            bad = int(np.argmax(np.abs(row_sums - 1.0)))
            raise DomainError(f"Effects at grid point {bad} sum to {row_sums[bad]}, not 1")

        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "effects", effects)

    @property
    def num_outcomes(self) -> int:
        return len(self.outcomes)

    @property
    def num_cells(self) -> int:
        """Size of the dense table this observable stands for."""
        return len(self.space) * self.num_outcomes

    @cached_property
    def _index(self) -> Dict[Any, int]:
        return {x: j for j, x in enumerate(self.outcomes)}

    @cached_property
    def _by_column(self) -> sp.csc_matrix:
        return self.effects.tocsc()

    @cached_property
    def outcome_array(self) -> np.ndarray:
        """Outcomes as an array: shape (m,) for scalars, (m, k) for pairs."""
        return np.array(self.outcomes, dtype=float)

    @cached_property
    def row_keys(self) -> np.ndarray:
        """Row index plus within-row cumulative effect, for inverse-CDF sampling."""
        indptr = self.effects.indptr
        row_ids = np.repeat(np.arange(len(self.space)), np.diff(indptr))
        cum = np.cumsum(self.effects.data)
        before = np.concatenate([[0.0], cum])[indptr[:-1]]
        return row_ids + (cum - before[row_ids])

    def has_outcome(self, x: Any) -> bool:
        return canonical(x) in self._index

    def index_of(self, x: Any) -> int:
        try:
            return self._index[canonical(x)]
        except KeyError:
            raise DomainError(f"Outcome {x!r} is not in the observable's alphabet") from None

    def column(self, x: Any) -> np.ndarray:
        """Effect of the singleton {x} at every grid point."""
        j = self.index_of(x)
        return self._by_column[:, j].toarray().ravel()

    def table(self, max_cells: int = DEFAULT_MAX_TABLE_CELLS) -> np.ndarray:
        """Dense effect table; refuses tables above max_cells."""
        if self.num_cells > max_cells:
            raise ResourceError(f"Effect table of {self.num_cells} cells exceeds the cap of {max_cells}")
        return self.effects.toarray()

    @property
    def is_deterministic(self) -> bool:
        """Every row is a single unit effect."""
        return bool(
            np.all(np.diff(self.effects.indptr) == 1) and np.all(self.effects.data == 1.0)
        )

    def nearest_outcome(self, value: float) -> Optional[float]:
        """The scalar outcome equal to value up to rounding, or None."""
        numeric = np.array([x for x in self.outcomes if not isinstance(x, tuple)], dtype=float)
        if numeric.size == 0:
            return None
        closest = float(numeric[np.argmin(np.abs(numeric - value))])
        if math.isclose(closest, value, rel_tol=1e-9, abs_tol=1e-12):
            return closest
        return None


@dataclass(frozen=True, eq=False)
class ParallelObservable:
    """
    n independent repetitions of base along the diagonal state, kept lazy.

    Only sampling is supported; the table would have len(space) * m**n cells.
    """
    base: Observable
    n: int

    @property
    def space(self) -> StateSpace:
        return self.base.space

    @property
    def num_cells(self) -> int:
        # Exact but unbounded; never format it, use log10_cells instead
        return len(self.base.space) * self.base.num_outcomes ** self.n

    @property
    def log10_cells(self) -> float:
        return math.log10(len(self.base.space)) + self.n * math.log10(self.base.num_outcomes)

    def table(self, max_cells: int = DEFAULT_MAX_TABLE_CELLS) -> np.ndarray:
        raise ResourceError(
            f"Parallel observable of {self.n} repetitions has about 10^{self.log10_cells:.1f} cells; "
            f"only sampling is available above the cap of {max_cells}"
        )


AnyObservable = Union[Observable, ParallelObservable]


def _sorted_union(groups: Sequence[Sequence[Any]]) -> Tuple[Any, ...]:
    merged = set()
    for group in groups:
        merged.update(group)
    try:
        return tuple(sorted(merged))
    except TypeError:
        # Mixed outcome types: keep first-appearance order
        seen = {}
        for group in groups:
            for x in group:
                seen.setdefault(x, None)
        return tuple(seen)


def lift_values(space: StateSpace, values: np.ndarray) -> Observable:
    """Deterministic observable from the values of a map on the grid."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(space),):
        raise DomainError(f"Got {values.size} values for a space of {len(space)} points")
    if not np.all(np.isfinite(values)):
        raise DomainError("Deterministic observable values must be finite")

    outcomes, inverse = np.unique(values, return_inverse=True)
    n = len(space)
    effects = sp.csr_matrix(
        (np.ones(n), (np.arange(n), inverse.ravel())), shape=(n, len(outcomes))
    )
    return Observable(space=space, outcomes=tuple(outcomes), effects=effects, values=values)


def deterministic_observable(space: StateSpace, V: Callable[[Any], float]) -> Observable:
    """Lift a map V on the grid: effect 1 on V(w_i), 0 elsewhere."""
    return lift_values(space, evaluate_on_grid(space, V))


def _apply(V: Callable[[Any], float], points: np.ndarray) -> np.ndarray:
    try:
        values = np.asarray(V(points), dtype=float)
        if values.shape == points.shape:
            return values
        if values.ndim == 0:
            return np.full(points.shape, float(values))
    except (TypeError, ValueError):
        pass
    return np.array([V(float(p)) for p in points], dtype=float)


def _snap(units: np.ndarray) -> np.ndarray:
    nearest = np.round(units)
    close = np.abs(units - nearest) <= BIN_SNAP_TOLERANCE * np.maximum(1.0, np.abs(nearest))
    return np.where(close, nearest, units)


def cell_lift(
    space: StateSpace,
    V: Callable[[Any], float],
    bin_width: Optional[float] = None,
    align: str = "right",
) -> Observable:
    """
    Cell-resolved lift of a non-decreasing map V.

    Grid cell k is (p_k - w_k, p_k] for right-aligned grids and
    (p_k - w_k/2, p_k + w_k/2] for midpoint grids. Outcome bin j is
    ((j-1)b, jb], labelled jb (right) or (j-1/2)b (midpoint). The effect of
    bin j at cell k is the share of V(cell k) lying in bin j, so a map that
    stretches cells spreads each cell's unit effect over several bins.

    Args:
        space: Scalar state space with positive cell widths.
        V: Non-decreasing map applied to each cell.
        bin_width: Outcome bin width; the grid step when not given.
        align: "right" or "midpoint", matching the grid.

    Returns:
        Observable whose outcomes are the bin labels.
    """
    if space.dim != 1:
        raise DomainError("cell_lift needs a scalar state space")
    if align == "right":
        left, right = space.points - space.weights, space.points
    elif align == "midpoint":
        left, right = space.points - space.weights / 2, space.points + space.weights / 2
    else:
        raise DomainError(f"Unknown grid alignment '{align}'")

    if bin_width is None:
        bin_width = space.step
        if bin_width is None:
            raise DomainError("cell_lift needs bin_width on a non-uniform grid")
    if not bin_width > 0:
        raise DomainError(f"Bin width must be positive, got {bin_width}")

    lo = _snap(_apply(V, left) / bin_width)
    hi = _snap(_apply(V, right) / bin_width)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise DomainError("Lifted map is not finite on every cell")
    if np.any(hi < lo):
        raise DomainError("cell_lift needs a non-decreasing map")

    rows, bins, data = [], [], []
    for k in range(len(space)):
        a, c = lo[k], hi[k]
        if c == a:
            first = last = int(math.ceil(a))
        else:
            first, last = int(math.floor(a)) + 1, int(math.ceil(c))
        if first < 1:
            raise DomainError(f"Lifted cell {k} reaches non-positive outcomes")
        for j in range(first, last + 1):
            share = 1.0 if c == a else (min(c, j) - max(a, j - 1)) / (c - a)
            if share > 0:
                rows.append(k)
                bins.append(j)
                data.append(share)

    used, columns = np.unique(np.array(bins), return_inverse=True)
    offset = 0.0 if align == "right" else 0.5
    labels = tuple((used - offset) * bin_width)
    effects = sp.csr_matrix(
        (np.array(data), (np.array(rows), columns.ravel())), shape=(len(space), len(used))
    )
    logger.debug(f"Cell lift: {len(space)} cells onto {len(used)} bins of width {bin_width}")
    return Observable(
        space=space,
        outcomes=labels,
        effects=effects,
        values=_apply(V, space.points),
    )


def mix_observables(parts: Sequence[Observable], weights: Sequence[float]) -> Observable:
    """
    Convex mixture: e[i][x] = sum_k w_k * e_k[i][x] over the union alphabet.

    Parts with weight 0 contribute nothing, not even outcomes.
    """
    if not parts or len(parts) != len(weights):
        raise DomainError("Mixture needs one weight per part and at least one part")
    weights = [float(w) for w in weights]
    if any(not math.isfinite(w) or w < 0 for w in weights):
        raise DomainError(f"Mixture weights must be non-negative, got {weights}")
    if abs(math.fsum(weights) - 1.0) > 1e-12:
        raise DomainError(f"Mixture weights sum to {math.fsum(weights)}, not 1")

    space = parts[0].space
    for part in parts[1:]:
        if not part.space.matches(space):
            raise DomainError("Mixed observables must share one state space")

    active = [(w, part) for w, part in zip(weights, parts) if w > 0]
    outcomes = _sorted_union([part.outcomes for _, part in active])
    index = {x: j for j, x in enumerate(outcomes)}

    rows, cols, data = [], [], []
    for w, part in active:
        remap = np.array([index[x] for x in part.outcomes], dtype=np.int64)
        coo = part.effects.tocoo()
        rows.append(coo.row)
        cols.append(remap[coo.col])
        data.append(w * coo.data)

    effects = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(space), len(outcomes)),
    )
    return Observable(space=space, outcomes=outcomes, effects=effects, components=tuple(active))


def _lift_of(o: Observable) -> np.ndarray:
    if not o.is_deterministic:
        raise DomainError("Quasi-product needs deterministic lifts")
    return o.outcome_array[o.effects.indices]


def quasi_product_envelope(o1: Observable, o2: Observable) -> Observable:
    """
    Envelope quasi-product of the lifts of V1 and V2.

    At each grid point the pairs (V1, V2) and (V2, V1) each get effect 1/2,
    or a single unit effect when V1 = V2. The maps are read off the lifts.
    """
    if not o1.space.matches(o2.space):
        raise DomainError("Quasi-product factors must share one state space")
    v1, v2 = _lift_of(o1), _lift_of(o2)

    forward = list(zip(v1.tolist(), v2.tolist()))
    backward = list(zip(v2.tolist(), v1.tolist()))
    outcomes = _sorted_union([forward, backward])
    index = {x: j for j, x in enumerate(outcomes)}

    rows, cols, data = [], [], []
    for i, (pair, swapped) in enumerate(zip(forward, backward)):
        if pair == swapped:
            rows.append(i)
            cols.append(index[pair])
            data.append(1.0)
        else:
            rows.extend((i, i))
            cols.extend((index[pair], index[swapped]))
            data.extend((0.5, 0.5))

    effects = sp.csr_matrix((data, (rows, cols)), shape=(len(o1.space), len(outcomes)))
    return Observable(
        space=o1.space,
        outcomes=outcomes,
        effects=effects,
        values=np.column_stack([v1, v2]),
    )


def product_observable(
    o1: Observable, o2: Observable, max_cells: int = DEFAULT_MAX_TABLE_CELLS
) -> Observable:
    """Independent product O1 x O2 on the product grid."""
    cells = len(o1.space) * len(o2.space) * o1.num_outcomes * o2.num_outcomes
    if cells > max_cells:
        raise ResourceError(f"Product table of {cells} cells exceeds the cap of {max_cells}")

    outcomes = tuple((x, y) for x in o1.outcomes for y in o2.outcomes)
    return Observable(
        space=product_space(o1.space, o2.space),
        outcomes=outcomes,
        effects=sp.kron(o1.effects, o2.effects, format="csr"),
    )


def _parallel_table_fits(points: int, m: int, n: int, max_cells: int) -> bool:
    """points * m**n <= max_cells, without building m**n for large n."""
    if m <= 1:
        return points <= max_cells
    if math.log(points) + n * math.log(m) > math.log(max(max_cells, 1)) + 1.0:
        return False
    return points * m ** n <= max_cells


def iid_parallel(
    o: Observable,
    n: int,
    materialize: Optional[bool] = None,
    max_cells: int = DEFAULT_MAX_TABLE_CELLS,
) -> AnyObservable:
    """
    n-fold repetition of o along the diagonal state (w, w, ..., w).

    Materialized as a table when len(space) * m**n fits under max_cells,
    otherwise returned as a lazy ParallelObservable. materialize=True forces
    a table (ResourceError above the cap); materialize=False forces lazy.

    Args:
        o: Observable measured in each repetition.
        n: Number of repetitions.
        materialize: None to decide by the cap, True or False to force.
        max_cells: Cell cap for a materialized table.

    Returns:
        An Observable table or a ParallelObservable.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"Parallel measurement needs n >= 1, got {n!r}")
    n = int(n)
    if n == 1 and materialize is not False:
        return o

    if materialize is False:
        logger.debug(f"Parallel measurement of {n} repetitions kept lazy")
        return ParallelObservable(base=o, n=n)
    fits = _parallel_table_fits(len(o.space), o.num_outcomes, n, max_cells)
    if materialize is None and not fits:
        logger.debug(f"Parallel measurement of {n} repetitions kept lazy above the cap of {max_cells}")
        return ParallelObservable(base=o, n=n)
    if not fits:
        raise ResourceError(f"Parallel table of {n} repetitions exceeds the cap of {max_cells} cells")

    base = o.table(max_cells)
    joint = base
    for _ in range(n - 1):
        joint = (joint[:, :, None] * base[:, None, :]).reshape(len(o.space), -1)

    return Observable(
        space=o.space,
        outcomes=tuple(itertools.product(o.outcomes, repeat=n)),
        effects=sp.csr_matrix(joint),
    )


def marginal(o: Observable, axis: int) -> Observable:
    """Marginal of a tuple-valued observable on one coordinate."""
    if not all(isinstance(x, tuple) for x in o.outcomes):
        raise DomainError("Marginals need tuple-valued outcomes")
    coords = [x[axis] for x in o.outcomes]
    outcomes = _sorted_union([coords])
    index = {x: j for j, x in enumerate(outcomes)}

    collapse = sp.csr_matrix(
        (np.ones(len(coords)), (np.arange(len(coords)), [index[x] for x in coords])),
        shape=(len(coords), len(outcomes)),
    )
    return Observable(space=o.space, outcomes=outcomes, effects=o.effects @ collapse)
