# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Discretized state spaces, measures and densities.
Every other module builds on StateSpace, PureState and MixedState.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Tuple, Union

import numpy as np

from .errors import DomainError

logger = logging.getLogger(__name__)

# Default comparison tolerance for probability masses
MASS_TOLERANCE = 1e-9

Label = Union[float, Tuple[float, ...]]


def _strictly_increasing(points: np.ndarray) -> bool:
    """Check strict increase; vector labels are compared lexicographically."""
    if len(points) < 2:
        return True
    if points.ndim == 1:
        return bool(np.all(np.diff(points) > 0))

    diff = points[1:] - points[:-1]
    nonzero = diff != 0
    first = nonzero.argmax(axis=1)
    rows = np.arange(len(diff))
    return bool(np.all(nonzero.any(axis=1) & (diff[rows, first] > 0)))


def _frozen_array(values: Any) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class StateSpace:
    """
    A finite grid standing for (Omega, nu).

    points holds one label per cell: a 1-D array for scalar spaces, or a 2-D
    array (one row per cell) for product spaces. weights is the measure nu of
    each cell.
    """
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = _frozen_array(self.points)
        weights = _frozen_array(self.weights)

        if points.ndim not in (1, 2) or len(points) < 1:
            raise DomainError("State space needs at least one point")
        if weights.shape != (len(points),):
            raise DomainError(
                f"Got {len(weights)} weights for {len(points)} points"
            )
        if not np.all(np.isfinite(points)):
            raise DomainError("State space points must be finite")
        if not np.all(np.isfinite(weights)) or not np.all(weights > 0):
            raise DomainError("State space weights must be finite and positive")
        if not _strictly_increasing(points):
            raise DomainError("State space points must be strictly increasing")

        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        """Number of coordinates per label."""
        return 1 if self.points.ndim == 1 else self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    @property
    def step(self) -> Optional[float]:
        """Common cell weight for uniform grids, None otherwise."""
        if np.all(self.weights == self.weights[0]):
            return float(self.weights[0])
        return None

    def label(self, index: int) -> Label:
        """Label of one cell (a float, or a tuple for product spaces)."""
        if self.points.ndim == 1:
            return float(self.points[index])
        return tuple(float(v) for v in self.points[index])

    def labels(self) -> List[Label]:
        return [self.label(i) for i in range(len(self))]

    def matches(self, other: "StateSpace") -> bool:
        """True when both spaces have identical points and weights."""
        if self is other:
            return True
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def describe(self) -> dict:
        """Short summary used in logs and reports."""
        info = {"n": len(self), "total_mass": self.total_mass}
        if self.points.ndim == 1:
            info["first"] = float(self.points[0])
            info["last"] = float(self.points[-1])
        return info


@dataclass(frozen=True)
class PureState:
    """A point measure on one grid cell."""
    index: int

    def __post_init__(self):
        if isinstance(self.index, bool) or int(self.index) != self.index or self.index < 0:
            raise DomainError(f"Pure state index must be a non-negative integer, got {self.index!r}")
        object.__setattr__(self, "index", int(self.index))


@dataclass(frozen=True, eq=False)
class MixedState:
    """
    A probability vector over a StateSpace.

    mass already includes the cell weights. normalizer is the total before
    renormalisation and tail_mass the prior mass discarded by truncating the
    support (0 when unknown).
    """
    space: StateSpace
    mass: np.ndarray
    normalizer: float = 1.0
    tail_mass: float = 0.0

    def __post_init__(self):
        mass = _frozen_array(self.mass)
        if mass.shape != (len(self.space),):
            raise DomainError(
                f"Mixed state has {mass.size} masses for a space of {len(self.space)} points"
            )
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise DomainError("Mixed state masses must be finite and non-negative")
        total = math.fsum(mass)
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise DomainError(f"Mixed state masses sum to {total}, not 1")
        object.__setattr__(self, "mass", mass)

    def mean(self) -> float:
        """Mean of scalar labels under this state."""
        if self.space.dim != 1:
            raise DomainError("Mean is only defined for scalar state labels")
        return math.fsum(self.mass * self.space.points)

    def with_tail_mass(self, tail_mass: float) -> "MixedState":
        return dataclasses.replace(self, tail_mass=float(tail_mass))


def evaluate_on_grid(space: StateSpace, f: Callable[[Any], float]) -> np.ndarray:
    """
    Evaluate f at every grid label.

    numpy-aware callables are applied to the whole point array at once;
    anything else (math functions, branching lambdas) is called per point.
    """
    if space.dim == 1:
        try:
            values = np.asarray(f(space.points), dtype=float)
            if values.shape == space.points.shape:
                return values
            if values.ndim == 0:
                return np.full(len(space), float(values))
        except (TypeError, ValueError):
            pass
    return np.array([f(label) for label in space.labels()], dtype=float)


def check_state(space: StateSpace, state: PureState) -> None:
    """Raise DomainError unless state indexes a cell of space."""
    if not 0 <= state.index < len(space):
        raise DomainError(f"Pure state index {state.index} outside a space of {len(space)} points")


def make_uniform_grid(lo: float, hi: float, n: int, align: str = "midpoint") -> StateSpace:
    """
    Build n equal cells on [lo, hi].

    align="midpoint" labels each cell by its centre. align="right" labels
    cell k by its right end lo + k*(hi-lo)/n, a lattice on which a value
    and its half are both representable.

    Args:
        lo: Left end of the interval.
        hi: Right end of the interval, greater than lo.
        n: Number of cells, at least 2.
        align: "midpoint" or "right".

    Returns:
        StateSpace whose weights are the cell widths.

    Raises:
        DomainError: On a bad interval, cell count or alignment.
    """
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise DomainError(f"Grid needs n >= 2 cells, got {n!r}")
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise DomainError(f"Grid needs finite lo < hi, got lo={lo}, hi={hi}")
    n = int(n)

    h = (hi - lo) / n
    if align == "midpoint":
        points = lo + (np.arange(n) + 0.5) * h
    elif align == "right":
        points = lo + np.arange(1, n + 1) * h
    else:
        raise DomainError(f"Unknown grid alignment '{align}' (use 'midpoint' or 'right')")

    logger.debug(f"Built {align} grid on [{lo}, {hi}] with {n} cells of width {h}")
    return StateSpace(points=points, weights=np.full(n, h))


def mixed_from_density(space: StateSpace, density: Callable[[Any], float]) -> MixedState:
    """
    Turn a density into a MixedState: mass_i proportional to density(w_i) * nu_i.

    The pre-normalisation total is kept in MixedState.normalizer so callers
    can detect heavy truncation.

    Raises:
        DomainError: If the density is negative, non-finite or zero on the grid.
    """
    values = evaluate_on_grid(space, density)

    if not np.all(np.isfinite(values)):
        raise DomainError("Density is not finite on every grid point")
    if np.any(values < 0):
        bad = int(np.flatnonzero(values < 0)[0])
        raise DomainError(f"Density is negative ({values[bad]}) at grid point {space.label(bad)}")

    raw = values * space.weights
    total = math.fsum(raw)
    if total <= 0:
        raise DomainError("Density vanishes on every grid point")

    logger.debug(f"Density normalizer on {len(space)} points: {total}")
    return MixedState(space=space, mass=raw / total, normalizer=total)


def integrate(space: StateSpace, f: Callable[[Any], float]) -> float:
    """Midpoint-style quadrature: sum of f(w_i) * nu_i."""
    return math.fsum(evaluate_on_grid(space, f) * space.weights)


def point_state(space: StateSpace, index: int) -> PureState:
    state = PureState(index)
    check_state(space, state)
    return state


def point_mass(space: StateSpace, index: int) -> MixedState:
    """The mixed state concentrated on one cell."""
    check_state(space, PureState(index))
    mass = np.zeros(len(space))
    mass[index] = 1.0
    return MixedState(space=space, mass=mass)


def _as_rows(points: np.ndarray) -> np.ndarray:
    return points[:, None] if points.ndim == 1 else points


def product_space(a: StateSpace, b: StateSpace) -> StateSpace:
    """Cartesian product grid; cell (i, j) sits at row i * len(b) + j."""
    rows_a = np.repeat(_as_rows(a.points), len(b), axis=0)
    rows_b = np.tile(_as_rows(b.points), (len(a), 1))
    return StateSpace(
        points=np.hstack([rows_a, rows_b]),
        weights=np.kron(a.weights, b.weights),
    )


def product_mixed(first: MixedState, second: MixedState) -> MixedState:
    """Product measure of two mixed states on the product grid."""
    return MixedState(
        space=product_space(first.space, second.space),
        mass=np.kron(first.mass, second.mass),
        normalizer=first.normalizer * second.normalizer,
    )


def find_point(space: StateSpace, value: float) -> Optional[int]:
    """Index of the cell labelled value, or None if value is off-grid."""
    if space.dim != 1:
        raise DomainError("find_point needs a scalar state space")
    pos = int(np.searchsorted(space.points, value))
    for candidate in (pos - 1, pos):
        if 0 <= candidate < len(space) and math.isclose(
            space.points[candidate], value, rel_tol=1e-9, abs_tol=1e-12
        ):
            return candidate
    return None


def nearest_labels(space: StateSpace, value: float, count: int = 2) -> List[float]:
    """The count grid labels closest to value, in increasing order."""
    if space.dim != 1:
        raise DomainError("nearest_labels needs a scalar state space")
    order = np.argsort(np.abs(space.points - value), kind="stable")[:count]
    return sorted(float(space.points[i]) for i in order)
