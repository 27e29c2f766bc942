"""Mutation kernels: row-stochastic offspring distributions per strategy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from crflow.errors import ConfigError, DimensionError
from crflow.measure import DiscreteMeasure, flat_distance
from crflow.space import StrategySpace

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class MutationKernel:
    """Row i is the offspring distribution of strategy i over the atoms.

    Rows must be nonnegative and sum to one within ROW_SUM_TOL. Pass
    renormalize=True to rescale row sums explicitly; it is never silent.
    """

    space: StrategySpace
    rows: np.ndarray
    renormalize: bool = field(default=False, compare=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        n = self.space.size
        if rows.shape != (n, n):
            raise DimensionError(
                f"kernel shape {rows.shape} does not match {n} atoms"
            )
        if np.any(rows < 0):
            raise ConfigError("kernel entries must be nonnegative")
        sums = rows.sum(axis=1)
        if self.renormalize:
            if np.any(sums <= 0):
                raise ConfigError("cannot renormalize a zero row")
            rows = rows / sums[:, None]
        elif np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise ConfigError(
                f"row {worst} sums to {sums[worst]!r}, not 1"
            )
        rows = np.ascontiguousarray(rows)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def row_measure(self, i: int) -> DiscreteMeasure:
        return DiscreteMeasure(self.space, self.rows[i])


def pure_selection_kernel(space: StrategySpace) -> MutationKernel:
    """Offspring keep the parent strategy exactly: the identity kernel."""
    return MutationKernel(space, np.eye(space.size))


def local_mutation_kernel(space: StrategySpace, width: float) -> MutationKernel:
    """Gaussian mutation: row i proportional to exp(-d(i,j)^2 / (2 width^2))."""
    if width <= 0:
        raise ConfigError("mutation width must be positive")
    logw = -(space.metric ** 2) / (2.0 * width ** 2)
    rows = np.exp(logw)
    return MutationKernel(space, rows / rows.sum(axis=1)[:, None])


def kernel_lipschitz_bound(K: MutationKernel) -> float:
    """Largest flat-distance difference quotient between kernel rows.

    Places the kernel in the class of Lipschitz maps into probability
    functionals with this bound. 0 on a singleton space.
    """
    n = K.space.size
    if n < 2:
        return 0.0
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            quot = flat_distance(K.row_measure(i), K.row_measure(j)) / K.space.metric[i, j]
            best = max(best, quot)
    return best


@dataclass(frozen=True)
class StochasticityReport:
    ok: bool
    max_row_sum_error: float
    negative_entries: tuple
    messages: tuple


def validate_stochastic(rows, space: StrategySpace | None = None) -> StochasticityReport:
    """Report negative entries and row-sum deviations beyond tolerance.

    Accepts a raw matrix (or a MutationKernel, which always passes since
    its constructor enforces the same conditions).
    """
    if isinstance(rows, MutationKernel):
        rows = rows.rows
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    messages = []
    negs = [
        (int(i), int(j)) for i, j in zip(*np.nonzero(rows < 0))
    ]
    for i, j in negs:
        messages.append(f"negative entry {rows[i, j]!r} at ({i}, {j})")
    sums = rows.sum(axis=1)
    err = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
    for i in np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL):
        messages.append(f"row {int(i)} sums to {sums[i]!r}")
    if space is not None and rows.shape != (space.size, space.size):
        messages.append(
            f"kernel shape {rows.shape} does not match {space.size} atoms"
        )
    ok = not messages
    return StochasticityReport(
        ok=ok,
        max_row_sum_error=err,
        negative_entries=tuple(negs),
        messages=tuple(messages),
    )
