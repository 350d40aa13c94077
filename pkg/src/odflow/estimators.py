"""Flow-recovery programs layered over the measurement systems.

Every estimator takes a :class:`~odflow.network.MeasurementSystem` and a
count vector and returns an :class:`EstimationResult` whose allocation is
already decoded into OD flows and path splits.  The programs:

* ``estimate_l1``          min sum(x)        s.t. A x = y, x >= 0
* ``estimate_l2``          min ||x||_2       s.t. A x = y, x >= 0
* ``estimate_l1_noisy``    min sum(x)        s.t. ||y - A x||_2 <= delta, x >= 0
* ``estimate_l2_noisy``    min ||x||_2       s.t. ||y - A x||_2 <= delta, x >= 0
* ``estimate_weighted_l1`` min sum(lam*x)    s.t. A x = y, x >= 0
* ``reweighted_l1``        iterated weighted program, weights 1/(x+eps)
* ``vmt_bounds``           min/max sum(v*x)  s.t. A x = y, x >= 0

Because x >= 0, sum(x) equals the l1 norm, so the l1 programs are plain
linear programs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import MeasurementSystem, PathTable, decode_allocation
from .solver import (
    ConeProblem,
    DEFAULT_OPTIONS,
    Solution,
    SolverOptions,
    StandardLP,
    STATUS_INFEASIBLE,
    STATUS_ITERATION_LIMIT,
    STATUS_UNBOUNDED,
    solve_cone,
    solve_lp,
)

# Entries below this (relative) floor are treated as structural zeros when
# reporting sparsity; solvers leave residual dust at the 1e-10 scale.
SPARSITY_EPS_SCALE = 1e-8

# Largest negative excursion tolerated from a solver before it is a bug.
_NEG_CLIP_TOL = 1e-6


class EstimationError(RuntimeError):
    """Base class for estimator failures; carries the raw solver output."""

    def __init__(self, message: str, solution: Solution | None = None):
        super().__init__(message)
        self.solution = solution


class InfeasibleError(EstimationError):
    """No nonnegative allocation satisfies the measurement constraints."""


class UnboundedError(EstimationError):
    """The program has no finite optimum (some path evades every counter)."""

    def __init__(self, message: str, solution: Solution | None = None,
                 path_label=None):
        super().__init__(message, solution)
        self.path_label = path_label


class IterationLimitError(EstimationError):
    """The iterative solver gave up before reaching its tolerance."""


@dataclass(frozen=True)
class Allocation:
    """Nonnegative per-column flow vector tied to its measurement labels.

    For static systems the labels are path indices; for dynamic systems
    they are (path index, departure time) pairs.
    """

    x: np.ndarray
    table: PathTable
    labels: tuple

    def __post_init__(self):
        self.x.flags.writeable = False

    def sparsity(self) -> int:
        eps = SPARSITY_EPS_SCALE * max(1.0, float(np.max(self.x, initial=0.0)))
        return int(np.count_nonzero(self.x > eps))

    def per_path_totals(self) -> np.ndarray:
        """Sum over departure slots, giving one flow per catalogued path."""
        totals = np.zeros(self.table.n_paths)
        for j, lbl in enumerate(self.labels):
            n = lbl[0] if isinstance(lbl, tuple) else lbl
            totals[n] += self.x[j]
        return totals


@dataclass(frozen=True)
class WeightMatrix:
    """Positive per-entry weights of the weighted-l1 objective."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or lam.size == 0 or lam.min() <= 0:
            raise ValueError("weights must be a positive vector")
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class EstimationResult:
    """Recovered allocation with its decoded flows and solve diagnostics."""

    allocation: Allocation
    od_flows: tuple[float, ...]
    splits: dict[int, float]
    status: str
    objective: float
    residual_eq: float
    residual_cone: float
    iterations: int
    method: str
    objective_trace: tuple[float, ...] = ()


def _check_counts(ms: MeasurementSystem, y, *, nonnegative: bool) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != (ms.n_rows,):
        raise ValueError(
            f"count vector length {y.size} does not match {ms.n_rows} rows"
        )
    if nonnegative and y.size and y.min() < 0:
        raise ValueError("counts must be nonnegative")
    return y


def _raise_for_status(sol: Solution, method: str) -> None:
    if sol.status == STATUS_INFEASIBLE:
        raise InfeasibleError(
            f"{method}: no nonnegative allocation explains the counts", sol
        )
    if sol.status == STATUS_ITERATION_LIMIT:
        raise IterationLimitError(f"{method}: iteration limit reached", sol)
    if sol.status == STATUS_UNBOUNDED:
        raise UnboundedError(f"{method}: unbounded program", sol)


def _finish(ms: MeasurementSystem, sol: Solution, method: str,
            trace: tuple[float, ...] = ()) -> EstimationResult:
    _raise_for_status(sol, method)
    x = np.asarray(sol.x, dtype=float).copy()
    if x.size and x.min() < -_NEG_CLIP_TOL:
        raise EstimationError(
            f"{method}: solver returned a significantly negative entry "
            f"({x.min():.3e})", sol
        )
    np.clip(x, 0.0, None, out=x)
    alloc = Allocation(x=x, table=ms.table, labels=ms.col_labels)
    decoded = decode_allocation(alloc.per_path_totals(), ms.table)
    return EstimationResult(
        allocation=alloc,
        od_flows=decoded.od_flows,
        splits=decoded.splits,
        status=sol.status,
        objective=sol.objective,
        residual_eq=sol.residual_eq,
        residual_cone=sol.residual_cone,
        iterations=sol.iterations,
        method=method,
        objective_trace=trace,
    )


def estimate_l1(ms: MeasurementSystem, y,
                opts: SolverOptions = DEFAULT_OPTIONS) -> EstimationResult:
    """Sparsest-looking allocation: minimize total flow subject to the counts."""
    y = _check_counts(ms, y, nonnegative=True)
    lp = StandardLP(c=np.ones(ms.n_cols), A=ms.matrix, b=y, sense="min")
    return _finish(ms, solve_lp(lp, opts), "l1")


def estimate_weighted_l1(ms: MeasurementSystem, y, weights: WeightMatrix,
                         opts: SolverOptions = DEFAULT_OPTIONS) -> EstimationResult:
    """Weighted variant: entries with larger weights are penalized harder."""
    y = _check_counts(ms, y, nonnegative=True)
    if weights.lam.shape != (ms.n_cols,):
        raise ValueError("weight vector length does not match column count")
    lp = StandardLP(c=weights.lam, A=ms.matrix, b=y, sense="min")
    return _finish(ms, solve_lp(lp, opts), "weighted-l1")


def estimate_l2(ms: MeasurementSystem, y,
                opts: SolverOptions = DEFAULT_OPTIONS) -> EstimationResult:
    """Minimum-Euclidean-norm allocation; the classical dense baseline."""
    y = _check_counts(ms, y, nonnegative=True)
    cone = ConeProblem(A=ms.matrix, y=y, delta=0.0, objective="l2")
    return _finish(ms, solve_cone(cone, opts), "l2")


def estimate_l1_noisy(ms: MeasurementSystem, y, delta: float,
                      opts: SolverOptions = DEFAULT_OPTIONS) -> EstimationResult:
    """Noise-aware l1 program: counts only have to hold within a ball."""
    y = _check_counts(ms, y, nonnegative=False)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    cone = ConeProblem(A=ms.matrix, y=y, delta=delta, objective="l1")
    return _finish(ms, solve_cone(cone, opts), "l1-noisy")


def estimate_l2_noisy(ms: MeasurementSystem, y, delta: float,
                      opts: SolverOptions = DEFAULT_OPTIONS) -> EstimationResult:
    """Noise-aware minimum-norm program."""
    y = _check_counts(ms, y, nonnegative=False)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    cone = ConeProblem(A=ms.matrix, y=y, delta=delta, objective="l2")
    return _finish(ms, solve_cone(cone, opts), "l2-noisy")


def reweighted_l1(ms: MeasurementSystem, y, iters: int = 4,
                  epsilon: float | None = None,
                  opts: SolverOptions = DEFAULT_OPTIONS) -> EstimationResult:
    """Iterated weighted-l1: each round reweights by 1/(previous flow + eps).

    Entries that came back large are penalized less on the next round,
    sharpening sparse solutions without prior support knowledge.
    ``iters`` counts solves in total, so ``iters=1`` is exactly the plain
    l1 program.  ``epsilon`` defaults to 1e-3 times the largest entry of
    the first solve.  The result carries the total-flow value of every
    round in ``objective_trace``.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if epsilon is not None and epsilon <= 0:
        raise ValueError("epsilon must be positive")
    result = estimate_l1(ms, y, opts)
    trace = [float(np.sum(result.allocation.x))]
    if epsilon is None:
        peak = float(np.max(result.allocation.x, initial=0.0))
        epsilon = max(1e-3 * peak, 1e-12)
    for _ in range(iters - 1):
        lam = 1.0 / (result.allocation.x + epsilon)
        result = estimate_weighted_l1(ms, y, WeightMatrix(lam), opts)
        trace.append(float(np.sum(result.allocation.x)))
    return EstimationResult(
        allocation=result.allocation,
        od_flows=result.od_flows,
        splits=result.splits,
        status=result.status,
        objective=result.objective,
        residual_eq=result.residual_eq,
        residual_cone=result.residual_cone,
        iterations=result.iterations,
        method="reweighted-l1",
        objective_trace=tuple(trace),
    )


@dataclass(frozen=True)
class VmtBounds:
    """Certified travel bounds over all allocations consistent with the counts.

    ``vmt_lower <= v'x_true <= vmt_upper`` for any true allocation that
    produced the counts, where v holds the per-column path lengths.
    """

    x_min: Allocation
    x_max: Allocation
    vmt_lower: float
    vmt_upper: float


def vmt_bounds(ms: MeasurementSystem, y, path_lengths) -> VmtBounds:
    """Bound total vehicle-distance (or vehicle count with unit lengths).

    Solves the minimizing and maximizing linear programs over the feasible
    set.  The maximum is unbounded when some column crosses no measured
    row; that is surfaced, not clipped, so callers can treat it as a
    failed trial.
    """
    y = _check_counts(ms, y, nonnegative=True)
    v = np.asarray(path_lengths, dtype=float).ravel()
    if v.shape != (ms.n_cols,):
        raise ValueError("path_lengths length does not match column count")
    if v.size and v.min() < 0:
        raise ValueError("path lengths must be nonnegative")

    lo = solve_lp(StandardLP(c=v, A=ms.matrix, b=y, sense="min"))
    _raise_for_status(lo, "vmt-min")
    hi = solve_lp(StandardLP(c=v, A=ms.matrix, b=y, sense="max"))
    if hi.status == STATUS_UNBOUNDED:
        label = (
            ms.col_labels[hi.unbounded_index]
            if hi.unbounded_index is not None
            else None
        )
        raise UnboundedError(
            f"vmt-max: unbounded; column {label!r} crosses no measured link",
            hi,
            path_label=label,
        )
    _raise_for_status(hi, "vmt-max")

    def _alloc(sol: Solution) -> Allocation:
        x = np.clip(np.asarray(sol.x, dtype=float), 0.0, None)
        return Allocation(x=x, table=ms.table, labels=ms.col_labels)

    return VmtBounds(
        x_min=_alloc(lo),
        x_max=_alloc(hi),
        vmt_lower=float(lo.objective),
        vmt_upper=float(hi.objective),
    )
