"""Monte Carlo studies of recovery behavior, plus grid-path combinatorics.

The harness answers three families of questions on the bundled fixtures:

* how often the l1 program recovers random sparse truths as the number of
  measured links varies (``run_recovery_sweep``);
* how the noise-aware l1 and l2 programs compare under Gaussian count
  noise (``run_noisy_cdf``);
* how tight the travel-distance bounds are when exact recovery fails
  (``run_vmt_sweep``).

Reproducibility: every trial draws from its own Philox4x64-10 substream.
The generator is keyed by the 64-bit experiment seed and jumped once per
(grid point, trial) pair (stream ``p * trials + t`` for point ``p`` and
trial ``t``), so results are independent of execution order and identical
across runs and machines.

Within one trial the support, the allocation, and a single permutation of
the links are drawn in that order; the measured set for every M on the
grid is a prefix of that permutation, making the measurement sets nested
across the grid.

The grid-path counters back the sparsity motivation: on an N-link square
grid the number of monotone corner-to-corner paths is binomial(N, N/2),
while the fraction using few turns collapses exponentially
(``hoeffding_turn_bound``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .estimators import (
    EstimationError,
    InfeasibleError,
    IterationLimitError,
    UnboundedError,
    estimate_l1,
    estimate_l1_noisy,
    estimate_l2_noisy,
    vmt_bounds,
)
from .fixtures import get_fixture
from .network import LinkId, PathTable, build_static_incidence
from .solver import DEFAULT_OPTIONS, SolverOptions


class SparsityRangeError(ValueError):
    """Requested support size is outside 1..N."""


class MeasurementCountError(ValueError):
    """Requested number of measured links is outside 1..L."""


class GridSizeError(ValueError):
    """Grid side count must be a small positive even integer."""


class AlphaRangeError(ValueError):
    """Turn fraction must lie strictly between 0 and 0.5."""


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent Philox substream ``index`` of the experiment ``seed``."""
    return np.random.Generator(np.random.Philox(key=seed).jumped(index))


@dataclass(frozen=True)
class TrialConfig:
    """One grid point of a Monte Carlo study.

    ``support`` is either an explicit tuple of 0-based path positions or an
    integer sparsity level drawn fresh each trial.  ``m`` is the number of
    measured links.
    """

    fixture: str = "fig2"
    support: tuple[int, ...] | int = (4, 8, 12)
    m: int = 10
    noise_sd: float = 0.0
    trials: int = 500
    seed: int = 0
    flow_range: tuple[float, float] = (1.0, 100.0)
    tol: float = 1e-6


def sample_support(pt: PathTable, s: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniformly random size-``s`` subset of path positions, sorted."""
    if not 1 <= s <= pt.n_paths:
        raise SparsityRangeError(f"sparsity {s} outside 1..{pt.n_paths}")
    idx = rng.choice(pt.n_paths, size=s, replace=False)
    return tuple(sorted(int(i) for i in idx))


def sample_allocation(
    pt: PathTable,
    support: Sequence[int],
    rng: np.random.Generator,
    flow_range: tuple[float, float] = (1.0, 100.0),
) -> np.ndarray:
    """Random allocation on the support honoring the split-sum rule.

    For every OD pair touched by the support, one flow is drawn uniformly
    from ``flow_range`` and divided over that pair's supported paths by a
    uniform draw from the simplex, so the per-pair splits (including the
    implied zeros) always sum to one.  OD pairs the support misses get
    zero flow.  Draws happen in OD-pair order.
    """
    support = tuple(support)
    if not support or len(set(support)) != len(support):
        raise SparsityRangeError("support must be nonempty without duplicates")
    for n in support:
        if not 0 <= n < pt.n_paths:
            raise SparsityRangeError(f"path position {n} outside 0..{pt.n_paths - 1}")
    lo, hi = flow_range
    x = np.zeros(pt.n_paths)
    in_support = set(support)
    for k, group in enumerate(pt.paths_by_od):
        touched = [n for n in group if n in in_support]
        if not touched:
            continue
        flow = rng.uniform(lo, hi)
        splits = rng.dirichlet(np.ones(len(touched)))
        for n, w in zip(touched, splits):
            x[n] = flow * w
    return x


def sample_measurements(
    all_links: Sequence[LinkId], m: int, rng: np.random.Generator
) -> tuple[LinkId, ...]:
    """Uniform size-``m`` subset of the links, in their canonical order."""
    if not 1 <= m <= len(all_links):
        raise MeasurementCountError(f"m {m} outside 1..{len(all_links)}")
    perm = rng.permutation(len(all_links))
    return tuple(all_links[i] for i in sorted(perm[:m]))


def add_noise(y, nu: float, rng: np.random.Generator) -> np.ndarray:
    """Counts plus iid Gaussian noise of standard deviation ``nu``.

    Values are deliberately not clipped at zero; the noise-aware programs
    must cope with slightly negative counts.
    """
    if nu < 0:
        raise ValueError("noise standard deviation must be nonnegative")
    y = np.asarray(y, dtype=float)
    if nu == 0:
        return y.copy()
    return y + nu * rng.standard_normal(y.shape)


@dataclass(frozen=True)
class RecoveryFlags:
    """Outcome of one trial under the three nested success definitions.

    Path-allocation success implies OD-flow success implies total-flow
    success by construction, so reported rates are always ordered.
    """

    path_alloc: bool
    od_flow: bool
    total_flow: bool
    rel_error: float


def check_recovery(
    x_hat, x_true, pt: PathTable, tol: float = 1e-6
) -> RecoveryFlags:
    """Grade an estimate against the generating truth.

    Path allocation: relative l2 error at most ``tol``.  OD flow: every
    decoded pair flow within ``tol`` relatively (absolutely, for pairs with
    no true flow).  Total flow: the summed flow within ``tol`` relatively.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    nrm = float(np.linalg.norm(x_true))
    rel = float(np.linalg.norm(x_hat - x_true)) / nrm if nrm > 0 else float(
        np.linalg.norm(x_hat)
    )
    path_ok = rel <= tol

    flows_hat = np.zeros(pt.n_od_pairs)
    flows_true = np.zeros(pt.n_od_pairs)
    for n, k in enumerate(pt.od_of_path):
        flows_hat[k] += x_hat[n]
        flows_true[k] += x_true[n]
    od_ok = bool(
        np.all(np.abs(flows_hat - flows_true) <= tol * np.maximum(flows_true, 1.0))
    )

    tot_true = float(flows_true.sum())
    tot_hat = float(flows_hat.sum())
    total_ok = abs(tot_hat - tot_true) <= tol * max(tot_true, 1.0)

    od_ok = od_ok or path_ok
    total_ok = total_ok or od_ok
    return RecoveryFlags(
        path_alloc=path_ok, od_flow=od_ok, total_flow=total_ok, rel_error=rel
    )


def _stderr(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class SweepPoint:
    """Aggregated rates for one (support spec, M) grid point."""

    support_label: str
    sparsity: int
    m: int
    trials: int
    rate_path: float
    rate_od: float
    rate_total: float
    flags: tuple[RecoveryFlags, ...] = field(repr=False, default=())

    def stderr(self, criterion: str) -> float:
        rate = {"path_alloc": self.rate_path, "od_flow": self.rate_od,
                "total_flow": self.rate_total}[criterion]
        return _stderr(rate, self.trials)


@dataclass(frozen=True)
class RecoveryReport:
    """All grid points of a recovery sweep plus the seed that made them."""

    points: tuple[SweepPoint, ...]
    seed: int

    CRITERIA = ("path_alloc", "od_flow", "total_flow")

    def csv_rows(self):
        """Rows (S, M, criterion, rate, stderr, trials, seed)."""
        rows = []
        for pt in self.points:
            for crit, rate in zip(
                self.CRITERIA, (pt.rate_path, pt.rate_od, pt.rate_total)
            ):
                rows.append(
                    (pt.sparsity, pt.m, crit, rate, _stderr(rate, pt.trials),
                     pt.trials, self.seed)
                )
        return rows


def run_recovery_sweep(
    cfg: TrialConfig,
    m_grid: Sequence[int] | None = None,
    supports: Sequence[tuple[int, ...] | int] | None = None,
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> RecoveryReport:
    """Noiseless l1 recovery rates over a (support, M) grid.

    Each trial samples an allocation (on the fixed support, or on a fresh
    random support when the spec is an integer sparsity), forms exact
    counts on a random measured subset, re-estimates with the l1 program,
    and grades the result under the three criteria.  Infeasible solves and
    iteration limits count as failures.  Measured subsets are nested
    across the M grid within a trial.
    """
    bundle = get_fixture(cfg.fixture)
    pt, net = bundle.table, bundle.network
    link_ids = list(net.link_ids)
    if m_grid is None:
        m_grid = [cfg.m]
    if supports is None:
        supports = [cfg.support]
    m_grid = [int(m) for m in m_grid]
    for m in m_grid:
        if not 1 <= m <= len(link_ids):
            raise MeasurementCountError(f"m {m} outside 1..{len(link_ids)}")

    points: list[SweepPoint] = []
    for p_idx, sup in enumerate(supports):
        per_m: dict[int, list[RecoveryFlags]] = {m: [] for m in m_grid}
        for t in range(cfg.trials):
            rng = substream(cfg.seed, p_idx * cfg.trials + t)
            if isinstance(sup, int):
                support = sample_support(pt, sup, rng)
            else:
                support = tuple(sup)
            x_true = sample_allocation(pt, support, rng, cfg.flow_range)
            perm = rng.permutation(len(link_ids))
            for m in m_grid:
                measured = tuple(link_ids[i] for i in sorted(perm[:m]))
                ms = build_static_incidence(pt, measured, net)
                y = ms.matrix @ x_true
                try:
                    res = estimate_l1(ms, y, opts)
                except EstimationError:
                    per_m[m].append(RecoveryFlags(False, False, False, math.inf))
                    continue
                per_m[m].append(
                    check_recovery(res.allocation.x, x_true, pt, cfg.tol)
                )
        label = f"S={sup}" if isinstance(sup, int) else "fixed" + str(tuple(sup))
        sparsity = sup if isinstance(sup, int) else len(sup)
        for m in m_grid:
            flags = per_m[m]
            points.append(SweepPoint(
                support_label=label,
                sparsity=sparsity,
                m=m,
                trials=cfg.trials,
                rate_path=sum(f.path_alloc for f in flags) / cfg.trials,
                rate_od=sum(f.od_flow for f in flags) / cfg.trials,
                rate_total=sum(f.total_flow for f in flags) / cfg.trials,
                flags=tuple(flags),
            ))
    return RecoveryReport(points=tuple(points), seed=cfg.seed)


@dataclass(frozen=True)
class NoisyCdfReport:
    """Per-method sorted error samples from the noisy comparison.

    Trials whose noisy ball is infeasible (possible in the tails, since the
    default radius is the expected noise norm) contribute an infinite error
    to both methods; ``infeasible_trials`` counts them.
    """

    errors_l1: tuple[float, ...]
    errors_l2: tuple[float, ...]
    delta: float
    seed: int
    infeasible_trials: int = 0

    def quantile(self, method: str, q: float) -> float:
        errs = self.errors_l1 if method == "l1" else self.errors_l2
        return float(np.quantile(np.asarray(errs), q, method="linear"))

    def csv_rows(self):
        """Rows (method, error, cdf), errors ascending per method."""
        rows = []
        for method, errs in (("l1", self.errors_l1), ("l2", self.errors_l2)):
            for i, e in enumerate(errs):
                rows.append((method, e, (i + 1) / len(errs)))
        return rows


def run_noisy_cdf(
    cfg: TrialConfig,
    delta: float | None = None,
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> NoisyCdfReport:
    """Relative-error samples of the noise-aware l1 and l2 programs.

    Both programs see the same noisy counts in every trial.  ``delta``
    defaults to ``noise_sd * sqrt(m)``, the expected noise norm.
    """
    if cfg.noise_sd <= 0:
        raise ValueError("run_noisy_cdf needs a positive noise_sd")
    if isinstance(cfg.support, int):
        raise ValueError("run_noisy_cdf needs an explicit support")
    bundle = get_fixture(cfg.fixture)
    pt, net = bundle.table, bundle.network
    link_ids = list(net.link_ids)
    if delta is None:
        delta = cfg.noise_sd * math.sqrt(cfg.m)

    errs_l1: list[float] = []
    errs_l2: list[float] = []
    infeasible = 0
    for t in range(cfg.trials):
        rng = substream(cfg.seed, t)
        x_true = sample_allocation(pt, cfg.support, rng, cfg.flow_range)
        measured = sample_measurements(link_ids, cfg.m, rng)
        ms = build_static_incidence(pt, measured, net)
        y = add_noise(ms.matrix @ x_true, cfg.noise_sd, rng)
        nrm = float(np.linalg.norm(x_true))
        try:
            r1 = estimate_l1_noisy(ms, y, delta, opts)
            r2 = estimate_l2_noisy(ms, y, delta, opts)
        except (InfeasibleError, IterationLimitError):
            infeasible += 1
            errs_l1.append(math.inf)
            errs_l2.append(math.inf)
            continue
        errs_l1.append(float(np.linalg.norm(r1.allocation.x - x_true)) / nrm)
        errs_l2.append(float(np.linalg.norm(r2.allocation.x - x_true)) / nrm)
    return NoisyCdfReport(
        errors_l1=tuple(sorted(errs_l1)),
        errors_l2=tuple(sorted(errs_l2)),
        delta=delta,
        seed=cfg.seed,
        infeasible_trials=infeasible,
    )


@dataclass(frozen=True)
class VmtSweepPoint:
    """Travel-bound outcomes for one measurement count."""

    m: int
    trials: int
    rate_min: float
    rate_max: float
    mean_ratio_min: float
    mean_ratio_max: float
    unbounded_count: int
    sandwich_violations: int


@dataclass(frozen=True)
class VmtReport:
    points: tuple[VmtSweepPoint, ...]
    seed: int

    def csv_rows(self):
        """Rows (M, rate_min, rate_max, mean_ratio_min, mean_ratio_max,
        unbounded_count)."""
        return [
            (p.m, p.rate_min, p.rate_max, p.mean_ratio_min, p.mean_ratio_max,
             p.unbounded_count)
            for p in self.points
        ]


def run_vmt_sweep(
    cfg: TrialConfig,
    m_grid: Sequence[int],
    recovery_tol: float = 0.001,
) -> VmtReport:
    """Travel-bound recovery study on the Nguyen-Dupuis fixture.

    Each trial routes one random path per OD pair with a random flow, then
    bounds total travel from a random measured subset.  Recovery means the
    bounding program returned the truth itself (absolute l2 error at most
    ``recovery_tol``); among failures the mean ratios of the bounds to the
    true value are recorded.  Trials where the maximizing program is
    unbounded (some path crosses no measured link) count as failures with
    their ratio excluded and are tallied separately.
    """
    bundle = get_fixture(cfg.fixture)
    pt, net = bundle.table, bundle.network
    link_ids = list(net.link_ids)
    lengths = np.array([
        sum(net.link_by_id[lid].length for lid in p.links) for p in pt.paths
    ])

    points: list[VmtSweepPoint] = []
    for p_idx, m in enumerate(m_grid):
        if not 1 <= m <= len(link_ids):
            raise MeasurementCountError(f"m {m} outside 1..{len(link_ids)}")
        rec_min = rec_max = unbounded = violations = 0
        ratios_min: list[float] = []
        ratios_max: list[float] = []
        for t in range(cfg.trials):
            rng = substream(cfg.seed, p_idx * cfg.trials + t)
            x_true = np.zeros(pt.n_paths)
            for group in pt.paths_by_od:
                n = group[rng.integers(len(group))]
                x_true[n] = rng.uniform(*cfg.flow_range)
            measured = sample_measurements(link_ids, m, rng)
            ms = build_static_incidence(pt, measured, net)
            y = ms.matrix @ x_true
            true_value = float(lengths @ x_true)
            try:
                bounds = vmt_bounds(ms, y, lengths)
            except UnboundedError:
                unbounded += 1
                continue
            if not (
                bounds.vmt_lower <= true_value + 1e-6
                and bounds.vmt_upper >= true_value - 1e-6
            ):
                violations += 1
            if float(np.linalg.norm(bounds.x_min.x - x_true)) <= recovery_tol:
                rec_min += 1
            else:
                ratios_min.append(bounds.vmt_lower / true_value)
            if float(np.linalg.norm(bounds.x_max.x - x_true)) <= recovery_tol:
                rec_max += 1
            else:
                ratios_max.append(bounds.vmt_upper / true_value)
        points.append(VmtSweepPoint(
            m=m,
            trials=cfg.trials,
            rate_min=rec_min / cfg.trials,
            rate_max=rec_max / cfg.trials,
            mean_ratio_min=float(np.mean(ratios_min)) if ratios_min else math.nan,
            mean_ratio_max=float(np.mean(ratios_max)) if ratios_max else math.nan,
            unbounded_count=unbounded,
            sandwich_violations=violations,
        ))
    return VmtReport(points=tuple(points), seed=cfg.seed)


def grid_path_count(n: int) -> int:
    """Monotone corner-to-corner paths on an n-link square grid, exactly."""
    if n % 2 != 0 or not 2 <= n <= 60:
        raise GridSizeError("n must be an even integer in 2..60")
    return math.comb(n, n // 2)


def grid_paths_max_turns(n: int, turns: int) -> int:
    """Monotone grid paths using at most ``turns`` direction changes.

    Dynamic program over (position, heading, turns used); exact integer
    arithmetic throughout.
    """
    if n % 2 != 0 or not 2 <= n <= 60:
        raise GridSizeError("n must be an even integer in 2..60")
    if turns < 0:
        raise GridSizeError("turns must be nonnegative")
    side = n // 2
    cap = min(turns, n - 1)
    # layer[(i, j, h)][k] = paths reaching (i, j) with heading h
    # (0 = east, 1 = north) after i + j moves, having used k turns
    layer: dict[tuple[int, int, int], list[int]] = {
        (1, 0, 0): [1] + [0] * cap,
        (0, 1, 1): [1] + [0] * cap,
    }
    for _ in range(n - 1):
        nxt: dict[tuple[int, int, int], list[int]] = {}
        for (i, j, h), counts in layer.items():
            for nh, (ni, nj) in ((0, (i + 1, j)), (1, (i, j + 1))):
                if ni > side or nj > side:
                    continue
                extra = 0 if nh == h else 1
                target = nxt.setdefault((ni, nj, nh), [0] * (cap + 1))
                for k in range(cap + 1 - extra):
                    if counts[k]:
                        target[k + extra] += counts[k]
        layer = nxt
    return sum(sum(layer.get((side, side, h), ())) for h in (0, 1))


def grid_turn_fraction(alpha: float, n: int) -> float:
    """Exact fraction of grid paths making at most ``alpha * n`` turns."""
    if not 0 < alpha < 0.5:
        raise AlphaRangeError("alpha must lie strictly between 0 and 0.5")
    few = grid_paths_max_turns(n, math.floor(alpha * n))
    return float(Fraction(few, grid_path_count(n)))


def hoeffding_turn_bound(alpha: float, n: int) -> float:
    """Tail bound exp(-2 (0.5 - alpha)^2 n) on the few-turn path fraction."""
    if not 0 < alpha < 0.5:
        raise AlphaRangeError("alpha must lie strictly between 0 and 0.5")
    if n <= 0:
        raise GridSizeError("n must be positive")
    return math.exp(-2.0 * (0.5 - alpha) ** 2 * n)
