"""Evaluation of prediction regions against targets and oracle densities.

All metrics are deterministic functions of their inputs. Oracle-based
metrics integrate the scenario's true conditional density over regions by
the trapezoid rule with interpolated interval endpoints; oracle highest-
density sets are built by grid brute force (level search on the z grid).
"""

from __future__ import annotations

import warnings

import numpy as np

from .cde import DensityGrid, LevelFunction, _invert_level_cdf
from .conformal import PredictionRegion, threshold_region
from .datasets import Scenario, oracle_density
from .errors import ConfigurationError

Intervals = tuple[tuple[float, float], ...]


def marginal_coverage(regions, true_targets) -> float:
    """Fraction of targets inside their regions (closed endpoints)."""
    targets = np.asarray(true_targets)
    if len(regions) != len(targets) or len(regions) == 0:
        raise ValueError("regions and targets must have equal nonzero length")
    return float(np.mean([r.contains(t) for r, t in zip(regions, targets)]))


def region_size(region: PredictionRegion) -> float:
    """Lebesgue measure of an interval union, or label count."""
    return region.size()


def interval_intersection(a: Intervals, b: Intervals) -> Intervals:
    """Intersection of two sorted disjoint interval unions."""
    out = []
    i = j = 0
    a, b = list(a), list(b)
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo <= hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return tuple(out)


def _measure(intervals: Intervals) -> float:
    return float(sum(hi - lo for lo, hi in intervals))


def integrate_density_over(density: DensityGrid, intervals: Intervals) -> tuple[float, bool]:
    """Mass of a density over an interval union; flags truncation when an
    interval pokes outside the density's grid support."""
    grid, values = density.grid, density.values
    steps = 0.5 * np.diff(grid) * (values[:-1] + values[1:])
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    total = cum[-1]
    clipped = False
    mass = 0.0
    for lo, hi in intervals:
        if hi < grid[0] or lo > grid[-1]:
            clipped = True
            continue
        if lo < grid[0] or hi > grid[-1]:
            clipped = True
        lo_c, hi_c = max(lo, grid[0]), min(hi, grid[-1])
        mass += np.interp(hi_c, grid, cum) - np.interp(lo_c, grid, cum)
    return float(mass / total), clipped


def conditional_coverage_probs(
    regions, test_xs: np.ndarray, scenario: Scenario, grid: np.ndarray | None = None
) -> np.ndarray:
    """True conditional coverage P(Y in C | x) for each region."""
    test_xs = np.atleast_2d(test_xs)
    if len(regions) != len(test_xs):
        raise ValueError("regions and test points must have equal length")
    if scenario.is_classification:
        probs = scenario.label_probs(test_xs[:, 0])
        return np.array(
            [p[list(r.labels)].sum() if r.labels else 0.0 for p, r in zip(probs, regions)]
        )
    if grid is None:
        grid = scenario.default_grid()
    out = np.empty(len(regions))
    flagged = False
    for i, (x, r) in enumerate(zip(test_xs, regions)):
        dens = oracle_density(scenario, x, grid)
        out[i], clipped = integrate_density_over(dens, r.intervals)
        flagged = flagged or clipped
    if flagged:
        warnings.warn("some regions extend outside the oracle grid; overlap integrated",
                      stacklevel=2)
    return out


def conditional_coverage_deviation(
    regions, test_xs: np.ndarray, scenario: Scenario, alpha: float,
    grid: np.ndarray | None = None,
) -> float:
    """Mean absolute deviation of conditional coverage from 1 - alpha."""
    probs = conditional_coverage_probs(regions, test_xs, scenario, grid)
    return float(np.mean(np.abs(probs - (1.0 - alpha))))


def sscv(regions, true_targets, n_bins: int = 5, alpha: float = 0.1) -> float:
    """Size-stratified coverage violation: worst |coverage - (1-alpha)|
    over equal-count bins of test points stratified by region size."""
    if n_bins < 1:
        raise ConfigurationError("n_bins must be >= 1")
    targets = np.asarray(true_targets)
    n = len(regions)
    if n == 0:
        raise ValueError("need at least one region")
    if n < n_bins:
        warnings.warn(f"only {n} points for {n_bins} bins; merging", stacklevel=2)
        n_bins = n
    sizes = np.array([r.size() for r in regions])
    covered = np.array([r.contains(t) for r, t in zip(regions, targets)], dtype=float)
    order = np.argsort(sizes, kind="stable")
    worst = 0.0
    for chunk in np.array_split(order, n_bins):
        if len(chunk) == 0:
            continue
        worst = max(worst, abs(covered[chunk].mean() - (1.0 - alpha)))
    return float(worst)


def oracle_hpd_region(
    scenario: Scenario, x: np.ndarray, alpha: float, grid: np.ndarray | None = None
) -> PredictionRegion:
    """True highest-density set at level 1 - alpha by grid brute force."""
    if grid is None:
        grid = scenario.default_grid()
    dens = oracle_density(scenario, x, grid)
    lf = LevelFunction(dens.grid, dens.values)
    zg = dens.default_z_grid()
    q = _invert_level_cdf(zg, lf(zg), alpha)
    return threshold_region(dens.grid, dens.values, q)


def hpd_symmetric_difference(
    region: PredictionRegion,
    scenario: Scenario,
    x: np.ndarray,
    alpha: float,
    grid: np.ndarray | None = None,
) -> float:
    """Lebesgue measure of region symmetric-difference oracle HPD set."""
    star = oracle_hpd_region(scenario, x, alpha, grid)
    a, b = region.intervals, star.intervals
    inter = _measure(interval_intersection(a, b))
    return _measure(a) + _measure(b) - 2.0 * inter
