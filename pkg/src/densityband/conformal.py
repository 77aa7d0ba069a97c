"""Split-conformal calibration and prediction-region construction.

The cutoff of a partition element with m calibration scores is the
floor(m * alpha)-th order statistic (1-indexed) of those scores; keeping
``score >= cutoff`` then gives finite-sample coverage by exchangeability.
Elements too small for the order statistic to exist fall back to the global
(unitary) cutoff and are flagged, never silently widened or shrunk.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cde import DensityGrid, FittedCDE, LabelPMF, LevelFunction, _invert_level_cdf
from .errors import ConfigurationError, DegeneracyWarning
from .partition import PartitionModel, partition_query

NEG_INF = float("-inf")


@dataclass(frozen=True)
class PredictionRegion:
    """A finite union of disjoint closed intervals, or a label set."""

    intervals: tuple[tuple[float, float], ...] = ()
    labels: frozenset[int] | None = None
    flags: tuple[str, ...] = ()

    @property
    def is_discrete(self) -> bool:
        return self.labels is not None

    def size(self) -> float:
        """Lebesgue measure (continuous) or label count (discrete)."""
        if self.is_discrete:
            return float(len(self.labels))
        return float(sum(hi - lo for lo, hi in self.intervals))

    def contains(self, y) -> bool:
        if self.is_discrete:
            return int(y) in self.labels
        return any(lo <= y <= hi for lo, hi in self.intervals)


@dataclass(frozen=True)
class CalibrationTable:
    """Per-element sorted calibration scores and their cutoffs."""

    alpha: float
    cutoffs: np.ndarray
    element_scores: tuple[np.ndarray, ...]
    kind: str | None = None
    partition: PartitionModel | None = None
    flags: tuple[str, ...] = ()

    @property
    def n_elements(self) -> int:
        return len(self.cutoffs)

    def cutoff(self, element: int = 0) -> float:
        return float(self.cutoffs[element])


def order_statistic_cutoff(sorted_scores: np.ndarray, alpha: float) -> float:
    """floor(m * alpha)-th smallest score, or -inf when that rank is 0."""
    m = len(sorted_scores)
    rank = int(np.floor(m * alpha))
    if rank < 1:
        return NEG_INF
    return float(sorted_scores[rank - 1])


def calibrate(
    scores: np.ndarray,
    alpha: float,
    assignments: np.ndarray | None = None,
    n_elements: int | None = None,
    kind: str | None = None,
    partition: PartitionModel | None = None,
) -> CalibrationTable:
    """Calibrate per-element cutoffs from scores and element assignments.

    With no assignments the table is unitary (one global cutoff). Elements
    whose floor(m * alpha) rank is zero (including empty elements) fall back
    to the global cutoff with an ``insufficient_calibration`` flag.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    scores = np.asarray(scores, dtype=float)
    if assignments is None:
        assignments = np.zeros(len(scores), dtype=int)
    assignments = np.asarray(assignments, dtype=int)
    if len(assignments) != len(scores):
        raise ValueError("scores and assignments must have equal length")
    J = int(n_elements if n_elements is not None else (assignments.max() + 1 if len(assignments) else 1))
    global_sorted = np.sort(scores)
    global_cutoff = order_statistic_cutoff(global_sorted, alpha)
    flags: list[str] = []
    if global_cutoff == NEG_INF:
        flags.append("insufficient_calibration")
        warnings.warn(
            f"floor(n*alpha) = 0 with n={len(scores)}, alpha={alpha}; "
            "cutoff set to -inf (full-coverage fallback)",
            DegeneracyWarning,
            stacklevel=2,
        )
    cutoffs = np.empty(J)
    element_scores = []
    for j in range(J):
        sj = np.sort(scores[assignments == j])
        element_scores.append(sj)
        cut = order_statistic_cutoff(sj, alpha)
        if cut == NEG_INF:
            if "insufficient_calibration" not in flags:
                flags.append("insufficient_calibration")
            cut = global_cutoff
        cutoffs[j] = cut
    return CalibrationTable(
        alpha=alpha,
        cutoffs=cutoffs,
        element_scores=tuple(element_scores),
        kind=kind,
        partition=partition,
        flags=tuple(flags),
    )


# -- region construction ------------------------------------------------------


def threshold_region(grid: np.ndarray, values: np.ndarray, cutoff: float) -> PredictionRegion:
    """Super-level set {y : density(y) >= cutoff} as closed intervals.

    Interval endpoints are located by linear interpolation between the grid
    points straddling the cutoff; grid endpoints are included when above it.
    """
    if cutoff == NEG_INF or cutoff <= 0.0:
        return PredictionRegion(intervals=((float(grid[0]), float(grid[-1])),))
    above = values >= cutoff
    if not above.any():
        return PredictionRegion(intervals=(), flags=("empty_region",))
    intervals = []
    idx = np.flatnonzero(above)
    splits = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[splits + 1]])
    ends = np.concatenate([idx[splits], [idx[-1]]])
    for s, e in zip(starts, ends):
        if s == 0:
            lo = float(grid[0])
        else:
            lo = _crossing(grid[s - 1], grid[s], values[s - 1], values[s], cutoff)
        if e == len(grid) - 1:
            hi = float(grid[-1])
        else:
            hi = _crossing(grid[e], grid[e + 1], values[e], values[e + 1], cutoff)
        intervals.append((lo, hi))
    region = PredictionRegion(intervals=tuple(intervals))
    step = float(np.max(np.diff(grid)))
    if region.size() <= step:
        region = PredictionRegion(intervals=region.intervals, flags=("degenerate_region",))
    return region


def _crossing(g0, g1, v0, v1, cutoff) -> float:
    if v1 == v0:
        return float(g0)
    return float(g0 + (cutoff - v0) / (v1 - v0) * (g1 - g0))


def predict_region_cd(
    model: FittedCDE, x: np.ndarray, table: CalibrationTable, partition: PartitionModel
) -> PredictionRegion:
    """Density-score region: threshold the density at the assigned element's
    cutoff (locally adaptive when the partition has several elements)."""
    dens = model.evaluate(x)
    element = partition_query(partition, model, x, dens, table.alpha)
    cutoff = table.cutoff(element)
    if isinstance(dens, LabelPMF):
        return _label_region(dens.probs, "cd", cutoff)
    return threshold_region(dens.grid, dens.values, cutoff)


def predict_region_hpd(model: FittedCDE, x: np.ndarray, global_cutoff: float) -> PredictionRegion:
    """Level-score region: translate the score cutoff through the inverse
    level cdf at x, then threshold the density there."""
    if not 0.0 <= global_cutoff <= 1.0:
        raise ValueError(f"hpd cutoff must lie in [0, 1], got {global_cutoff}")
    dens = model.evaluate(x)
    if isinstance(dens, LabelPMF):
        return _label_region(dens.probs, "hpd", global_cutoff)
    if global_cutoff <= 0.0:
        return PredictionRegion(intervals=((float(dens.grid[0]), float(dens.grid[-1])),))
    lf = LevelFunction(dens.grid, dens.values)
    zg = dens.default_z_grid()
    # the true inverse never exceeds the peak density; clip the interpolated
    # one so a cutoff of 1 yields the modal cell rather than an empty set
    z_star = min(_invert_level_cdf(zg, lf(zg), global_cutoff), float(dens.values.max()))
    return threshold_region(dens.grid, dens.values, z_star)


def predict_region_baseline(
    kind: str, aux, x: np.ndarray, cutoff: float, row: np.ndarray | None = None
) -> PredictionRegion:
    """Closed-form interval for the interval baselines at a score cutoff.

    ``row`` optionally carries a precomputed density row for the dist kind.
    """
    c = -cutoff  # scores are negated residuals; c is the residual budget
    X = np.atleast_2d(x)
    if kind == "reg":
        r = float(aux.regressor.predict(X)[0])
        return _interval_region(r - c, r + c)
    if kind == "local-reg":
        r = float(aux.regressor.predict(X)[0])
        rho = float(aux.scale.predict(X)[0])
        return _interval_region(r - c * rho, r + c * rho)
    if kind == "quantile":
        lo, hi = aux.quantiles.predict(X)
        return _interval_region(float(lo[0]) - c, float(hi[0]) + c)
    if kind == "dist":
        c = min(max(c, 0.0), 0.5)
        lo = float(aux.dist.inverse(X, 0.5 - c, row=row))
        hi = float(aux.dist.inverse(X, 0.5 + c, row=row))
        return _interval_region(lo, hi)
    raise ConfigurationError(f"unknown baseline kind {kind!r}")


def _interval_region(lo: float, hi: float) -> PredictionRegion:
    if lo > hi:
        return PredictionRegion(intervals=(), flags=("empty_region",))
    return PredictionRegion(intervals=((lo, hi),))


def predict_label_set(
    model: FittedCDE,
    x: np.ndarray,
    table: CalibrationTable,
    partition: PartitionModel | None = None,
    kind: str = "cd",
) -> PredictionRegion:
    """Label set {labels with score >= cutoff} for discrete targets."""
    pmf = model.evaluate(x)
    if not isinstance(pmf, LabelPMF):
        raise ValueError("predict_label_set needs a discrete-target model")
    if partition is not None and partition.kind != "unitary":
        element = partition_query(partition, model, x, pmf, table.alpha)
    else:
        element = 0
    return _label_region(pmf.probs, kind, table.cutoff(element))


def _label_region(probs: np.ndarray, kind: str, cutoff: float) -> PredictionRegion:
    if kind in ("cd", "probability"):
        scores = probs
    elif kind == "hpd":
        scores = np.where(probs[None, :] <= probs[:, None], probs[None, :], 0.0).sum(axis=1)
    else:
        raise ConfigurationError(f"unknown label score kind {kind!r}")
    labels = frozenset(int(j) for j in np.flatnonzero(scores >= cutoff))
    flags = ("empty_region",) if not labels else ()
    return PredictionRegion(labels=labels, flags=flags)
