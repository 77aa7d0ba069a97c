"""Conformity scores: larger always means more conforming.

Residual-style baselines are negated so that a single calibration rule
("keep y while score >= cutoff") serves every method.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial import cKDTree

from .cde import FittedCDE, LabelPMF, LevelFunction, _interp_extrapolate
from .datasets import Dataset
from .errors import ConfigurationError, DegeneracyWarning

SCORE_KINDS = ("cd", "hpd", "dist", "reg", "local-reg", "quantile", "probability")

_RHO_FLOOR = 1e-8


def cd_score(model: FittedCDE, x: np.ndarray, y) -> float:
    """Estimated conditional density at the observed target."""
    dens = model.evaluate(x)
    if isinstance(dens, LabelPMF):
        return float(dens.probs[int(y)])
    return float(dens.at(y))


def hpd_score(model: FittedCDE, x: np.ndarray, y) -> float:
    """Estimated probability mass lying at density levels at or below the
    observed one; in [0, 1] and uniform under a correct density."""
    dens = model.evaluate(x)
    if isinstance(dens, LabelPMF):
        p = dens.probs
        return float(p[p <= p[int(y)]].sum())
    lf = LevelFunction(dens.grid, dens.values)
    return float(lf(float(dens.at(y))))


def probability_score(model: FittedCDE, x: np.ndarray, y) -> float:
    """Estimated pmf at the observed label; identical to cd_score on a pmf."""
    return cd_score(model, x, y)


# -- auxiliary estimators for the interval baselines -------------------------


class NeighborIndex:
    """A k-nearest-neighbour index shared by the baseline estimators.

    Repeated queries with the *same array object* reuse the previous result,
    since every baseline interrogates the same calibration or test block.
    """

    def __init__(self, X: np.ndarray, k: int):
        if not 1 <= k <= len(X):
            raise ConfigurationError(f"k must satisfy 1 <= k <= n_train={len(X)}")
        self._tree = cKDTree(X)
        self.k = k
        self._cache: list[tuple[np.ndarray, np.ndarray]] = []

    def neighbors(self, X: np.ndarray) -> np.ndarray:
        for cached_X, idx in self._cache:
            if cached_X is X:
                return idx
        _, idx = self._tree.query(np.atleast_2d(X), k=self.k)
        idx = np.atleast_2d(idx)
        self._cache.append((X, idx))
        if len(self._cache) > 4:
            self._cache.pop(0)
        return idx


class KnnRegressor:
    """Neighbour-average estimate of the regression function."""

    def __init__(self, train: Dataset, k: int, index: NeighborIndex | None = None):
        self._index = index if index is not None else NeighborIndex(train.X, k)
        self._y = train.y.astype(float)
        self.k = self._index.k

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._y[self._index.neighbors(X)].mean(axis=1)


class KnnScale:
    """Neighbour-average of training absolute residuals |y - r(x)|."""

    def __init__(self, train: Dataset, regressor: KnnRegressor, k: int,
                 index: NeighborIndex | None = None):
        self._resid = np.abs(train.y - regressor.predict(train.X))
        self._index = index if index is not None else NeighborIndex(train.X, k)
        self.k = self._index.k

    def predict(self, X: np.ndarray) -> np.ndarray:
        rho = self._resid[self._index.neighbors(X)].mean(axis=1)
        if np.any(rho <= 0):
            warnings.warn(
                "scale estimate hit zero; floored at 1e-8", DegeneracyWarning, stacklevel=2
            )
            rho = np.clip(rho, _RHO_FLOOR, None)
        return rho


class KnnQuantiles:
    """Neighbour empirical (alpha/2, 1-alpha/2) conditional quantiles."""

    def __init__(self, train: Dataset, k: int, alpha: float,
                 index: NeighborIndex | None = None):
        self._index = index if index is not None else NeighborIndex(train.X, k)
        self._y = train.y.astype(float)
        self.k = self._index.k
        self.alpha = alpha

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nbr = self._y[self._index.neighbors(X)]
        lo = np.quantile(nbr, self.alpha / 2.0, axis=1)
        hi = np.quantile(nbr, 1.0 - self.alpha / 2.0, axis=1)
        return lo, hi


class DistCdf:
    """Conditional cdf F(y|x) obtained by integrating a fitted density."""

    def __init__(self, model: FittedCDE):
        if model.is_discrete:
            raise ConfigurationError("dist scores need a continuous-target model")
        self.model = model

    def _cdf_row(self, row: np.ndarray) -> np.ndarray:
        grid = self.model.grid
        steps = 0.5 * np.diff(grid) * (row[:-1] + row[1:])
        cdf = np.concatenate([[0.0], np.cumsum(steps)])
        return cdf / cdf[-1]

    def cdf(self, x: np.ndarray, y, row: np.ndarray | None = None) -> float:
        if row is None:
            row = self.model.evaluate_batch(np.atleast_2d(x))[0]
        cdf = self._cdf_row(row)
        return float(np.clip(np.interp(y, self.model.grid, cdf), 0.0, 1.0))

    def inverse(self, x: np.ndarray, p, row: np.ndarray | None = None) -> np.ndarray | float:
        if row is None:
            row = self.model.evaluate_batch(np.atleast_2d(x))[0]
        cdf = self._cdf_row(row)
        return np.interp(p, cdf, self.model.grid)


class BaselineAux:
    """Fitted auxiliaries for the interval baselines; fit once per split.

    All neighbour estimators share one index so evaluating several baselines
    on the same block queries the tree once.
    """

    def __init__(
        self,
        train: Dataset,
        k: int = 100,
        alpha: float = 0.1,
        cde: FittedCDE | None = None,
        kinds: tuple[str, ...] = ("reg", "local-reg", "quantile", "dist"),
    ):
        self.alpha = alpha
        index = (
            NeighborIndex(train.X, k)
            if {"reg", "local-reg", "quantile"} & set(kinds)
            else None
        )
        self.regressor = (
            KnnRegressor(train, k, index) if {"reg", "local-reg"} & set(kinds) else None
        )
        self.scale = (
            KnnScale(train, self.regressor, k, index)
            if "local-reg" in kinds and self.regressor
            else None
        )
        self.quantiles = KnnQuantiles(train, k, alpha, index) if "quantile" in kinds else None
        self.dist = DistCdf(cde) if "dist" in kinds and cde is not None else None


def baseline_score(kind: str, aux: BaselineAux, x: np.ndarray, y) -> float:
    """Score of one (x, y) for an interval baseline; larger = more conforming."""
    return float(baseline_scores_batch(kind, aux, np.atleast_2d(x), np.atleast_1d(y))[0])


def baseline_scores_batch(
    kind: str, aux: BaselineAux, X: np.ndarray, ys: np.ndarray, rows: np.ndarray | None = None
) -> np.ndarray:
    """Scores for a block of points; ``rows`` lets dist reuse density rows."""
    ys = np.asarray(ys, dtype=float)
    if kind == "reg":
        return -np.abs(ys - aux.regressor.predict(X))
    if kind == "local-reg":
        return -np.abs(ys - aux.regressor.predict(X)) / aux.scale.predict(X)
    if kind == "quantile":
        lo, hi = aux.quantiles.predict(X)
        return -np.maximum(lo - ys, ys - hi)
    if kind == "dist":
        if rows is None:
            rows = aux.dist.model.evaluate_batch(X)
        grid = aux.dist.model.grid
        out = np.empty(len(rows))
        for i, row in enumerate(rows):
            cdf = aux.dist._cdf_row(row)
            out[i] = -abs(np.interp(ys[i], grid, cdf) - 0.5)
        return out
    raise ConfigurationError(f"unknown baseline score kind {kind!r}")


# -- batched density scores ---------------------------------------------------


def cd_scores_batch(grid: np.ndarray, densities: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Density rows evaluated at their own targets (continuous)."""
    from .cde import _interp_rows

    return _interp_rows(grid, densities, ys)


def pmf_scores_batch(pmfs: np.ndarray, ys: np.ndarray, kind: str) -> np.ndarray:
    """Per-row cd or hpd scores for a (m, L) matrix of pmfs."""
    ys = np.asarray(ys, dtype=int)
    at = pmfs[np.arange(len(pmfs)), ys]
    if kind in ("cd", "probability"):
        return at
    if kind == "hpd":
        return np.where(pmfs <= at[:, None], pmfs, 0.0).sum(axis=1)
    raise ConfigurationError(f"unknown pmf score kind {kind!r}")
