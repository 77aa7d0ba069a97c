"""Conditional density estimation and density-level functionals.

A fitted model maps a feature vector to a :class:`DensityGrid` (continuous
targets) or a :class:`LabelPMF` (discrete targets). From either one we derive
the level cdf H(z|x) -- the probability that the density of Y at its own draw
falls at or below level z -- and its quantiles, which drive every method in
the package.

H is evaluated exactly for the piecewise-linear density implied by the grid:
each grid segment contributes a closed-form quadratic-in-z amount, assembled
with an event sweep over segment endpoint levels. This keeps H consistent
with the trapezoid rule while avoiding mask-boundary discretisation error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .datasets import Dataset, Scenario, oracle_density
from .errors import ConfigurationError, DegeneracyWarning

try:  # hot loop; the numpy path below is the reference implementation
    import numba
except ImportError:  # pragma: no cover
    numba = None

DEFAULT_GRID_SIZE = 1000
DEFAULT_Z_SIZE = 128
GRID_MARGIN = 0.25  # fraction of the training target range added on each side
Z_HEADROOM = 1.05  # z grids extend to this multiple of the peak density

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DensityGrid:
    """A conditional density sampled on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise ValueError("grid and values must be matching 1-d arrays")
        if len(grid) < 16:
            raise ValueError("density grid needs at least 16 points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and nonnegative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @cached_property
    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def normalized(self) -> "DensityGrid":
        return DensityGrid(self.grid, self.values / self.integral)

    def at(self, y: float | np.ndarray) -> np.ndarray | float:
        """Density at ``y``: linear on the grid, edge-slope extrapolated
        outside and clipped at zero."""
        return _interp_extrapolate(y, self.grid, self.values)

    def default_z_grid(self, size: int = DEFAULT_Z_SIZE) -> np.ndarray:
        return np.linspace(0.0, Z_HEADROOM * float(self.values.max()), size)


@dataclass(frozen=True)
class LabelPMF:
    """A conditional probability mass function over labels 0..L-1."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0):
            raise ValueError("probs must be a nonnegative vector")
        object.__setattr__(self, "probs", p / p.sum())

    @property
    def n_labels(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class LevelCdf:
    """H(z|x) sampled on a z grid: nondecreasing, ends at 1."""

    z_grid: np.ndarray
    values: np.ndarray

    def __call__(self, z: float | np.ndarray) -> np.ndarray | float:
        return np.interp(z, self.z_grid, self.values)


# -- exact level machinery --------------------------------------------------


class LevelFunction:
    """Exact H(z) = integral of f over {y : f(y) <= z} for a DensityGrid.

    A grid segment with endpoint levels (va <= vb) and width h contributes
    gamma * (min(z, vb)^2 - va^2) once z >= va, with gamma = h / (2 (vb-va));
    flat segments contribute their full trapezoid mass as a step at va.
    Sorting the endpoint events once makes any number of later evaluations
    O(log G) apiece.
    """

    __slots__ = ("_z", "_qa", "_qc", "_z_end", "total")

    def __init__(self, grid: np.ndarray, values: np.ndarray):
        a = values[:-1]
        b = values[1:]
        h = np.diff(grid)
        va = np.minimum(a, b)
        vb = np.maximum(a, b)
        full = 0.5 * h * (a + b)
        span = vb - va
        scale = max(float(values.max()), 1e-300)
        # near-flat segments become steps at their level: this caps the
        # quadratic coefficients (else the event cumsums lose precision) at
        # the price of an H error below the segment's own mass ~ h * va * 1e-6
        flat = span <= 1e-6 * scale
        g = np.where(flat, 0.0, h / (2.0 * np.where(flat, 1.0, span)))
        ev_z = np.concatenate([va, vb[~flat]])
        ev_a = np.concatenate([g, -g[~flat]])
        ev_c = np.concatenate([np.where(flat, full, -g * va * va), (g * vb * vb)[~flat]])
        order = np.argsort(ev_z, kind="stable")
        self._z = ev_z[order]
        self._qa = np.cumsum(ev_a[order])
        self._qc = np.cumsum(ev_c[order])
        self._z_end = float(self._z[-1]) if len(self._z) else 0.0
        self.total = float(full.sum())

    def __call__(self, z: float | np.ndarray) -> np.ndarray | float:
        z_arr = np.asarray(z, dtype=float)
        idx = np.searchsorted(self._z, z_arr, side="right") - 1
        safe = np.clip(idx, 0, None)
        raw = self._qa[safe] * z_arr * z_arr + self._qc[safe]
        out = np.where(idx >= 0, raw, 0.0) / self.total
        out = np.where(z_arr >= self._z_end, 1.0, out)  # past the last event H is exact
        out = np.clip(out, 0.0, 1.0)
        return float(out) if np.isscalar(z) else out


def level_cdf(density: DensityGrid | LabelPMF, z_grid: np.ndarray | None = None) -> LevelCdf:
    """H(z|x) on ``z_grid`` (defaults to 128 points up to 1.05x the peak)."""
    if isinstance(density, LabelPMF):
        if z_grid is None:
            z_grid = np.linspace(0.0, Z_HEADROOM * float(density.probs.max()), DEFAULT_Z_SIZE)
        return LevelCdf(z_grid, _pmf_level_values(density.probs, z_grid))
    if z_grid is None:
        z_grid = density.default_z_grid()
    lf = LevelFunction(density.grid, density.values)
    return LevelCdf(z_grid, lf(z_grid))


def level_quantile(
    density: DensityGrid | LabelPMF, alpha: float, z_grid: np.ndarray | None = None
) -> float:
    """Estimated alpha-quantile of the density level: the smallest z on the
    z grid with H(z) >= alpha, linearly interpolated between brackets.

    Plateau densities make H jump; the interpolated jump location is
    returned and a :class:`DegeneracyWarning` is emitted.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    cdf = level_cdf(density, z_grid)
    return _invert_level_cdf(cdf.z_grid, cdf.values, alpha, warn=True)


def _invert_level_cdf(zg: np.ndarray, H: np.ndarray, alpha: float, warn: bool = False) -> float:
    i = int(np.searchsorted(H, alpha, side="left"))
    if i >= len(zg):
        return float(zg[-1])
    if i == 0:
        return float(zg[0])
    h0, h1 = H[i - 1], H[i]
    if warn and h1 - h0 > 0.25:
        warnings.warn(
            f"level cdf jumps by {h1 - h0:.3g} at the {alpha}-quantile (plateau density)",
            DegeneracyWarning,
            stacklevel=3,
        )
    if h1 == h0:
        return float(zg[i])
    return float(zg[i - 1] + (alpha - h0) / (h1 - h0) * (zg[i] - zg[i - 1]))


def _pmf_level_values(probs: np.ndarray, z_grid: np.ndarray) -> np.ndarray:
    order = np.argsort(probs, kind="stable")
    cum = np.cumsum(probs[order])
    pos = np.searchsorted(probs[order], z_grid, side="right") - 1
    vals = np.where(pos >= 0, cum[np.clip(pos, 0, None)], 0.0)
    return np.clip(vals / cum[-1], 0.0, 1.0)


# -- batched level outputs ---------------------------------------------------


def batch_level_outputs(
    grid: np.ndarray,
    densities: np.ndarray,
    ys: np.ndarray | None = None,
    alpha: float | None = None,
    z_grid: np.ndarray | None = None,
):
    """Per-row level quantities for a (m, G) density matrix.

    Returns a dict with any of: ``hpd_scores`` (H at each row's own target,
    needs ``ys``), ``quantiles`` (needs ``alpha``), ``profiles`` (needs
    ``z_grid``). Same event-sweep construction as :class:`LevelFunction`,
    vectorised across rows.
    """
    densities = np.atleast_2d(np.asarray(densities, dtype=float))
    m, G = densities.shape
    a = densities[:, :-1]
    b = densities[:, 1:]
    h = np.diff(grid)[None, :]
    va = np.minimum(a, b)
    vb = np.maximum(a, b)
    full = 0.5 * h * (a + b)
    span = vb - va
    scale = np.maximum(densities.max(axis=1, keepdims=True), 1e-300)
    flat = span <= 1e-6 * scale
    g = np.where(flat, 0.0, h / (2.0 * np.where(flat, 1.0, span)))
    # flat segments keep a zero end event at va so every row has 2(G-1) events
    ev_z = np.concatenate([va, np.where(flat, va, vb)], axis=1)
    ev_a = np.concatenate([g, -g], axis=1)
    ev_c = np.concatenate([np.where(flat, full, -g * va * va), np.where(flat, 0.0, g * vb * vb)], axis=1)
    order = np.argsort(ev_z, axis=1, kind="stable")
    ev_z = np.take_along_axis(ev_z, order, axis=1)
    qa = np.cumsum(np.take_along_axis(ev_a, order, axis=1), axis=1)
    qc = np.cumsum(np.take_along_axis(ev_c, order, axis=1), axis=1)
    totals = full.sum(axis=1)
    z_end = ev_z[:, -1]

    # fuse all query kinds into one per-row pass
    blocks: list[np.ndarray] = []
    if ys is not None:
        blocks.append(_interp_rows(grid, densities, ys)[:, None])
    if alpha is not None:
        zg_rows = np.linspace(
            np.zeros(m), Z_HEADROOM * densities.max(axis=1), DEFAULT_Z_SIZE, axis=1
        )
        blocks.append(zg_rows)
    if z_grid is not None:
        blocks.append(np.broadcast_to(z_grid, (m, len(z_grid))))
    if not blocks:
        return {}
    queries = np.concatenate(blocks, axis=1)
    vals = np.empty_like(queries)
    for i in range(m):
        idx = np.searchsorted(ev_z[i], queries[i], side="right") - 1
        safe = np.clip(idx, 0, None)
        raw = qa[i, safe] * queries[i] * queries[i] + qc[i, safe]
        v = np.where(idx >= 0, raw, 0.0) / totals[i]
        v = np.where(queries[i] >= z_end[i], 1.0, v)
        vals[i] = np.clip(v, 0.0, 1.0)
    out = {}
    pos = 0
    if ys is not None:
        out["hpd_scores"] = vals[:, 0]
        pos = 1
    if alpha is not None:
        H_rows = vals[:, pos : pos + DEFAULT_Z_SIZE]
        out["quantiles"] = np.array(
            [_invert_level_cdf(zg_rows[i], H_rows[i], alpha) for i in range(m)]
        )
        pos += DEFAULT_Z_SIZE
    if z_grid is not None:
        out["profiles"] = vals[:, pos:]
    return out


# -- fitted models ------------------------------------------------------------


class FittedCDE:
    """Base for fitted conditional density models. Immutable after fit."""

    kind: str = "external"
    is_discrete: bool = False
    grid: np.ndarray | None = None

    def evaluate(self, x: np.ndarray):
        raise NotImplementedError

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        """Density rows (continuous) or pmf rows (discrete) for each query."""
        raise NotImplementedError


class KnnKernelCDE(FittedCDE):
    """Average of Gaussian kernels over the k nearest training neighbours.

    h(y|x) = mean_j N(y; Y_j, bandwidth^2) over the k nearest x-neighbours;
    rows are renormalised on the grid.
    """

    kind = "knn-kernel"

    def __init__(self, train: Dataset, k: int, bandwidth: float, grid: np.ndarray):
        self._tree = cKDTree(train.X)
        self._train_y = train.y.astype(float)
        self.k = k
        self.bandwidth = float(bandwidth)
        self.grid = np.asarray(grid, dtype=float)
        self.d = train.d

    def evaluate(self, x: np.ndarray) -> DensityGrid:
        return DensityGrid(self.grid, self.evaluate_batch(np.atleast_2d(x))[0])

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"query has dimension {X.shape[1]}, model expects {self.d}")
        _, idx = self._tree.query(X, k=self.k)
        centers = self._train_y[np.atleast_2d(idx)]
        out = _kernel_rows(centers, self.grid, self.bandwidth)
        out /= self.k * self.bandwidth * _SQRT2PI
        norms = np.trapezoid(out, self.grid, axis=1)
        np.clip(norms, 1e-300, None, out=norms)
        out /= norms[:, None]
        return out


class KnnLabelCDE(FittedCDE):
    """Neighbour-vote conditional pmf estimate for discrete targets."""

    kind = "knn-kernel"
    is_discrete = True

    def __init__(self, train: Dataset, k: int, n_labels: int | None = None):
        self._tree = cKDTree(train.X)
        self._train_y = train.y.astype(int)
        self.k = k
        self.n_labels = int(n_labels if n_labels is not None else self._train_y.max() + 1)
        self.d = train.d

    def evaluate(self, x: np.ndarray) -> LabelPMF:
        return LabelPMF(self.evaluate_batch(np.atleast_2d(x))[0])

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"query has dimension {X.shape[1]}, model expects {self.d}")
        _, idx = self._tree.query(X, k=self.k)
        labels = self._train_y[np.atleast_2d(idx)]
        counts = np.stack([(labels == j).sum(axis=1) for j in range(self.n_labels)], axis=1)
        return counts / self.k


class OracleCDE(FittedCDE):
    """The scenario's true conditional law wrapped as a fitted model."""

    kind = "oracle"

    def __init__(self, scenario: Scenario, grid: np.ndarray | None = None, grid_size: int = DEFAULT_GRID_SIZE):
        self.scenario = scenario
        self.is_discrete = scenario.is_classification
        self.d = scenario.d
        if not self.is_discrete:
            self.grid = np.asarray(grid, dtype=float) if grid is not None else scenario.default_grid(grid_size)

    def evaluate(self, x: np.ndarray):
        if self.is_discrete:
            return LabelPMF(self.scenario.label_probs(np.ravel(x)[0])[0])
        return oracle_density(self.scenario, x, self.grid)

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"query has dimension {X.shape[1]}, scenario expects {self.d}")
        if self.is_discrete:
            return self.scenario.label_probs(X[:, 0])
        out = np.empty((len(X), len(self.grid)))
        for i, x in enumerate(X):
            out[i] = self.scenario.density_values(x, self.grid)
        out /= np.trapezoid(out, self.grid, axis=1)[:, None]
        return out


class ExternalCDE(FittedCDE):
    """Plug-in adapter: any callable x -> density values on a fixed grid."""

    kind = "external"

    def __init__(self, fn, grid: np.ndarray, d: int):
        self._fn = fn
        self.grid = np.asarray(grid, dtype=float)
        self.d = d

    def evaluate(self, x: np.ndarray) -> DensityGrid:
        return DensityGrid(self.grid, np.asarray(self._fn(np.ravel(x)))).normalized()

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.stack([np.asarray(self._fn(x), dtype=float) for x in X])
        out /= np.trapezoid(out, self.grid, axis=1)[:, None]
        return out


def _kernel_rows_numpy(centers: np.ndarray, grid: np.ndarray, bandwidth: float) -> np.ndarray:
    """Sum of Gaussian kernels per row; reference path when numba is absent."""
    out = np.empty((len(centers), len(grid)))
    # chunk so the (rows, k, G) kernel tensor stays within ~2e7 floats
    step = max(1, int(2e7 / max(centers.shape[1] * len(grid), 1)))
    inv = 1.0 / bandwidth
    for i in range(0, len(centers), step):
        z = (grid[None, None, :] - centers[i : i + step, :, None]) * inv
        out[i : i + step] = np.exp(-0.5 * z * z).sum(axis=1)
    return out


if numba is not None:

    @numba.njit(parallel=True, fastmath=True, cache=True)
    def _kernel_rows(centers, grid, bandwidth):  # pragma: no cover - jitted
        # kernels truncated at 8 sigma (relative error < 1e-14); each row is
        # filled by a single thread, so results don't depend on thread count
        m, k = centers.shape
        out = np.zeros((m, grid.size))
        cut = 8.0 * bandwidth
        inv = 1.0 / bandwidth
        for i in numba.prange(m):
            for j in range(k):
                c = centers[i, j]
                lo = np.searchsorted(grid, c - cut)
                hi = np.searchsorted(grid, c + cut)
                for g in range(lo, hi):
                    z = (grid[g] - c) * inv
                    out[i, g] += np.exp(-0.5 * z * z)
        return out

else:  # pragma: no cover
    _kernel_rows = _kernel_rows_numpy


def default_target_grid(
    train_y: np.ndarray, size: int = DEFAULT_GRID_SIZE, min_margin: float = 0.0
) -> np.ndarray:
    """Training-range grid with a 25% margin on each side.

    ``min_margin`` widens the margin when the target range alone cannot
    carry the kernels (degenerate or near-constant training targets).
    """
    lo, hi = float(np.min(train_y)), float(np.max(train_y))
    margin = max(GRID_MARGIN * (hi - lo), min_margin, 1e-9)
    return np.linspace(lo - margin, hi + margin, size)


def fit_knn_kernel(
    train: Dataset,
    k: int,
    bandwidth: float = 0.3,
    grid: np.ndarray | None = None,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> FittedCDE:
    """Fit the neighbour-kernel estimator (or neighbour vote for labels)."""
    n = len(train)
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must satisfy 1 <= k <= n_train={n}, got k={k}")
    if train.task == "classification":
        return KnnLabelCDE(train, k)
    if bandwidth <= 0:
        raise ConfigurationError(f"bandwidth must be positive, got {bandwidth}")
    if grid is None:
        grid = default_target_grid(train.y, grid_size, min_margin=4.0 * bandwidth)
    return KnnKernelCDE(train, k, bandwidth, grid)


def evaluate(model: FittedCDE, x: np.ndarray):
    """Density (or pmf) of the fitted model at a single feature vector."""
    return model.evaluate(x)


def estimate_cde_loss(model: FittedCDE, held_out: Dataset) -> float:
    """Squared-error density loss up to the model-independent constant:
    mean_i [ integral of h(.|x_i)^2 - 2 h(y_i|x_i) ]. Smaller is better."""
    if len(held_out) == 0:
        raise ValueError("held-out set must be nonempty")
    rows = model.evaluate_batch(held_out.X)
    if model.is_discrete:
        sq = (rows**2).sum(axis=1)
        at = rows[np.arange(len(rows)), held_out.y.astype(int)]
    else:
        sq = np.trapezoid(rows**2, model.grid, axis=1)
        at = np.array(
            [_interp_extrapolate(y, model.grid, row) for y, row in zip(held_out.y, rows)]
        )
    return float(np.mean(sq - 2.0 * at))


def _interp_extrapolate(y, grid, values):
    """Linear interpolation with edge-slope extrapolation, clipped at 0."""
    y_arr = np.asarray(y, dtype=float)
    out = np.interp(y_arr, grid, values)
    lo_slope = (values[1] - values[0]) / (grid[1] - grid[0])
    hi_slope = (values[-1] - values[-2]) / (grid[-1] - grid[-2])
    out = np.where(y_arr < grid[0], values[0] + (y_arr - grid[0]) * lo_slope, out)
    out = np.where(y_arr > grid[-1], values[-1] + (y_arr - grid[-1]) * hi_slope, out)
    out = np.clip(out, 0.0, None)
    return float(out) if np.isscalar(y) else out


def _interp_rows(grid: np.ndarray, rows: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Row i of ``rows`` linearly interpolated at ``ys[i]``; same
    extrapolation-and-clip convention as :func:`_interp_extrapolate`."""
    ys = np.asarray(ys, dtype=float)
    m = len(rows)
    hi = np.clip(np.searchsorted(grid, ys, side="left"), 1, len(grid) - 1)
    lo = hi - 1
    g_lo, g_hi = grid[lo], grid[hi]
    t = (ys - g_lo) / (g_hi - g_lo)
    ar = np.arange(m)
    out = rows[ar, lo] * (1.0 - t) + rows[ar, hi] * t
    return np.clip(out, 0.0, None)
