"""Feature-space partitions for locally adaptive cutoffs.

Threshold partitions bin points by their estimated density-level quantile;
profile partitions cluster the whole discretised level cdf ("profile") of
each point with k-means++ under the profile distance

    d(x_a, x_b)^2 = integral of (H(z|x_a) - H(z|x_b))^2 dz,

computed by the trapezoid rule on a shared z grid. Two points far apart in
feature space but with the same predicted level cdf are neighbours here,
which is what lets the partition scale with dimension.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cde import DEFAULT_Z_SIZE, LabelPMF, LevelFunction, Z_HEADROOM, _invert_level_cdf, _pmf_level_values
from .errors import ConfigurationError
from .rng import PARTITION, stream

PARTITION_KINDS = (
    "unitary",
    "threshold-quantile",
    "threshold-kmeans",
    "profile-voronoi",
    "euclidean-voronoi",
)

_MAX_LLOYD_ITERS = 100


@dataclass(frozen=True)
class PartitionModel:
    """A trained partition plus everything needed to assign queries.

    ``breakpoints`` (threshold kinds) are interval edges over q-hat values;
    ``centroids`` (voronoi kinds) hold profile rows or feature rows, with
    ``z_weights`` carrying the trapezoid weights of the shared z grid so the
    squared profile distance is a weighted squared Euclidean distance.
    """

    kind: str
    J: int
    breakpoints: np.ndarray | None = None
    centroids: np.ndarray | None = None
    z_grid: np.ndarray | None = None
    z_weights: np.ndarray | None = None
    centroid_rows: np.ndarray | None = None  # training-row index behind each centroid
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in PARTITION_KINDS:
            raise ConfigurationError(f"unknown partition kind {self.kind!r}")
        if self.J < 1:
            raise ConfigurationError("partition needs J >= 1 elements")


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Weights w with trapz(f, grid) == sum(w * f) for any sampled f."""
    w = np.zeros_like(grid, dtype=float)
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def profile_distance(a: np.ndarray, b: np.ndarray, z_grid: np.ndarray) -> float:
    """Profile distance between two level-cdf discretisations on one z grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape != np.shape(z_grid):
        raise ValueError("profiles and z_grid must have matching lengths")
    w = trapezoid_weights(np.asarray(z_grid, dtype=float))
    return float(np.sqrt(np.sum(w * (a - b) ** 2)))


def unitary_partition() -> PartitionModel:
    return PartitionModel(kind="unitary", J=1)


def build_threshold_partition(
    qhat_values: np.ndarray, J: int, mode: str = "quantile", seed: int = 0
) -> PartitionModel:
    """Intervals over estimated level quantiles.

    quantile mode: equal-count bins with breakpoints at empirical j/J
    quantiles. kmeans1d mode: 1-d k-means++ clusters; interval edges are
    midpoints between sorted adjacent centroids.
    """
    q = np.asarray(qhat_values, dtype=float)
    if J < 1:
        raise ConfigurationError("J must be >= 1")
    distinct = len(np.unique(q))
    flags: tuple[str, ...] = ()
    if J > distinct:
        warnings.warn(f"J={J} exceeds {distinct} distinct values; reduced", stacklevel=2)
        J = distinct
        flags = ("J_reduced",)
    kind = "threshold-quantile" if mode == "quantile" else "threshold-kmeans"
    if J == 1:
        return PartitionModel(kind=kind, J=1, breakpoints=np.empty(0), flags=flags)
    if mode == "quantile":
        bps = np.quantile(q, np.arange(1, J) / J)
    elif mode == "kmeans1d":
        cent, _, _ = kmeans_pp(q[:, None], J, seed=seed)
        c = np.sort(cent[:, 0])
        bps = 0.5 * (c[:-1] + c[1:])
    else:
        raise ConfigurationError(f"unknown threshold mode {mode!r}")
    return PartitionModel(kind=kind, J=J, breakpoints=np.asarray(bps), flags=flags)


def build_profile_partition(
    profiles: np.ndarray, z_grid: np.ndarray, J: int, seed: int = 0
) -> PartitionModel:
    """k-means++ over level-cdf profiles under the squared profile distance.

    Each final centroid is replaced by the training profile nearest to it,
    so partition elements are anchored at actual training points.
    """
    profiles = np.asarray(profiles, dtype=float)
    if J < 1 or J > len(profiles):
        raise ConfigurationError(f"J must lie in [1, {len(profiles)}], got {J}")
    w = trapezoid_weights(np.asarray(z_grid, dtype=float))
    sw = np.sqrt(w)
    cent, _, rows = kmeans_pp(profiles * sw, J, seed=seed, anchor=True)
    return PartitionModel(
        kind="profile-voronoi",
        J=J,
        centroids=profiles[rows],
        z_grid=np.asarray(z_grid, dtype=float),
        z_weights=w,
        centroid_rows=rows,
    )


def build_euclidean_partition(X: np.ndarray, J: int, seed: int = 0) -> PartitionModel:
    """Same clustering machinery under plain feature-space distance."""
    X = np.asarray(X, dtype=float)
    if J < 1 or J > len(X):
        raise ConfigurationError(f"J must lie in [1, {len(X)}], got {J}")
    _, _, rows = kmeans_pp(X, J, seed=seed, anchor=True)
    return PartitionModel(kind="euclidean-voronoi", J=J, centroids=X[rows], centroid_rows=rows)


def assign(partition: PartitionModel, query) -> int:
    """Element index for one query; ties go to the lowest index.

    The query type must match the partition kind: a q-hat value for
    threshold kinds, a profile vector for profile-voronoi, a feature vector
    for euclidean-voronoi.
    """
    return int(assign_batch(partition, np.atleast_2d(query))[0])


def assign_batch(partition: PartitionModel, queries: np.ndarray) -> np.ndarray:
    kind = partition.kind
    if kind == "unitary":
        q = np.atleast_1d(queries)
        return np.zeros(len(q), dtype=int)
    if kind in ("threshold-quantile", "threshold-kmeans"):
        q = np.asarray(queries, dtype=float).ravel()
        return np.searchsorted(partition.breakpoints, q, side="right")
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    cents = partition.centroids
    if queries.shape[1] != cents.shape[1]:
        raise ValueError(
            f"query length {queries.shape[1]} does not match partition "
            f"({kind}) descriptor length {cents.shape[1]}"
        )
    if kind == "profile-voronoi":
        diff = queries[:, None, :] - cents[None, :, :]
        d2 = np.einsum("ijk,k,ijk->ij", diff, partition.z_weights, diff)
    else:
        diff = queries[:, None, :] - cents[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return np.argmin(d2, axis=1)


def partition_query(partition: PartitionModel, model, x, density, alpha: float) -> int:
    """Assign a query point by building whatever query its partition needs.

    ``density`` is the model's evaluation at x (DensityGrid or LabelPMF);
    passing it in avoids re-evaluating the model.
    """
    kind = partition.kind
    if kind == "unitary":
        return 0
    if kind == "euclidean-voronoi":
        return assign(partition, np.ravel(x))
    if isinstance(density, LabelPMF):
        if kind in ("threshold-quantile", "threshold-kmeans"):
            zg = np.linspace(0.0, Z_HEADROOM * float(density.probs.max()), DEFAULT_Z_SIZE)
            q = _invert_level_cdf(zg, _pmf_level_values(density.probs, zg), alpha)
            return assign(partition, q)
        profile = _pmf_level_values(density.probs, partition.z_grid)
        return assign(partition, profile)
    lf = LevelFunction(density.grid, density.values)
    if kind in ("threshold-quantile", "threshold-kmeans"):
        zg = density.default_z_grid()
        q = _invert_level_cdf(zg, lf(zg), alpha)
        return assign(partition, q)
    return assign(partition, lf(partition.z_grid))


# -- k-means++ ----------------------------------------------------------------


def kmeans_pp(
    points: np.ndarray, J: int, seed: int = 0, anchor: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """k-means++ seeding (D^2 sampling) plus Lloyd iterations to a fixpoint.

    Returns (centroids, assignments, anchor_rows). With ``anchor=True`` the
    returned assignments correspond to the anchored centroids (each centroid
    snapped to its nearest input row). Empty clusters are re-seeded at the
    point farthest from the current centroid set. Within-cluster cost is
    asserted non-increasing across Lloyd iterations.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    rng = stream(seed, PARTITION)
    # D^2 seeding
    first = int(rng.integers(n))
    cents = [pts[first]]
    d2 = ((pts - cents[0]) ** 2).sum(axis=1)
    for _ in range(J - 1):
        total = d2.sum()
        if total <= 0:
            probs = np.full(n, 1.0 / n)
        else:
            probs = d2 / total
        nxt = int(rng.choice(n, p=probs))
        cents.append(pts[nxt])
        d2 = np.minimum(d2, ((pts - cents[-1]) ** 2).sum(axis=1))
    C = np.stack(cents)

    def _assign(C):
        dist = ((pts[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(dist, axis=1), dist

    labels, dist = _assign(C)
    prev_cost = dist[np.arange(n), labels].sum()
    for _ in range(_MAX_LLOYD_ITERS):
        newC = C.copy()
        for j in range(J):
            mask = labels == j
            if mask.any():
                newC[j] = pts[mask].mean(axis=0)
            else:
                far = int(np.argmax(dist[np.arange(n), labels]))
                newC[j] = pts[far]
        new_labels, dist = _assign(newC)
        cost = dist[np.arange(n), new_labels].sum()
        assert cost <= prev_cost + 1e-9 * max(prev_cost, 1.0), "Lloyd cost increased"
        C = newC
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        prev_cost = cost

    rows = np.array([int(np.argmin(((pts - c) ** 2).sum(axis=1))) for c in C])
    if anchor:
        labels, _ = _assign(pts[rows])
    return C, labels, rows
