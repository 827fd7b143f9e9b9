"""Partition a training set into granules with K-means.

Lloyd iterations from k-means++ seeding, restarted a configurable number
of times with the lowest-error run kept. Everything is deterministic
under the seed: assignment ties go to the lowest centroid index, granule
contributions are ordered by index, and clusters that empty during an
update are repaired by stealing the point farthest from the empty
cluster's current centroid.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import DataError
from .rng import make_rng


@dataclass(frozen=True)
class Granulation:
    """Result of clustering: a full partition of the training rows.

    granule_members holds one ascending index list per granule; they are
    pairwise disjoint and jointly cover every row, and no granule is
    empty. clustering_error is the sum of squared distances of each row
    to its assigned centroid.
    """

    assignments: np.ndarray
    centroids: np.ndarray
    granule_members: tuple
    clustering_error: float
    iterations_run: int
    seed: int

    def __post_init__(self):
        assignments = np.asarray(self.assignments, dtype=np.int64)
        centroids = np.asarray(self.centroids, dtype=np.float64)
        m = centroids.shape[0]
        if len(self.granule_members) != m:
            raise DataError("granule_members length does not match centroid count")
        counts = np.bincount(assignments, minlength=m)
        if counts.size != m or np.any(counts == 0):
            raise DataError("every granule must be nonempty")
        total = 0
        for k, members in enumerate(self.granule_members):
            members = np.asarray(members, dtype=np.int64)
            if not np.all(assignments[members] == k):
                raise DataError("granule_members inconsistent with assignments")
            total += members.size
        if total != assignments.size:
            raise DataError("granule_members do not partition the sample indices")
        object.__setattr__(self, "assignments", assignments)
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(
            self,
            "granule_members",
            tuple(np.asarray(g, dtype=np.int64) for g in self.granule_members),
        )
        for arr in (self.assignments, self.centroids, *self.granule_members):
            arr.flags.writeable = False

    @property
    def m(self) -> int:
        return self.centroids.shape[0]


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """All pairwise squared Euclidean distances, points x centroids."""
    p2 = np.einsum("ij,ij->i", points, points)[:, None]
    c2 = np.einsum("ij,ij->i", centroids, centroids)[None, :]
    d2 = p2 + c2 - 2.0 * points @ centroids.T
    np.maximum(d2, 0.0, out=d2)
    return d2


def _seed_centroids(X: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centroids by squared distance."""
    l = X.shape[0]
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = rng.integers(l)
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for k in range(1, m):
        total = d2.sum()
        if total > 0.0:
            chosen[k] = rng.choice(l, p=d2 / total)
        else:
            # all remaining mass sits on already-chosen points (duplicates)
            chosen[k] = rng.integers(l)
        d2 = np.minimum(d2, np.sum((X - X[chosen[k]]) ** 2, axis=1))
    return X[chosen].copy()


def _repair_empty(
    X: np.ndarray, assignments: np.ndarray, centroids: np.ndarray, m: int
) -> np.ndarray:
    """Give every empty cluster one point so the nonempty invariant holds.

    The point farthest from the empty cluster's current centroid is moved
    there, skipping points that are the sole member of their own cluster.
    """
    counts = np.bincount(assignments, minlength=m)
    for k in np.flatnonzero(counts == 0):
        dist = np.sum((X - centroids[k]) ** 2, axis=1)
        order = np.argsort(-dist, kind="stable")
        for idx in order:
            if counts[assignments[idx]] > 1:
                counts[assignments[idx]] -= 1
                assignments[idx] = k
                counts[k] = 1
                break
        else:
            raise DataError("cannot repair empty cluster: fewer distinct points than granules")
    return assignments


def _lloyd(
    X: np.ndarray,
    m: int,
    centroids: np.ndarray,
    max_iters: int,
    tol: float,
    error_trace: list | None,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    assignments = None
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        d2 = _squared_distances(X, centroids)
        new_assignments = np.argmin(d2, axis=1)
        new_assignments = _repair_empty(X, new_assignments, centroids, m)
        if error_trace is not None:
            error_trace.append(
                float(np.sum((X - centroids[new_assignments]) ** 2))
            )
        if assignments is not None and np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
        new_centroids = np.empty_like(centroids)
        for k in range(m):
            new_centroids[k] = X[assignments == k].mean(axis=0)
        shift = np.max(np.linalg.norm(new_centroids - centroids, axis=1))
        centroids = new_centroids
        if error_trace is not None:
            error_trace.append(float(np.sum((X - centroids[assignments]) ** 2)))
        if shift < tol:
            # final consistency pass so assignments match the stored centroids
            d2 = _squared_distances(X, centroids)
            assignments = _repair_empty(X, np.argmin(d2, axis=1), centroids, m)
            break
    else:
        d2 = _squared_distances(X, centroids)
        assignments = _repair_empty(X, np.argmin(d2, axis=1), centroids, m)
    error = float(np.sum((X - centroids[assignments]) ** 2))
    return assignments, centroids, error, iterations


def kmeans_granulate(
    data: Dataset,
    m: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-6,
    restarts: int = 10,
    error_trace: list | None = None,
) -> Granulation:
    """Cluster the dataset into m granules.

    Runs `restarts` independently seeded Lloyd passes and keeps the one
    with the lowest clustering error (ties to the earliest run). `tol` is
    on the maximum centroid displacement between iterations. When an
    `error_trace` list is supplied (debug aid, meaningful with
    restarts=1) the per-step clustering errors are appended to it.
    """
    if m < 1:
        raise DataError("m must be >= 1")
    if m > data.l:
        raise DataError(f"m={m} exceeds the number of samples {data.l}")
    if max_iters < 1:
        raise DataError("max_iters must be >= 1")
    if tol < 0:
        raise DataError("tol must be >= 0")
    if restarts < 1:
        raise DataError("restarts must be >= 1")

    X = data.features
    rng = make_rng(seed)
    best = None
    for _ in range(restarts):
        centroids = _seed_centroids(X, m, rng)
        assignments, centroids, error, iterations = _lloyd(
            X, m, centroids, max_iters, tol, error_trace
        )
        if best is None or error < best[2]:
            best = (assignments, centroids, error, iterations)
    assignments, centroids, error, iterations = best
    members = tuple(np.flatnonzero(assignments == k) for k in range(m))
    return Granulation(
        assignments=assignments,
        centroids=centroids,
        granule_members=members,
        clustering_error=error,
        iterations_run=iterations,
        seed=seed,
    )


def assign_to_granules(points: np.ndarray, granulation: Granulation) -> np.ndarray:
    """Nearest-centroid index for each point; ties go to the lowest index."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DataError("points must be a 2-d matrix")
    if points.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    if points.shape[1] != granulation.centroids.shape[1]:
        raise DataError(
            f"dimension mismatch: points have {points.shape[1]} columns, "
            f"centroids have {granulation.centroids.shape[1]}"
        )
    return np.argmin(_squared_distances(points, granulation.centroids), axis=1)
