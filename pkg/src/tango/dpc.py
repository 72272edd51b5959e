"""Density peaks clustering with K-nearest-neighbour density (DPC-KNN).

Tie rules (needed for exact reproducibility):

* density order is totalized by index: j counts as denser than i when
  ``rho[j] > rho[i]`` or ``rho[j] == rho[i] and j < i``;
* centers are the k largest ``gamma = rho * delta``, ties to the lower index;
* a point joins its nearest center, ties to the lower center index.

Centers are reported in ascending index order and label ``c`` refers to
``centers[c]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyInputError
from .strope import RopeConfig, embed


@dataclass(frozen=True)
class ClusterParams:
    k: int
    knn_k: int = 7

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("cluster count k must be >= 1")
        if self.knn_k < 1:
            raise ConfigError("neighbour count K must be >= 1")


@dataclass(frozen=True, eq=False)
class ClusterResult:
    centers: np.ndarray
    assignment: np.ndarray
    rho: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray

    @property
    def k(self) -> int:
        return len(self.centers)

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == label)


class Euclidean:
    """Plain Euclidean distance between raw point vectors."""

    def pairwise(self, points) -> np.ndarray:
        return kernels.pairwise_distances(np.asarray(points, dtype=np.float64).reshape(len(points), -1))

    def __call__(self, a, b) -> float:
        diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
        return float(np.sqrt(np.dot(diff, diff)))


class SpatioTemporal:
    """ST-RoPE distance: Euclidean distance between normalized, rotated tokens.

    Holds the positions of the points it will be asked about, aligned by row.
    """

    def __init__(self, positions, cfg: RopeConfig):
        self.positions = np.asarray(positions, dtype=np.float64)
        self.cfg = cfg

    def pairwise(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if len(points) != len(self.positions):
            raise ConfigError("points and positions are not aligned")
        return kernels.pairwise_distances(embed(points, self.positions, self.cfg))


DistanceLike = Union[Euclidean, SpatioTemporal, Callable[[np.ndarray, np.ndarray], float], None]


def distance_matrix(points, dist: DistanceLike = None) -> np.ndarray:
    """Evaluate ``dist`` on all pairs. Objects with ``pairwise`` are used directly;
    a bare callable ``f(a, b)`` is evaluated pair by pair."""
    if dist is None:
        dist = Euclidean()
    if hasattr(dist, "pairwise"):
        return dist.pairwise(points)
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = float(dist(pts[i], pts[j]))
    return out


def local_density(points, dist: DistanceLike = None, knn_k: int = 7, *, dmat=None) -> np.ndarray:
    if dmat is None:
        if len(points) == 0:
            raise EmptyInputError("cannot compute density of zero points")
        dmat = distance_matrix(points, dist)
    if len(dmat) == 0:
        raise EmptyInputError("cannot compute density of zero points")
    return kernels.knn_density(dmat, knn_k)


def delta_distance(points, dist: DistanceLike, rho, *, dmat=None) -> np.ndarray:
    if dmat is None:
        dmat = distance_matrix(points, dist)
    return kernels.delta_distance(dmat, rho)


def cluster_distances(dmat: np.ndarray, params: ClusterParams) -> ClusterResult:
    """DPC-KNN on a precomputed distance matrix."""
    n = len(dmat)
    if n == 0:
        raise EmptyInputError("cannot cluster zero points")
    if params.k > n:
        raise ConfigError(f"requested {params.k} clusters from {n} points")
    rho = kernels.knn_density(dmat, params.knn_k)
    delta = kernels.delta_distance(dmat, rho)
    gamma = rho * delta
    order = np.lexsort((np.arange(n), -gamma))
    centers = np.sort(order[: params.k])
    assignment = kernels.assign_nearest(dmat, centers)
    return ClusterResult(centers, assignment, rho, delta, gamma)


def cluster(points, dist: DistanceLike, params: ClusterParams) -> ClusterResult:
    n = len(points)
    if n == 0:
        raise EmptyInputError("cannot cluster zero points")
    if params.k > n:
        raise ConfigError(f"requested {params.k} clusters from {n} points")
    return cluster_distances(distance_matrix(points, dist), params)


def pool_clusters(points, result: ClusterResult, weights: Optional[np.ndarray] = None):
    """Mean of the raw member vectors of every cluster.

    Returns ``(means, counts)`` with ``means`` of shape ``(k, d)`` in float64.
    Summation follows point order. ``weights`` only affects the returned
    counts (e.g. tokens already representing several sources).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    k = result.k
    sums = np.zeros((k, pts.shape[1]))
    np.add.at(sums, result.assignment, pts)
    members = np.bincount(result.assignment, minlength=k)
    means = sums / members[:, None]
    if weights is None:
        return means, members
    counts = np.bincount(result.assignment, weights=np.asarray(weights), minlength=k).astype(np.int64)
    return means, counts
