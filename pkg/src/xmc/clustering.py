"""DBSCAN pseudo-labels, cluster prototypes and the momentum prototype bank."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataspace import NORM_TOL, FeatureSet, ZeroRowError, l2_normalize

OUTLIER = -1


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    num_clusters: int
    members: list = field(repr=False)

    @classmethod
    def from_labels(cls, labels) -> "ClusterAssignment":
        """Build from raw labels; cluster ids must already be 0..K-1."""
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and labels.min() < OUTLIER:
            raise ValueError("labels must be >= -1")
        k = int(labels.max()) + 1 if labels.size else 0
        members = [np.flatnonzero(labels == c) for c in range(k)]
        if any(m.size == 0 for m in members):
            raise ValueError("cluster indices must be contiguous")
        return cls(labels, k, members)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.members], dtype=np.int64)

    @property
    def clustered(self) -> np.ndarray:
        """Indices of non-outlier samples, ascending."""
        return np.flatnonzero(self.labels != OUTLIER)


@dataclass(eq=False)
class PrototypeBank:
    prototypes: np.ndarray
    momentum: float = 0.2
    temperature: float = 0.05

    def __post_init__(self):
        self.prototypes = np.array(self.prototypes, dtype=np.float64, ndmin=2)
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        norms = np.linalg.norm(self.prototypes, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise ValueError("prototype rows must be unit norm")

    @property
    def num_clusters(self) -> int:
        return self.prototypes.shape[0]

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(self.prototypes.copy(), self.momentum, self.temperature)


def pairwise_distance(x: np.ndarray, metric: str = "cosine") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if metric == "cosine":
        return 1.0 - x @ x.T
    if metric == "euclidean":
        sq = np.sum(x * x, axis=1)
        return np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0))
    raise ValueError(f"unknown metric {metric!r}")


def dbscan(data, eps: float, min_pts: int = 4, metric: str = "cosine") -> ClusterAssignment:
    """Density clustering in ascending sample order.

    ``data`` is a :class:`FeatureSet` or a raw matrix.  A point is core when
    at least ``min_pts`` points (itself included) lie within ``eps``.  Each
    cluster is grown breadth-first from the lowest-index unvisited core
    point; a border point keeps the first cluster that reaches it.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("need eps > 0 and min_pts >= 1")
    x = data.features if isinstance(data, FeatureSet) else np.asarray(data, dtype=np.float64)
    adj = pairwise_distance(x, metric) <= eps
    core = adj.sum(axis=1) >= min_pts

    labels = np.full(x.shape[0], OUTLIER, dtype=np.int64)
    next_id = 0
    for seed in range(x.shape[0]):
        if labels[seed] != OUTLIER or not core[seed]:
            continue
        labels[seed] = next_id
        frontier = np.array([seed])
        while frontier.size:
            reached = adj[frontier].any(axis=0) & (labels == OUTLIER)
            labels[reached] = next_id
            frontier = np.flatnonzero(reached & core)
        next_id += 1
    return ClusterAssignment.from_labels(labels)


def compute_prototypes(fs: FeatureSet, assignment: ClusterAssignment,
                       momentum: float = 0.2, temperature: float = 0.05) -> PrototypeBank:
    """Normalized mean of each cluster's member rows; outliers are ignored."""
    if assignment.num_clusters < 1:
        raise ValueError("assignment has no clusters")
    mask = assignment.labels != OUTLIER
    sums = np.zeros((assignment.num_clusters, fs.dim))
    np.add.at(sums, assignment.labels[mask], fs.features[mask])
    means = sums / assignment.sizes[:, None]
    return PrototypeBank(l2_normalize(means), momentum, temperature)


def momentum_update(bank: PrototypeBank, cluster_index: int, query) -> PrototypeBank:
    """``phi <- normalize(m * phi + (1 - m) * q)`` for one row, in place."""
    if not 0 <= cluster_index < bank.num_clusters:
        raise IndexError(f"cluster index {cluster_index} out of range")
    m = bank.momentum
    row = m * bank.prototypes[cluster_index] + (1.0 - m) * np.asarray(query, dtype=np.float64)
    bank.prototypes[cluster_index] = l2_normalize(row)[0]
    return bank


def momentum_update_many(bank: PrototypeBank, cluster_indices, queries) -> PrototypeBank:
    """Apply :func:`momentum_update` for each (index, query) pair in order."""
    m = bank.momentum
    protos = bank.prototypes
    for c, q in zip(np.asarray(cluster_indices), np.asarray(queries, dtype=np.float64)):
        if not 0 <= c < bank.num_clusters:
            raise IndexError(f"cluster index {c} out of range")
        row = m * protos[c] + (1.0 - m) * q
        norm = math.sqrt(row @ row)
        if norm == 0.0:
            raise ZeroRowError(int(c))
        protos[c] = row / norm
    return bank
