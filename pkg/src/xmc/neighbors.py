"""k-nearest-neighbour retrieval and neighbour/cluster Jaccard correlation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataspace import FeatureSet, Modality


@dataclass(frozen=True)
class NeighborList:
    query_index: Optional[int]
    target_modality: Modality
    k: int
    neighbor_indices: np.ndarray


@dataclass(frozen=True)
class Correlation:
    raw: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_raw(cls, raw) -> "Correlation":
        raw = np.asarray(raw, dtype=np.float64)
        return cls(raw, normalize_l1(raw))


def normalize_l1(raw: np.ndarray) -> np.ndarray:
    """Row-wise l1 normalization; all-zero rows stay all-zero."""
    raw = np.asarray(raw, dtype=np.float64)
    total = raw.sum(axis=-1, keepdims=True)
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, raw / safe, 0.0)


def _ranked(sims: np.ndarray, sample_ids: np.ndarray) -> np.ndarray:
    # primary key: descending similarity; secondary: ascending sample_id
    ids = np.broadcast_to(sample_ids, sims.shape)
    return np.lexsort((ids, -sims), axis=-1)


def knn(query, targets: FeatureSet, k: int, exclude_self: bool = False,
        query_index: Optional[int] = None) -> NeighborList:
    """Indices of the ``k`` targets most similar to ``query`` by dot product.

    With ``exclude_self`` the row ``query_index`` of ``targets`` is skipped;
    ``k`` is clamped to the number of eligible targets.
    """
    if targets.count == 0:
        raise ValueError("empty target set")
    if k < 1:
        raise ValueError("k must be >= 1")
    if exclude_self and query_index is None:
        raise ValueError("exclude_self needs query_index")
    q = np.asarray(query, dtype=np.float64)
    sims = targets.features @ q
    if exclude_self:
        sims[query_index] = -np.inf
    available = targets.count - (1 if exclude_self else 0)
    k_eff = min(k, available)
    order = _ranked(sims, targets.sample_ids)[:k_eff]
    return NeighborList(query_index, targets.modality, k_eff, order)


def knn_matrix(queries: np.ndarray, targets: FeatureSet, k: int,
               exclude_self: bool = False) -> np.ndarray:
    """Batched :func:`knn`; returns an ``(n_queries, k_eff)`` index matrix.

    With ``exclude_self`` the queries must be the rows of ``targets`` in order.
    """
    if targets.count == 0:
        raise ValueError("empty target set")
    if k < 1:
        raise ValueError("k must be >= 1")
    sims = np.asarray(queries, dtype=np.float64) @ targets.features.T
    if exclude_self:
        if sims.shape[0] != sims.shape[1]:
            raise ValueError("exclude_self requires queries == targets")
        np.fill_diagonal(sims, -np.inf)
    k_eff = min(k, targets.count - (1 if exclude_self else 0))
    return _top_k(sims, targets.sample_ids, k_eff)


def _top_k(sims: np.ndarray, sample_ids: np.ndarray, k: int) -> np.ndarray:
    """First ``k`` columns of :func:`_ranked` without sorting whole rows."""
    n, m = sims.shape
    if k == 0:
        return np.empty((n, 0), dtype=np.int64)
    if k >= m:
        return _ranked(sims, sample_ids)[:, :k]
    part = np.argpartition(-sims, k - 1, axis=1)[:, :k]
    cutoff = np.take_along_axis(sims, part, axis=1).min(axis=1)
    out = np.empty((n, k), dtype=np.int64)
    for r in range(n):
        # every column tied with the k-th value competes on sample_id
        cand = np.flatnonzero(sims[r] >= cutoff[r])
        order = np.lexsort((sample_ids[cand], -sims[r, cand]))
        out[r] = cand[order[:k]]
    return out


def correlation_matrix(neighbor_idx: np.ndarray, labels: np.ndarray,
                       num_clusters: int) -> np.ndarray:
    """Jaccard ``|N ∩ C_l| / |N ∪ C_l|`` for every query row and cluster.

    ``labels`` are the target samples' cluster indices (-1 = outlier);
    outlier neighbours count towards ``|N|`` but belong to no cluster.
    """
    neighbor_idx = np.atleast_2d(neighbor_idx)
    labels = np.asarray(labels)
    n, k = neighbor_idx.shape
    sizes = np.bincount(labels[labels >= 0], minlength=num_clusters).astype(np.float64)
    hit = labels[neighbor_idx]
    rows = np.broadcast_to(np.arange(n)[:, None], hit.shape)
    mask = hit >= 0
    inter = np.zeros((n, num_clusters))
    np.add.at(inter, (rows[mask], hit[mask]), 1.0)
    union = k + sizes[None, :] - inter
    return inter / union


def cluster_correlation(neighbors: NeighborList, assignment) -> Correlation:
    raw = correlation_matrix(np.asarray(neighbors.neighbor_indices)[None, :],
                             assignment.labels, assignment.num_clusters)[0]
    return Correlation.from_raw(raw)
