"""Retrieval metrics (mAP, CMC, mINP) and pseudo-label quality against ground truth."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .clustering import OUTLIER, ClusterAssignment
from .dataspace import FeatureSet
from .matching import CrossModalMap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrievalResult:
    map: float
    cmc: np.ndarray
    minp: float
    num_queries: int
    num_without_match: int


@dataclass(frozen=True)
class MetricsReport:
    map: float
    cmc1: float
    cmc5: float
    cmc10: float
    minp: float
    ari_v: Optional[float] = None
    ari_i: Optional[float] = None
    xmatch: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def rank_gallery(query: np.ndarray, gallery: FeatureSet) -> np.ndarray:
    """Gallery row order per query: descending cosine, ties by ascending sample_id."""
    sims = np.atleast_2d(query) @ gallery.features.T
    ids = np.broadcast_to(gallery.sample_ids, sims.shape)
    return np.lexsort((ids, -sims), axis=-1)


def match_matrix(query: FeatureSet, gallery: FeatureSet) -> np.ndarray:
    """Boolean ``(n_query, n_gallery)`` matrix of same-identity hits in ranked order."""
    if query.truth is None or gallery.truth is None:
        raise ValueError("retrieval metrics need ground-truth identities on both sets")
    order = rank_gallery(query.features, gallery)
    return gallery.truth[order] == query.truth[:, None]


def metrics_from_matches(matches: np.ndarray, max_rank: int = 20) -> RetrievalResult:
    """mAP/CMC/mINP from a ranked hit matrix (rows = queries)."""
    matches = np.atleast_2d(np.asarray(matches, dtype=bool))
    n_q, n_g = matches.shape
    ranks = np.arange(1, n_g + 1)
    n_hits = matches.sum(axis=1)
    valid = n_hits > 0

    cum = np.cumsum(matches, axis=1)
    precision = cum / ranks
    ap = np.where(valid, (precision * matches).sum(axis=1) / np.maximum(n_hits, 1), 0.0)
    last = n_g - np.argmax(matches[:, ::-1], axis=1)
    inp = np.where(valid, n_hits / last, 0.0)

    first = np.where(valid, np.argmax(matches, axis=1) + 1, np.inf)
    cmc = np.array([np.mean(first <= r) for r in range(1, max_rank + 1)])

    missing = int((~valid).sum())
    if missing:
        log.warning("%d queries have no gallery match; excluded from mAP/mINP", missing)
    n_valid = int(valid.sum())
    m_ap = float(ap[valid].mean()) if n_valid else 0.0
    m_inp = float(inp[valid].mean()) if n_valid else 0.0
    return RetrievalResult(m_ap, cmc, m_inp, n_q, missing)


def retrieval_metrics(query: FeatureSet, gallery: FeatureSet, max_rank: int = 20) -> RetrievalResult:
    return metrics_from_matches(match_matrix(query, gallery), max_rank)


def label_quality(assignment: ClusterAssignment, truth) -> tuple[float, float]:
    """Adjusted Rand index and mean cluster purity over non-outlier samples."""
    truth = np.asarray(truth)
    keep = assignment.labels != OUTLIER
    if not keep.any():
        raise ValueError("no clustered samples to score")
    ari = float(adjusted_rand_score(truth[keep], assignment.labels[keep]))
    purity = float(np.mean([np.bincount(_dense(truth)[m]).max() / m.size
                            for m in assignment.members]))
    return ari, purity


def _dense(values: np.ndarray) -> np.ndarray:
    return np.unique(values, return_inverse=True)[1]


def majority_identity(assignment: ClusterAssignment, truth) -> np.ndarray:
    """Most frequent identity per cluster (smallest identity on ties)."""
    truth = np.asarray(truth)
    out = np.empty(assignment.num_clusters, dtype=truth.dtype)
    for c, m in enumerate(assignment.members):
        values, counts = np.unique(truth[m], return_counts=True)
        out[c] = values[np.argmax(counts)]
    return out


def cross_match_accuracy(cmap: CrossModalMap, assignment_v: ClusterAssignment,
                         assignment_i: ClusterAssignment, truths) -> float:
    """Fraction of visible clusters whose matched infrared cluster has the same majority identity."""
    truth_v, truth_i = truths
    maj_v = majority_identity(assignment_v, truth_v)
    maj_i = majority_identity(assignment_i, truth_i)
    return float(np.mean(maj_v == maj_i[cmap.v_to_i]))


def report(result: RetrievalResult, ari_v=None, ari_i=None, xmatch=None) -> MetricsReport:
    cmc = result.cmc

    def at(r):
        return float(cmc[min(r, cmc.size) - 1])

    return MetricsReport(result.map, at(1), at(5), at(10), result.minp, ari_v, ari_i, xmatch)
