"""Neighbour-calibrated soft labels and neighbour-consistency sample weights."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import OUTLIER, ClusterAssignment
from .dataspace import FeatureSet, Modality
from .matching import CrossModalMap
from .neighbors import Correlation, correlation_matrix, knn_matrix, normalize_l1


class Context(str, enum.Enum):
    INTRA = "intra"
    INTER = "inter"


@dataclass(frozen=True, eq=False)
class CalibratedLabel:
    hard_index: int
    soft: np.ndarray
    context: Context = Context.INTRA


@dataclass(frozen=True)
class SampleWeight:
    intra: float
    inter: float


def calibrate(one_hot_index: int, num_clusters: int, corr: Correlation, mu: float,
              context: Context = Context.INTRA) -> CalibratedLabel:
    """Mix the one-hot label with the normalized neighbour correlation.

    ``soft = mu * onehot + (1 - mu) * P``; if no neighbour falls in any
    cluster the one-hot label is returned unchanged.
    """
    if not 0 <= one_hot_index < num_clusters:
        raise IndexError(f"cluster index {one_hot_index} out of range [0, {num_clusters})")
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    if corr.normalized.shape != (num_clusters,):
        raise ValueError("correlation length does not match num_clusters")
    soft = calibrate_rows(np.array([one_hot_index]), corr.raw[None, :],
                          corr.normalized[None, :], mu)[0]
    return CalibratedLabel(one_hot_index, soft, Context(context))


def calibrate_rows(hard: np.ndarray, raw: np.ndarray, normalized: np.ndarray,
                   mu: float) -> np.ndarray:
    """Row-batched :func:`calibrate` returning an ``(n, K)`` matrix."""
    n, num = normalized.shape
    onehot = np.zeros((n, num))
    onehot[np.arange(n), hard] = 1.0
    if mu == 1.0:
        return onehot
    mixed = mu * onehot + (1.0 - mu) * normalized
    empty = raw.sum(axis=1) <= 0
    mixed[empty] = onehot[empty]
    return mixed


def weight(corr: Correlation, target_index: int, w: float) -> float:
    """``exp(-w * (1 - P[target])**2)``: 1 for a fully consistent neighbourhood."""
    if w < 0:
        raise ValueError("w must be non-negative")
    if not 0 <= target_index < corr.normalized.shape[0]:
        raise IndexError(f"target index {target_index} out of range")
    gap = 1.0 - float(corr.normalized[target_index])
    return math.exp(-w * gap * gap)


def weight_rows(normalized: np.ndarray, target: np.ndarray, w: float) -> np.ndarray:
    gap = 1.0 - normalized[np.arange(normalized.shape[0]), target]
    return np.exp(-w * gap * gap)


@dataclass(frozen=True, eq=False)
class ModalityLabels:
    """Frozen per-epoch targets for the clustered samples of one modality.

    Row ``j`` of every matrix describes sample ``rows[j]`` of the feature set.
    """

    modality: Modality
    rows: np.ndarray
    intra_hard: np.ndarray
    inter_hard: np.ndarray
    intra_raw: np.ndarray
    inter_raw: np.ndarray
    intra_corr: np.ndarray
    inter_corr: np.ndarray
    intra_soft: np.ndarray
    inter_soft: np.ndarray
    intra_weight: np.ndarray
    inter_weight: np.ndarray

    def __len__(self) -> int:
        return self.rows.size

    def position(self, row: int) -> int:
        pos = int(np.searchsorted(self.rows, row))
        if pos >= self.rows.size or self.rows[pos] != row:
            raise KeyError(f"sample row {row} is an outlier this epoch")
        return pos

    def label(self, row: int, context: Context) -> CalibratedLabel:
        j = self.position(row)
        if Context(context) is Context.INTRA:
            return CalibratedLabel(int(self.intra_hard[j]), self.intra_soft[j], Context.INTRA)
        return CalibratedLabel(int(self.inter_hard[j]), self.inter_soft[j], Context.INTER)

    def weight(self, row: int) -> SampleWeight:
        j = self.position(row)
        return SampleWeight(float(self.intra_weight[j]), float(self.inter_weight[j]))


@dataclass(frozen=True, eq=False)
class EpochLabels:
    visible: ModalityLabels
    infrared: ModalityLabels

    def __getitem__(self, modality: Modality) -> ModalityLabels:
        return self.visible if Modality(modality) is Modality.VISIBLE else self.infrared


def _modality_labels(own: FeatureSet, other: FeatureSet, own_assign: ClusterAssignment,
                     other_assign: ClusterAssignment, transform: np.ndarray,
                     k: int, mu: float, w: float) -> ModalityLabels:
    rows = own_assign.clustered
    queries = own.features[rows]
    # the query itself is excluded from its own-modality neighbourhood
    intra_nbr = knn_matrix(own.features, own, k, exclude_self=True)[rows]
    inter_nbr = knn_matrix(queries, other, k)
    intra_raw = correlation_matrix(intra_nbr, own_assign.labels, own_assign.num_clusters)
    inter_raw = correlation_matrix(inter_nbr, other_assign.labels, other_assign.num_clusters)
    intra_corr, inter_corr = normalize_l1(intra_raw), normalize_l1(inter_raw)
    intra_hard = own_assign.labels[rows]
    inter_hard = transform[intra_hard]
    return ModalityLabels(
        modality=own.modality,
        rows=rows,
        intra_hard=intra_hard,
        inter_hard=inter_hard,
        intra_raw=intra_raw,
        inter_raw=inter_raw,
        intra_corr=intra_corr,
        inter_corr=inter_corr,
        intra_soft=calibrate_rows(intra_hard, intra_raw, intra_corr, mu),
        inter_soft=calibrate_rows(inter_hard, inter_raw, inter_corr, mu),
        intra_weight=weight_rows(intra_corr, intra_hard, w),
        inter_weight=weight_rows(inter_corr, inter_hard, w),
    )


def build_epoch_labels(sets, assignments, cmap: CrossModalMap, k: int,
                       mu: float, w: float) -> EpochLabels:
    """Soft labels and weights for every clustered sample of both modalities.

    ``sets`` and ``assignments`` are ``(visible, infrared)`` pairs.  Outliers
    get no entry.  ``mu=1`` gives one-hot labels and ``w=0`` unit weights.
    """
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    if w < 0:
        raise ValueError("w must be non-negative")
    fv, fi = sets
    av, ai = assignments
    if cmap.v_to_i.shape[0] != av.num_clusters or cmap.i_to_v.shape[0] != ai.num_clusters:
        raise ValueError("cross-modal map does not match the assignments")
    return EpochLabels(
        visible=_modality_labels(fv, fi, av, ai, cmap.v_to_i, k, mu, w),
        infrared=_modality_labels(fi, fv, ai, av, cmap.i_to_v, k, mu, w),
    )


def _top(soft: np.ndarray, n: int = 5) -> list:
    order = np.lexsort((np.arange(soft.size), -soft))[:n]
    return [[int(c), round(float(soft[c]), 12)] for c in order if soft[c] > 0]


def dump_epoch_labels(labels: EpochLabels, sets, path) -> None:
    """Write one JSON record per clustered sample (line-delimited)."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for ml, fs in zip((labels.visible, labels.infrared), sets):
            for j, row in enumerate(ml.rows):
                rec = {
                    "modality": ml.modality.value,
                    "sample_id": int(fs.sample_ids[row]),
                    "intra_hard": int(ml.intra_hard[j]),
                    "intra_top5": _top(ml.intra_soft[j]),
                    "inter_hard": int(ml.inter_hard[j]),
                    "inter_top5": _top(ml.inter_soft[j]),
                    "w_intra": float(ml.intra_weight[j]),
                    "w_inter": float(ml.inter_weight[j]),
                }
                fh.write(json.dumps(rec) + "\n")


__all__ = [
    "OUTLIER", "Context", "CalibratedLabel", "SampleWeight", "ModalityLabels", "EpochLabels",
    "calibrate", "calibrate_rows", "weight", "weight_rows", "build_epoch_labels",
    "dump_epoch_labels",
]
