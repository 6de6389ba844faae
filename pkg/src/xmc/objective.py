"""Prototype contrastive losses, the weighted batch objective and its gradient.

Prototypes are constants inside a step (memory-bank convention); only the
encoder weight receives gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_softmax

from .clustering import PrototypeBank


def _log_probs(q: np.ndarray, bank: PrototypeBank) -> np.ndarray:
    return log_softmax(np.asarray(q, dtype=np.float64) @ bank.prototypes.T / bank.temperature, axis=-1)


def hard_intra_loss(q, bank: PrototypeBank, cluster_index: int) -> float:
    """Cross-entropy of ``q`` against its own cluster among own-modality prototypes."""
    if not 0 <= cluster_index < bank.num_clusters:
        raise IndexError(f"cluster index {cluster_index} out of range")
    return float(-_log_probs(q, bank)[cluster_index])


def hard_inter_loss(q, other_bank: PrototypeBank, transformed_index: int) -> float:
    """Same as :func:`hard_intra_loss` against the other modality's bank,
    targeting the cluster the label transformer maps to."""
    return hard_intra_loss(q, other_bank, transformed_index)


def soft_loss(q, bank: PrototypeBank, soft_label) -> float:
    soft = np.asarray(soft_label, dtype=np.float64)
    if soft.shape != (bank.num_clusters,):
        raise ValueError("soft label length does not match the bank")
    return float(-(soft * _log_probs(q, bank)).sum())


def soft_losses(queries: np.ndarray, bank: PrototypeBank, soft: np.ndarray) -> np.ndarray:
    """Row-wise :func:`soft_loss` for a query matrix and a label matrix."""
    return -(soft * _log_probs(queries, bank)).sum(axis=1)


@dataclass(frozen=True, eq=False)
class ModalityBatch:
    """One modality's slice of a training batch.

    ``inputs`` are fed to the encoder (or used directly as unit-norm queries
    when no encoder weight is given).
    """

    inputs: np.ndarray
    intra_soft: np.ndarray
    inter_soft: np.ndarray
    intra_weight: np.ndarray
    inter_weight: np.ndarray
    sample_ids: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class LossReport:
    homo: float
    heter: float
    total: float
    per_sample: Optional[list] = None


def encode(inputs: np.ndarray, weight: Optional[np.ndarray]) -> np.ndarray:
    if weight is None:
        return np.asarray(inputs, dtype=np.float64)
    h = inputs @ weight
    return h / np.linalg.norm(h, axis=1, keepdims=True)


def batch_objective(batch_v: ModalityBatch, batch_i: ModalityBatch, banks, lam: float,
                    weight: Optional[np.ndarray] = None, per_sample: bool = False) -> LossReport:
    """Weighted soft objective ``homo + lam * heter`` over a two-modality batch.

    Each modality contributes the batch mean of ``w_intra * L_intra`` to
    ``homo`` and of ``w_inter * L_inter`` to ``heter``.
    """
    report, _ = _evaluate(batch_v, batch_i, banks, lam, weight, per_sample, want_grad=False)
    return report


def gradient(batch_v: ModalityBatch, batch_i: ModalityBatch, banks, lam: float,
             weight: np.ndarray) -> tuple[LossReport, np.ndarray]:
    """Objective value and its gradient with respect to the encoder weight."""
    return _evaluate(batch_v, batch_i, banks, lam, weight, False, want_grad=True)


def _evaluate(batch_v, batch_i, banks, lam, weight, per_sample, want_grad):
    bank_v, bank_i = banks
    if len(batch_v) == 0 or len(batch_i) == 0:
        raise ValueError("empty batch")
    homo = heter = 0.0
    records = [] if per_sample else None
    grad = np.zeros_like(weight) if want_grad else None
    for batch, own, other, tag in ((batch_v, bank_v, bank_i, "visible"),
                                   (batch_i, bank_i, bank_v, "infrared")):
        q = encode(batch.inputs, weight)
        n = q.shape[0]
        lp_own = _log_probs(q, own)
        lp_other = _log_probs(q, other)
        l_intra = -(batch.intra_soft * lp_own).sum(axis=1)
        l_inter = -(batch.inter_soft * lp_other).sum(axis=1)
        homo += float(np.mean(batch.intra_weight * l_intra))
        heter += float(np.mean(batch.inter_weight * l_inter))
        if per_sample:
            ids = batch.sample_ids if batch.sample_ids is not None else np.arange(n)
            records.extend(
                (tag, int(ids[j]), float(l_intra[j]), float(l_inter[j]),
                 float(batch.intra_weight[j]), float(batch.inter_weight[j]))
                for j in range(n))
        if want_grad:
            grad += _weight_grad(batch, q, lp_own, lp_other, own, other, lam, weight)
    report = LossReport(homo, heter, homo + lam * heter, records)
    return report, grad


def _logit_grad(soft: np.ndarray, log_probs: np.ndarray) -> np.ndarray:
    # d/dz of -sum_k s_k log softmax(z)_k
    return np.exp(log_probs) * soft.sum(axis=1, keepdims=True) - soft


def _weight_grad(batch, q, lp_own, lp_other, own, other, lam, weight):
    n = q.shape[0]
    c_intra = (batch.intra_weight / n)[:, None]
    c_inter = (lam * batch.inter_weight / n)[:, None]
    g_q = (c_intra * _logit_grad(batch.intra_soft, lp_own)) @ own.prototypes / own.temperature
    g_q += (c_inter * _logit_grad(batch.inter_soft, lp_other)) @ other.prototypes / other.temperature
    h = batch.inputs @ weight
    norm = np.linalg.norm(h, axis=1, keepdims=True)
    g_h = (g_q - np.sum(g_q * q, axis=1, keepdims=True) * q) / norm
    return batch.inputs.T @ g_h
