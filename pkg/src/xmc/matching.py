"""Cross-modality cluster association and the label transformers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import PrototypeBank


@dataclass(frozen=True, eq=False)
class CrossModalMap:
    cost: np.ndarray
    match: np.ndarray
    v_to_i: np.ndarray
    i_to_v: np.ndarray

    @property
    def matched_pairs(self) -> int:
        return int(self.match.sum())


def cost_matrix(bank_v: PrototypeBank, bank_i: PrototypeBank) -> np.ndarray:
    """Cosine distance ``1 - phi_v . phi_i`` between every prototype pair."""
    pv, pi = bank_v.prototypes, bank_i.prototypes
    if pv.shape[1] != pi.shape[1]:
        raise ValueError(f"dimension mismatch: {pv.shape[1]} vs {pi.shape[1]}")
    return 1.0 - pv @ pi.T


def assign_one_to_one(cost) -> np.ndarray:
    """Minimum-cost binary matching with row and column sums <= 1.

    Matches ``min(K, L)`` pairs.  Uses the shortest-augmenting-path solver in
    scipy, which is deterministic for a given matrix.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    match = np.zeros(cost.shape, dtype=np.int8)
    if cost.size:
        rows, cols = linear_sum_assignment(cost)
        match[rows, cols] = 1
    return match


def progressive_complete(cost, match) -> tuple[np.ndarray, np.ndarray]:
    """Turn a partial one-to-one match into total transformers.

    Matched clusters keep their partner; every unmatched cluster is sent to
    its cheapest counterpart (lowest index on ties), so many-to-one links
    appear only here.
    """
    cost = np.asarray(cost, dtype=np.float64)
    match = np.asarray(match)
    v_to_i = np.argmin(cost, axis=1)
    i_to_v = np.argmin(cost, axis=0)
    rows, cols = np.nonzero(match)
    v_to_i[rows] = cols
    i_to_v[cols] = rows
    return v_to_i.astype(np.int64), i_to_v.astype(np.int64)


def build_cross_modal_map(bank_v: PrototypeBank, bank_i: PrototypeBank) -> CrossModalMap:
    cost = cost_matrix(bank_v, bank_i)
    match = assign_one_to_one(cost)
    v_to_i, i_to_v = progressive_complete(cost, match)
    return CrossModalMap(cost, match, v_to_i, i_to_v)
