"""Epoch loop: re-cluster, re-match, rebuild labels, then SGD on a linear encoder."""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .clustering import PrototypeBank, compute_prototypes, dbscan, momentum_update_many
from .dataspace import FeatureSet, l2_normalize
from .evaluator import cross_match_accuracy, label_quality
from .labeling import EpochLabels, ModalityLabels, build_epoch_labels
from .matching import build_cross_modal_map
from .objective import ModalityBatch, encode, gradient

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    BASELINE = "baseline"
    ULC = "ulc"
    DW = "dw"
    FULL = "full"

    @property
    def uses_calibration(self) -> bool:
        return self in (Mode.ULC, Mode.FULL)

    @property
    def uses_weighting(self) -> bool:
        return self in (Mode.DW, Mode.FULL)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    steps_per_epoch: int = 20
    ids_per_batch: int = 16
    instances_per_id: int = 8
    learning_rate: float = 0.05
    lr_decay_every: int = 20
    mu: float = 0.7
    lam: float = 3.0
    w: float = 10.0
    k: int = 20
    tau: float = 0.05
    momentum: float = 0.2
    dbscan_eps: float = 0.2
    dbscan_min_pts: int = 4
    feature_jitter: float = 0.0
    seed: int = 0
    mode: Mode = Mode.FULL

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def effective_mu(self) -> float:
        return self.mu if self.mode.uses_calibration else 1.0

    @property
    def effective_w(self) -> float:
        return self.w if self.mode.uses_weighting else 0.0

    def validate(self) -> None:
        if min(self.epochs, self.steps_per_epoch, self.ids_per_batch, self.instances_per_id,
               self.lr_decay_every, self.k, self.dbscan_min_pts) < 1:
            raise ValueError("counts in TrainConfig must be positive")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.w < 0 or self.lam < 0 or self.learning_rate <= 0:
            raise ValueError("w and lam must be >= 0 and learning_rate > 0")
        if self.tau <= 0 or self.dbscan_eps <= 0 or not 0 <= self.momentum <= 1:
            raise ValueError("tau and dbscan_eps must be positive, momentum in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


@dataclass
class Encoder:
    """Shared linear map followed by row normalization."""

    weight: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "Encoder":
        return cls(np.eye(dim))

    @property
    def params(self) -> np.ndarray:
        return self.weight.ravel()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return encode(np.asarray(x, dtype=np.float64), self.weight)

    def apply(self, fs: FeatureSet) -> FeatureSet:
        return fs.with_features(self(fs.features))

    def save(self, path) -> None:
        np.savetxt(path, self.weight, fmt="%.17g")

    @classmethod
    def load(cls, path) -> "Encoder":
        return cls(np.atleast_2d(np.loadtxt(path, dtype=np.float64)))


def _draw_members(members: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(members, size=n, replace=members.size < n)


def sample_batch(assignments, ids_per_batch: int, instances_per_id: int,
                 rng: np.random.Generator, warn: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Row indices for one batch per modality: clusters without replacement,
    members with replacement only when a cluster is too small."""
    out = []
    for a in assignments:
        if a.num_clusters == 0:
            raise ValueError("cannot sample from an assignment without clusters")
        n_ids = ids_per_batch
        if a.num_clusters < ids_per_batch:
            if warn:
                log.warning("only %d clusters available, batch clamped from %d ids",
                            a.num_clusters, ids_per_batch)
            n_ids = a.num_clusters
        chosen = rng.choice(a.num_clusters, size=n_ids, replace=False)
        out.append(np.concatenate([_draw_members(a.members[c], instances_per_id, rng)
                                   for c in chosen]))
    return out[0], out[1]


def modality_batch(raw: FeatureSet, labels: ModalityLabels, rows: np.ndarray,
                   jitter: float = 0.0, rng: Optional[np.random.Generator] = None) -> ModalityBatch:
    pos = np.searchsorted(labels.rows, rows)
    inputs = raw.features[rows]
    if jitter > 0:
        inputs = l2_normalize(inputs + rng.standard_normal(inputs.shape) * jitter)
    return ModalityBatch(
        inputs=inputs,
        intra_soft=labels.intra_soft[pos],
        inter_soft=labels.inter_soft[pos],
        intra_weight=labels.intra_weight[pos],
        inter_weight=labels.inter_weight[pos],
        sample_ids=raw.sample_ids[rows],
    )


@dataclass
class EpochState:
    """Everything frozen at an epoch boundary."""

    assignments: tuple
    banks: tuple
    cmap: object
    labels: EpochLabels
    encoded: tuple = field(repr=False)


def prepare_epoch(set_v: FeatureSet, set_i: FeatureSet, encoder: Encoder,
                  cfg: TrainConfig, epoch: int = 0) -> EpochState:
    enc_v, enc_i = encoder.apply(set_v), encoder.apply(set_i)
    av = dbscan(enc_v, cfg.dbscan_eps, cfg.dbscan_min_pts)
    ai = dbscan(enc_i, cfg.dbscan_eps, cfg.dbscan_min_pts)
    for name, a in (("visible", av), ("infrared", ai)):
        if a.num_clusters == 0:
            raise TrainingError(
                f"epoch {epoch}: DBSCAN found no {name} clusters "
                f"(eps={cfg.dbscan_eps}, min_pts={cfg.dbscan_min_pts})")
    banks = (compute_prototypes(enc_v, av, cfg.momentum, cfg.tau),
             compute_prototypes(enc_i, ai, cfg.momentum, cfg.tau))
    cmap = build_cross_modal_map(*banks)
    labels = build_epoch_labels((enc_v, enc_i), (av, ai), cmap, cfg.k,
                                cfg.effective_mu, cfg.effective_w)
    return EpochState((av, ai), banks, cmap, labels, (enc_v, enc_i))


def train(set_v: FeatureSet, set_i: FeatureSet, cfg: TrainConfig,
          on_epoch: Optional[Callable[[dict], None]] = None) -> tuple[Encoder, list]:
    """Run ``cfg.epochs`` epochs; returns the encoder and one log record per epoch."""
    cfg.validate()
    if set_v.dim != set_i.dim:
        raise ValueError("modalities must share the input dimension")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    encoder = Encoder.identity(set_v.dim)
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * 0.1 ** (epoch // cfg.lr_decay_every)
        state = prepare_epoch(set_v, set_i, encoder, cfg, epoch)
        bank_v, bank_i = (b.copy() for b in state.banks)
        sums = np.zeros(3)
        for step in range(cfg.steps_per_epoch):
            # the clamp warning is reported once per epoch
            rows_v, rows_i = sample_batch(state.assignments, cfg.ids_per_batch,
                                          cfg.instances_per_id, rng, warn=step == 0)
            bv = modality_batch(set_v, state.labels.visible, rows_v, cfg.feature_jitter, rng)
            bi = modality_batch(set_i, state.labels.infrared, rows_i, cfg.feature_jitter, rng)
            q_v, q_i = encoder(bv.inputs), encoder(bi.inputs)
            report, grad = gradient(bv, bi, (bank_v, bank_i), cfg.lam, encoder.weight)
            encoder.weight = encoder.weight - lr * grad
            _push(bank_v, state.labels.visible, rows_v, q_v)
            _push(bank_i, state.labels.infrared, rows_i, q_i)
            sums += (report.homo, report.heter, report.total)
        record = epoch_record(epoch, lr, sums / cfg.steps_per_epoch, state, set_v, set_i)
        history.append(record)
        log.info("epoch %d total=%.6f K=%d L=%d", epoch, record["total"], record["K"], record["L"])
        if on_epoch is not None:
            on_epoch(record)
    return encoder, history


def _push(bank: PrototypeBank, labels: ModalityLabels, rows: np.ndarray, queries: np.ndarray):
    momentum_update_many(bank, labels.intra_hard[np.searchsorted(labels.rows, rows)], queries)


def epoch_record(epoch: int, lr: float, losses, state: EpochState,
                 set_v: FeatureSet, set_i: FeatureSet) -> dict:
    av, ai = state.assignments
    rec = {
        "epoch": epoch,
        "lr": lr,
        "homo": float(losses[0]),
        "heter": float(losses[1]),
        "total": float(losses[2]),
        "K": av.num_clusters,
        "L": ai.num_clusters,
        "matched_pairs": state.cmap.matched_pairs,
        "ari_v": None,
        "ari_i": None,
        "xmatch": None,
    }
    if set_v.truth is not None and set_i.truth is not None:
        rec["ari_v"] = label_quality(av, set_v.truth)[0]
        rec["ari_i"] = label_quality(ai, set_i.truth)[0]
        rec["xmatch"] = cross_match_accuracy(state.cmap, av, ai, (set_v.truth, set_i.truth))
    return rec


def with_mode(cfg: TrainConfig, mode) -> TrainConfig:
    return replace(cfg, mode=Mode(mode))
