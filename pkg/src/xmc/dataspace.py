"""Feature sets, the synthetic two-modality benchmark and the ``XMC1`` file format.

Randomness comes exclusively from numpy's ``PCG64`` bit generator
(PCG-XSL-RR 128/64) seeded with the config's 64-bit seed, consumed in a
fixed draw order (see :func:`generate_synthetic`).  Identical configs
therefore give bit-identical matrices.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

NORM_TOL = 1e-6
FILE_MAGIC = "XMC1"


class Modality(str, enum.Enum):
    VISIBLE = "visible"
    INFRARED = "infrared"

    @property
    def other(self) -> "Modality":
        return Modality.INFRARED if self is Modality.VISIBLE else Modality.VISIBLE


class ZeroRowError(ValueError):
    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm and cannot be normalized")
        self.row = row


class FeatureFileError(ValueError):
    """Base class for problems reading a feature file."""


class HeaderError(FeatureFileError):
    pass


class RowLengthError(FeatureFileError):
    def __init__(self, row: int, expected: int, got: int):
        super().__init__(f"row {row}: expected {expected} fields, got {got}")
        self.row = row


class NonFiniteError(FeatureFileError):
    def __init__(self, row: int):
        super().__init__(f"row {row}: non-finite feature value")
        self.row = row


class RowParseError(FeatureFileError):
    def __init__(self, row: int, token: str):
        super().__init__(f"row {row}: cannot parse {token!r}")
        self.row = row


def l2_normalize(matrix) -> np.ndarray:
    """Scale every row to unit Euclidean norm.

    Raises :class:`ZeroRowError` naming the first all-zero row.
    """
    x = np.array(matrix, dtype=np.float64, ndmin=2, copy=True)
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroRowError(int(zero[0]))
    return x / norms[:, None]


@dataclass(frozen=True, eq=False)
class FeatureSet:
    modality: Modality
    features: np.ndarray
    sample_ids: np.ndarray
    truth: Optional[np.ndarray] = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        count, dim = feats.shape
        if count < 1 or dim < 2:
            raise ValueError(f"need count >= 1 and dim >= 2, got {count}x{dim}")
        norms = np.linalg.norm(feats, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
        if bad.size:
            raise ValueError(f"row {int(bad[0])} is not unit norm ({norms[bad[0]]:.6g})")
        ids = np.asarray(self.sample_ids, dtype=np.int64)
        if ids.shape != (count,):
            raise ValueError("sample_ids must have one entry per row")
        if np.unique(ids).size != count:
            raise ValueError("sample_ids must be unique")
        object.__setattr__(self, "modality", Modality(self.modality))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "sample_ids", ids)
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=np.int64)
            if truth.shape != (count,):
                raise ValueError("truth must have exactly one entry per row")
            object.__setattr__(self, "truth", truth)

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_features(self, features: np.ndarray) -> "FeatureSet":
        """Same ids/truth, new (already unit-norm) embeddings."""
        return FeatureSet(self.modality, features, self.sample_ids, self.truth)


@dataclass(frozen=True)
class SynthConfig:
    num_identities: int = 40
    samples_per_identity_per_modality: int = 30
    dim: int = 64
    intra_identity_spread: float = 0.3
    modality_offset_scale: float = 2.9
    fragmentation_rate: float = 0.3
    seed: int = 0
    offset_rank: int = 8

    def validate(self) -> None:
        if self.num_identities < 1:
            raise ValueError("num_identities must be positive")
        if self.samples_per_identity_per_modality < 1:
            raise ValueError("samples_per_identity_per_modality must be positive")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.intra_identity_spread < 0 or self.modality_offset_scale < 0:
            raise ValueError("spread and offset scale must be non-negative")
        if not 0.0 <= self.fragmentation_rate <= 1.0:
            raise ValueError("fragmentation_rate must lie in [0, 1]")
        if self.offset_rank < 1:
            raise ValueError("offset_rank must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _unit(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate_synthetic(cfg: SynthConfig) -> tuple[FeatureSet, FeatureSet]:
    """Draw a visible and an infrared feature set with known identities.

    Infrared offsets are per-identity unit directions inside a shared random
    subspace of rank ``offset_rank`` (the systematic modality gap), scaled
    by ``modality_offset_scale``.

    Draw order: identity anchors, offset subspace basis, per-identity
    offset coordinates, then for
    each modality (visible first) and each identity: fragmentation coin,
    split direction and member permutation (only if split), sample noise.
    Noise has per-coordinate std ``spread / sqrt(dim)`` so its expected
    norm is about ``spread``.  A fragmented group is split in half around
    sub-anchors at ``center +- 1.5 * spread * u``.
    """
    cfg.validate()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n_id, per, dim = cfg.num_identities, cfg.samples_per_identity_per_modality, cfg.dim
    sigma = cfg.intra_identity_spread / math.sqrt(dim)

    anchors = _unit(rng, n_id, dim)
    rank = min(cfg.offset_rank, dim)
    basis = np.linalg.qr(rng.standard_normal((dim, rank)))[0]
    offsets = (_unit(rng, n_id, rank) @ basis.T) * cfg.modality_offset_scale

    sets = []
    for modality in (Modality.VISIBLE, Modality.INFRARED):
        rows = np.empty((n_id * per, dim))
        for ident in range(n_id):
            center = anchors[ident] if modality is Modality.VISIBLE else anchors[ident] + offsets[ident]
            centers = np.repeat(center[None, :], per, axis=0)
            if rng.random() < cfg.fragmentation_rate:
                u = _unit(rng, 1, dim)[0]
                side = np.where(rng.permutation(per) < per // 2, 1.0, -1.0)
                centers = centers + side[:, None] * (1.5 * cfg.intra_identity_spread) * u
            noise = rng.standard_normal((per, dim)) * sigma
            rows[ident * per:(ident + 1) * per] = centers + noise
        truth = np.repeat(np.arange(n_id), per)
        sets.append(FeatureSet(modality, l2_normalize(rows), np.arange(n_id * per), truth))
    return sets[0], sets[1]


def save_features(fs: FeatureSet, path) -> None:
    has_truth = fs.truth is not None
    lines = [f"{FILE_MAGIC} {fs.modality.value} {fs.count} {fs.dim} {int(has_truth)}"]
    for i in range(fs.count):
        head = [str(int(fs.sample_ids[i]))]
        if has_truth:
            head.append(str(int(fs.truth[i])))
        lines.append(" ".join(head + [repr(float(x)) for x in fs.features[i]]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_features(path) -> FeatureSet:
    """Parse an ``XMC1`` feature file; rows off the unit sphere are renormalized."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise HeaderError("empty file")
    parts = lines[0].split()
    if len(parts) != 5 or parts[0] != FILE_MAGIC:
        raise HeaderError(f"bad header line: {lines[0]!r}")
    try:
        modality = Modality(parts[1])
        count, dim, has_truth = int(parts[2]), int(parts[3]), int(parts[4])
    except ValueError as exc:
        raise HeaderError(f"bad header line: {lines[0]!r}") from exc
    if has_truth not in (0, 1) or count < 1 or dim < 2:
        raise HeaderError(f"bad header values: {lines[0]!r}")
    body = lines[1:]
    if len(body) != count:
        raise HeaderError(f"header declares {count} rows, file has {len(body)}")

    n_fields = 1 + has_truth + dim
    ids = np.empty(count, dtype=np.int64)
    truth = np.empty(count, dtype=np.int64) if has_truth else None
    feats = np.empty((count, dim))
    for row, line in enumerate(body):
        tokens = line.split()
        if len(tokens) != n_fields:
            raise RowLengthError(row, n_fields, len(tokens))
        token = tokens[0]
        try:
            ids[row] = int(token)
            if has_truth:
                token = tokens[1]
                truth[row] = int(token)
            values = []
            for token in tokens[1 + has_truth:]:
                values.append(float(token))
        except ValueError:
            raise RowParseError(row, token) from None
        if not all(math.isfinite(v) for v in values):
            raise NonFiniteError(row)
        feats[row] = values
    # rows already on the sphere are kept verbatim so save -> load is exact
    off = np.flatnonzero(np.abs(np.linalg.norm(feats, axis=1) - 1.0) > NORM_TOL)
    if off.size:
        try:
            feats[off] = l2_normalize(feats[off])
        except ZeroRowError as exc:
            raise ZeroRowError(int(off[exc.row])) from None
    return FeatureSet(modality, feats, ids, truth)
