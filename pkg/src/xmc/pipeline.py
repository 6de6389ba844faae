"""End-to-end runs behind the CLI: generate, train+evaluate, ablate, evaluate."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import bootstrap

from .config import RunConfig
from .dataspace import FeatureSet, Modality, generate_synthetic, load_features, save_features
from .evaluator import cross_match_accuracy, label_quality, report, retrieval_metrics
from .labeling import dump_epoch_labels
from .trainer import Encoder, Mode, prepare_epoch, train

log = logging.getLogger(__name__)

VISIBLE_FILE = "visible.xmc"
INFRARED_FILE = "infrared.xmc"
MODES = (Mode.BASELINE, Mode.ULC, Mode.DW, Mode.FULL)


class InputError(Exception):
    """Bad user input (missing file, bad config, bad arguments); CLI exit status 2."""


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate(cfg: RunConfig, out: Path) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    fv, fi = generate_synthetic(cfg.synth)
    pv, pi = out / VISIBLE_FILE, out / INFRARED_FILE
    save_features(fv, pv)
    save_features(fi, pi)
    return pv, pi


def _load_pair(cfg: RunConfig) -> tuple[FeatureSet, FeatureSet]:
    paths = (cfg.visible_features, cfg.infrared_features)
    if None in paths:
        raise InputError("config must set visible_features and infrared_features")
    for p in paths:
        if not p.is_file():
            raise InputError(f"feature file not found: {p}")
    fv, fi = load_features(paths[0]), load_features(paths[1])
    if fv.modality is not Modality.VISIBLE or fi.modality is not Modality.INFRARED:
        raise InputError("visible_features/infrared_features have the wrong modality headers")
    return fv, fi


def evaluate_pair(fv: FeatureSet, fi: FeatureSet, max_rank: int = 20,
                  label_stats: Optional[dict] = None) -> dict:
    """Metrics for both retrieval directions, keyed by direction."""
    if fv.truth is None or fi.truth is None:
        raise InputError("evaluation needs ground-truth identities in both feature files")
    label_stats = label_stats or {}
    out = {}
    for name, q, g in (("visible_to_infrared", fv, fi), ("infrared_to_visible", fi, fv)):
        res = retrieval_metrics(q, g, max_rank)
        out[name] = report(res, **label_stats).to_dict()
    return out


def _final_label_stats(fv: FeatureSet, fi: FeatureSet, encoder: Encoder, cfg: RunConfig) -> dict:
    """Pseudo-label quality of the trained encoder (one more clustering pass)."""
    state = prepare_epoch(fv, fi, encoder, cfg.train, cfg.train.epochs)
    av, ai = state.assignments
    return {"ari_v": label_quality(av, fv.truth)[0], "ari_i": label_quality(ai, fi.truth)[0],
            "xmatch": cross_match_accuracy(state.cmap, av, ai, (fv.truth, fi.truth))}


def train_and_evaluate(fv: FeatureSet, fi: FeatureSet, cfg: RunConfig):
    encoder, history = train(fv, fi, cfg.train)
    ev, ei = encoder.apply(fv), encoder.apply(fi)
    stats = _final_label_stats(fv, fi, encoder, cfg) if fv.truth is not None and fi.truth is not None else None
    metrics = evaluate_pair(ev, ei, cfg.max_rank, stats) if stats else None
    return encoder, history, metrics, (ev, ei)


def run(cfg: RunConfig, out: Path) -> dict:
    """Train one mode on the configured feature files and write all artefacts.

    Writes ``config.snapshot`` (re-runnable), ``epochs.jsonl``, ``metrics.json``,
    ``encoder.txt``, encoded feature dumps and ``manifest.json``.
    """
    fv, fi = _load_pair(cfg)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    encoder, history, metrics, (ev, ei) = train_and_evaluate(fv, fi, cfg)
    duration = time.perf_counter() - start

    (out / "config.snapshot").write_text(cfg.dumps(), encoding="utf-8")
    with (out / "epochs.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if metrics is not None:
        (out / "metrics.json").write_text(_json(metrics), encoding="utf-8")
    encoder.save(out / "encoder.txt")
    save_features(ev, out / "encoded_visible.xmc")
    save_features(ei, out / "encoded_infrared.xmc")
    if cfg.dump_labels:
        state = prepare_epoch(fv, fi, encoder, cfg.train, len(history))
        dump_epoch_labels(state.labels, state.encoded, out / "labels.jsonl")

    manifest = {
        "config": cfg.to_flat(),
        "config_snapshot": "config.snapshot",
        "seed": cfg.seed,
        "mode": cfg.train.mode.value,
        "inputs": {
            "visible_features": {"path": str(cfg.visible_features),
                                 "sha256": _sha256(cfg.visible_features)},
            "infrared_features": {"path": str(cfg.infrared_features),
                                  "sha256": _sha256(cfg.infrared_features)},
        },
        "epoch_log": "epochs.jsonl",
        "metrics": "metrics.json" if metrics is not None else None,
        "encoder": "encoder.txt",
        "duration_s": round(duration, 3),
    }
    (out / "manifest.json").write_text(_json(manifest), encoding="utf-8")
    return manifest


def evaluate(cfg: RunConfig, encoder_path: Optional[Path]) -> dict:
    fv, fi = _load_pair(cfg)
    if encoder_path is None:
        encoder = Encoder.identity(fv.dim)
    else:
        if not encoder_path.is_file():
            raise InputError(f"encoder file not found: {encoder_path}")
        encoder = Encoder.load(encoder_path)
        if encoder.weight.shape[0] != fv.dim:
            raise InputError(f"encoder expects dim {encoder.weight.shape[0]}, features have {fv.dim}")
    return evaluate_pair(encoder.apply(fv), encoder.apply(fi), cfg.max_rank)


@dataclass(frozen=True)
class AblationRun:
    seed: int
    mode: str
    mu: float
    w: float
    map: float
    cmc1: float
    minp: float


def _ablation_job(args) -> list:
    cfg, seed = args
    cfg = cfg.with_seed(seed)
    fv, fi = generate_synthetic(cfg.synth)
    rows = []
    for mode in MODES:
        mcfg = cfg.with_mode(mode)
        try:
            _, _, metrics, _ = train_and_evaluate(fv, fi, mcfg)
        except Exception as exc:
            raise RuntimeError(f"ablation run failed (seed={seed}, mode={mode.value}): {exc}") from exc
        m = metrics["visible_to_infrared"]
        rows.append(AblationRun(seed, mode.value, mcfg.train.effective_mu,
                                mcfg.train.effective_w, m["map"], m["cmc1"], m["minp"]))
    return rows


def _workers() -> int:
    env = os.environ.get("XMC_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(limit, os.cpu_count() or 1))


def paired_bootstrap_ci(diffs, confidence: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean of paired differences."""
    res = bootstrap((np.asarray(diffs, dtype=np.float64),), np.mean, confidence_level=confidence,
                    n_resamples=10000, method="percentile",
                    rng=np.random.Generator(np.random.PCG64(seed)))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def ablate(cfg: RunConfig, seeds: list, out: Optional[Path] = None) -> dict:
    """All four component combinations across ``seeds`` on freshly generated data.

    Metrics are visible-to-infrared.  Writes ``ablation.tsv`` (per-mode
    mean and std), ``ablation_runs.jsonl`` and ``ablation.json`` when ``out``
    is given.
    """
    if len(seeds) < 3:
        raise InputError("ablation needs at least 3 seeds")
    if len(set(seeds)) != len(seeds):
        raise InputError("duplicate seeds: " + ", ".join(str(s) for s in seeds))
    jobs = [(cfg, s) for s in seeds]
    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ablation_job, jobs))
    else:
        results = [_ablation_job(j) for j in jobs]
    runs = [r for rows in results for r in rows]

    table = {}
    for mode in MODES:
        rs = [r for r in runs if r.mode == mode.value]
        table[mode.value] = {
            "n": len(rs), "mu": rs[0].mu, "w": rs[0].w,
            **{f"{key}_{stat}": float(fn([getattr(r, key) for r in rs]))
               for key in ("map", "cmc1", "minp")
               for stat, fn in (("mean", np.mean), ("std", lambda x: np.std(x, ddof=1)))},
        }
    by = {(r.seed, r.mode): r.map for r in runs}
    diffs = [by[(s, "full")] - by[(s, "baseline")] for s in seeds]
    low, high = paired_bootstrap_ci(diffs)
    summary = {"seeds": list(seeds), "modes": table,
               "full_minus_baseline_map": {"mean": float(np.mean(diffs)), "ci95": [low, high]}}

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cols = ["mode", "n", "mu", "w", "map_mean", "map_std", "cmc1_mean", "cmc1_std",
                "minp_mean", "minp_std"]
        lines = ["\t".join(cols)]
        for mode, row in table.items():
            lines.append("\t".join([mode] + [_cell(row[c]) for c in cols[1:]]))
        (out / "ablation.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        with (out / "ablation_runs.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
            for r in runs:
                fh.write(json.dumps(r.__dict__, sort_keys=True) + "\n")
        (out / "ablation.json").write_text(_json(summary), encoding="utf-8")
    return summary


def _cell(v) -> str:
    return str(v) if isinstance(v, int) else f"{v:.6f}"
