"""Flat ``key = value`` run configuration.

One key per line, ``#`` starts a comment.  Every key is optional; unknown
keys are rejected by name.  Paths are resolved against the config file's
directory.  Keys::

    # synthetic data
    num_identities  samples_per_identity_per_modality  dim
    intra_identity_spread  modality_offset_scale  offset_rank
    fragmentation_rate
    # training
    epochs  steps_per_epoch  ids_per_batch  instances_per_id
    learning_rate  lr_decay_every  mu  lambda  w  k  tau  momentum
    dbscan_eps  dbscan_min_pts  feature_jitter  mode
    # shared / io
    seed  visible_features  infrared_features  max_rank  dump_labels
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .dataspace import SynthConfig
from .trainer import Mode, TrainConfig

_SECTION = "xmc"

# config key -> TrainConfig field, where they differ
_TRAIN_ALIASES = {"lambda": "lam"}


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    visible_features: Optional[Path] = None
    infrared_features: Optional[Path] = None
    max_rank: int = 20
    dump_labels: bool = False

    @property
    def seed(self) -> int:
        return self.train.seed

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, synth=dataclasses.replace(self.synth, seed=seed),
                                   train=dataclasses.replace(self.train, seed=seed))

    def with_mode(self, mode) -> "RunConfig":
        return dataclasses.replace(self, train=dataclasses.replace(self.train, mode=Mode(mode)))

    def to_flat(self) -> dict:
        out = {}
        for f in fields(SynthConfig):
            if f.name != "seed":
                out[f.name] = getattr(self.synth, f.name)
        for f in fields(TrainConfig):
            key = next((k for k, v in _TRAIN_ALIASES.items() if v == f.name), f.name)
            value = getattr(self.train, f.name)
            out[key] = value.value if isinstance(value, Mode) else value
        out["visible_features"] = str(self.visible_features) if self.visible_features else None
        out["infrared_features"] = str(self.infrared_features) if self.infrared_features else None
        out["max_rank"] = self.max_rank
        out["dump_labels"] = self.dump_labels
        return out

    def dumps(self) -> str:
        lines = [f"{k} = {_fmt(v)}" for k, v in self.to_flat().items() if v is not None]
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _schema() -> dict:
    types = {}
    for f in fields(SynthConfig):
        types[f.name] = ("synth", f.name, f.type)
    for f in fields(TrainConfig):
        key = next((k for k, v in _TRAIN_ALIASES.items() if v == f.name), f.name)
        types[key] = ("train", f.name, f.type)
    types["seed"] = ("both", "seed", "int")
    types["visible_features"] = ("io", "visible_features", "path")
    types["infrared_features"] = ("io", "infrared_features", "path")
    types["max_rank"] = ("io", "max_rank", "int")
    types["dump_labels"] = ("io", "dump_labels", "bool")
    return types


_CONVERTERS = {"int": int, "float": float, "bool": _bool, "Mode": Mode}


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    raw = dict(parser[_SECTION])

    schema = _schema()
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))

    synth, train, io = {}, {}, {}
    for key, text_value in raw.items():
        target, name, kind = schema[key]
        try:
            if kind == "path":
                value = Path(text_value.strip())
                value = value if value.is_absolute() else (base_dir / value).resolve()
            else:
                value = _CONVERTERS[kind](text_value.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        if target in ("synth", "both"):
            synth[name] = value
        if target in ("train", "both"):
            train[name] = value
        if target == "io":
            io[name] = value
    try:
        cfg = RunConfig(SynthConfig(**synth), TrainConfig(**train), **io)
        cfg.synth.validate()
        cfg.train.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)
