"""Flat ``key = value`` run configuration files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from kgrec.evaluation import FILTERS
from kgrec.models import KINDS
from kgrec.training import LOSSES, OPTIMIZERS, REGULARIZERS, STRATEGIES, TrainingConfig


class ConfigError(ValueError):
    pass


def _patience(v: str) -> int | None:
    return None if v.lower() in ("none", "off") else int(v)


# key -> (parser, default); default None with required=True means no default
KEYS = {
    "dataset.path": (str, None),
    "dataset.format": (str, "adjacency"),
    "dataset.valid_fraction": (float, 0.1),
    "model.kind": (str, None),
    "model.dim": (int, 64),
    "train.strategy": (str, "OneVsAll"),
    "train.loss": (str, "KL"),
    "train.optimizer": (str, "Adagrad"),
    "train.lr": (float, 0.1),
    "train.batch": (int, 1024),
    "train.reg": (str, "None"),
    "train.reg_weight": (float, 0.0),
    "train.margin": (float, 1.0),
    "train.negatives": (int, 1),
    "train.epochs": (int, 200),
    "train.patience": (_patience, 5),
    "eval.k": (int, 20),
    "eval.filter": (str, "train+valid"),
    "seed": (int, 0),
}

REQUIRED = {
    "train": ("dataset.path", "model.kind"),
    "evaluate": ("dataset.path",),
    "grid": ("dataset.path", "model.kind"),
    "sweep": ("dataset.path", "model.kind"),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def training_config(self) -> TrainingConfig:
        v = self.values
        return TrainingConfig(
            strategy=v["train.strategy"],
            loss=v["train.loss"],
            batch_size=v["train.batch"],
            optimizer=v["train.optimizer"],
            learning_rate=v["train.lr"],
            regularizer=v["train.reg"],
            reg_weight=v["train.reg_weight"],
            margin=v["train.margin"],
            negatives=v["train.negatives"],
            epochs=v["train.epochs"],
            patience=v["train.patience"],
            seed=v["seed"],
        )


def parse_config(text: str, source: str = "<config>", command: str | None = None) -> RunConfig:
    """Parse and validate a config; every problem raises ``ConfigError`` with a line number."""
    values = {k: default for k, (_, default) in KEYS.items()}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        parser = KEYS[key][0]
        try:
            values[key] = parser(value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value {value!r} for {key!r}") from None
        seen[key] = lineno

    def where(key):
        return f"{source}:{seen[key]}" if key in seen else source

    for key in REQUIRED.get(command, ()):
        if values[key] is None:
            raise ConfigError(f"{source}: missing required key {key!r}")
    if values["model.kind"] is not None and values["model.kind"] not in KINDS:
        raise ConfigError(f"{where('model.kind')}: model.kind must be one of {', '.join(KINDS)}")
    if values["dataset.format"] not in ("adjacency", "pairs"):
        raise ConfigError(f"{where('dataset.format')}: dataset.format must be adjacency or pairs")
    if values["eval.filter"] not in FILTERS:
        raise ConfigError(f"{where('eval.filter')}: eval.filter must be one of {', '.join(FILTERS)}")
    choices = {
        "train.strategy": STRATEGIES,
        "train.loss": LOSSES,
        "train.optimizer": OPTIMIZERS,
        "train.reg": REGULARIZERS,
    }
    for key, allowed in choices.items():
        if values[key] not in allowed:
            raise ConfigError(f"{where(key)}: {key} must be one of {', '.join(allowed)}")
    for key in ("model.dim", "eval.k"):
        if values[key] < 1:
            raise ConfigError(f"{where(key)}: {key} must be >= 1")
    if not 0.0 <= values["dataset.valid_fraction"] < 1.0:
        raise ConfigError(f"{where('dataset.valid_fraction')}: dataset.valid_fraction must be in [0, 1)")
    cfg = RunConfig(values)
    try:
        cfg.training_config()
    except ValueError as e:
        keys = [k for k in seen if k.startswith("train.") or k == "seed"]
        line = max((seen[k] for k in keys), default=None)
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: {e}") from None
    return cfg


def load_config(path: str | Path, command: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: not valid UTF-8 ({e.reason})") from None
    return parse_config(text, str(path), command)
