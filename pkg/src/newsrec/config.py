"""Run configuration: one flat INI file, every key overridable from the CLI.

Sections only group keys for readability; key names are unique across the
file, so ``--lr 0.001`` on the command line overrides ``lr`` wherever it was
written. Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

PATH_KEYS = ("news", "train_behaviors", "val_behaviors", "test_behaviors", "embeddings", "out")


@dataclass
class RunConfig:
    # data
    news: str = ""
    train_behaviors: str = ""
    val_behaviors: str = ""
    test_behaviors: str = ""
    embeddings: str = ""
    embedding_mode: str = "random"
    title_max: int = 32
    abstract_max: int = 64
    history_max: int = 60
    # model
    d_w: int = 300
    n_f: int = 400
    window: int = 3
    d_a: int = 200
    d_c: int = 100
    d_att: int = 200
    predictor: str = "neural"
    predictor_hidden: list[int] = field(default_factory=lambda: [256, 64])
    dropout: float = 0.3
    category_views: bool = True
    word_attention: bool = True
    # training
    k: int = 3
    batch_size: int = 128
    lr: float = 1e-4
    epochs: int = 5
    seed: int = 0
    clip_norm: float = 5.0
    log_every: int = 10
    eval_batch_size: int = 64
    # sampling
    min_user_clicks: int = 24
    min_news_clicks: int = 150
    # output
    out: str = "runs/default"

    def validate(self) -> None:
        for name in ("title_max", "abstract_max", "history_max"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.embedding_mode != "random" and not self.embeddings:
            raise ConfigError(f"embedding_mode={self.embedding_mode} needs an embeddings file")
        if self.min_user_clicks < 1 or self.min_news_clicks < 1:
            raise ConfigError("min_user_clicks and min_news_clicks must be >= 1")
        self.model_config().validate()
        self.train_config().validate()

    def model_config(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        return ModelConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def model_hash(self) -> str:
        """Digest of everything that fixes parameter shapes and forward semantics."""
        keys = dict(self.model_config().to_dict(), title_max=self.title_max,
                    abstract_max=self.abstract_max, history_max=self.history_max)
        blob = json.dumps(keys, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_ini(self) -> str:
        lines = ["[run]"]
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_value(key: str, raw: str):
    kind = FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "list[int]":
            return [int(p) for p in raw.replace(" ", "").split(",") if p]
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind})") from None
    return raw


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read ``path`` (optional), apply string ``overrides`` and validate."""
    values: dict[str, object] = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None, default_section="__unused__")
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        base = path.resolve().parent
        for section in parser.sections():
            for key, raw in parser.items(section):
                if key not in FIELD_TYPES:
                    raise ConfigError(f"unknown config key {key!r} in [{section}] of {path}")
                if key in values:
                    raise ConfigError(f"config key {key!r} set twice in {path}")
                values[key] = parse_value(key, raw)
        for key in PATH_KEYS:
            if values.get(key):
                values[key] = str(base / str(values[key]))
    for key, raw in (overrides or {}).items():
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = parse_value(key, raw)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg
