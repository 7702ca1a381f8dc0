"""Flat ``key = value`` run configuration with dotted sections.

Example::

    task = forecast-mnist
    model.name = tfc-d2
    model.feature_scale = 0.5
    training.epochs = 50
    data.path = /data/mnist_test_seq.npy
    output.dir = runs/d2

Lines starting with ``#`` or ``;`` are comments. Unknown keys are errors.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .model import ConfigError, ModelSpec, builtin_spec

TASKS = ("forecast-mnist", "forecast-jsb", "classify-cifar10")

TASK_DEFAULTS = {
    "forecast-mnist": {"model": "tfc-d2", "lr": 5e-4, "batch_size": 18, "epochs": 50},
    "forecast-jsb": {"model": "tfc-d1", "lr": 2e-3, "batch_size": 50, "epochs": 50},
    "classify-cifar10": {"model": "tfc-d1-cifar", "lr": 5e-4, "batch_size": 50, "epochs": 450},
}


@dataclass
class OptimizerConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainingConfig:
    epochs: int = 50
    batch_size: int = 18
    seed: int = 0
    precision: int = 32


@dataclass
class DataConfig:
    path: str | None = None
    horizon: int = 1
    split_seed: int = 0
    train_limit: int | None = None
    val_limit: int | None = None
    test_limit: int | None = None
    train_chorales: int = 250  # JSB: leading chorales that form the training corpus


@dataclass
class ModelConfig:
    name: str = "tfc-d2"
    spec: str | None = None  # inline JSON, or a path to a JSON file
    feature_scale: float = 1.0


@dataclass
class OutputConfig:
    dir: str = "runs"


@dataclass
class RunConfig:
    task: str = "forecast-mnist"
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def for_task(cls, task: str) -> "RunConfig":
        if task not in TASK_DEFAULTS:
            raise ConfigError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
        d = TASK_DEFAULTS[task]
        return cls(task=task, model=ModelConfig(name=d["model"]), optimizer=OptimizerConfig(lr=d["lr"]),
                   training=TrainingConfig(epochs=d["epochs"], batch_size=d["batch_size"]))

    def model_spec(self) -> ModelSpec:
        if self.model.spec:
            text = self.model.spec.strip()
            if not text.startswith("{"):
                try:
                    text = Path(text).read_text(encoding="utf-8")
                except OSError as exc:
                    raise ConfigError(f"cannot read model spec {self.model.spec}: {exc}") from None
            try:
                spec = ModelSpec.from_dict(json.loads(text))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ConfigError(f"invalid model spec: {exc}") from None
        else:
            spec = builtin_spec(self.model.name)
        return spec.scaled(self.model.feature_scale)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def to_dict(self) -> dict:
        out = {"task": self.task}
        for f in fields(self):
            if f.name != "task":
                out[f.name] = {g.name: getattr(getattr(self, f.name), g.name) for g in fields(getattr(self, f.name))}
        return out

    def dumps(self) -> str:
        lines = [f"task = {self.task}"]
        for section, values in self.to_dict().items():
            if section == "task":
                continue
            for k, v in values.items():
                if v is not None:
                    lines.append(f"{section}.{k} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(value: str, target_type, key: str):
    kind = str(target_type)
    optional = "None" in kind
    if optional and value.lower() in ("", "none"):
        return None
    try:
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.split('|')[0].strip()}") from None
    return value


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    pairs: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((lineno, key, value))

    task = next((v for _, k, v in pairs if k == "task"), "forecast-mnist")
    cfg = RunConfig.for_task(task)
    seen = set()
    for lineno, key, value in pairs:
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key}")
        seen.add(key)
        if key == "task":
            continue
        section, _, name = key.partition(".")
        sub = getattr(cfg, section, None) if section != "task" else None
        if sub is None or not name or name not in {f.name for f in fields(sub)}:
            raise ConfigError(f"{source}:{lineno}: unknown key {key}")
        ftype = next(f.type for f in fields(sub) if f.name == name)
        setattr(cfg, section, replace(sub, **{name: _coerce(value, ftype, key)}))
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def validate_config(cfg: RunConfig) -> None:
    if cfg.task not in TASKS:
        raise ConfigError(f"unknown task {cfg.task!r}")
    t = cfg.training
    if t.epochs < 0 or t.batch_size < 1:
        raise ConfigError("training.epochs must be >= 0 and training.batch_size >= 1")
    if t.precision not in (32, 64):
        raise ConfigError("training.precision must be 32 or 64")
    if cfg.optimizer.lr <= 0:
        raise ConfigError("optimizer.lr must be positive")
    if not 1 <= cfg.data.horizon <= 10:
        raise ConfigError("data.horizon must be between 1 and 10")
    if cfg.data.train_chorales < 0:
        raise ConfigError("data.train_chorales must be >= 0")
    if cfg.model.feature_scale <= 0:
        raise ConfigError("model.feature_scale must be positive")
    spec = cfg.model_spec()
    if (cfg.task == "classify-cifar10") != spec.classifier:
        raise ConfigError(f"model {spec.name} does not fit task {cfg.task}")
