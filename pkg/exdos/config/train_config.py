"""训练配置（TrainConfig）。

处理方式：同步加载，支持 YAML / JSON / TOML 三种格式
设计原因：
1. 每个训练子命令都吃同一份配置，方便脚本化和复现
2. 消融开关全部放在配置里，一个预设就是一组覆盖项，eval --ablation 按名字展开
"""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from exdos.utils.errors import ConfigError


LEARNING_RATE_GRID = (1e-4, 5e-4, 1e-3, 5e-3)
DISTILL_TARGETS = ("both", "gnn_only", "agp_only", "off")
LOSS_MIXES = ("both", "global_only", "local_only", "off")
POOLING_VARIANTS = ("agp", "avg", "max", "power")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    teacher_epochs: int = 200
    distill_epochs: int = 200
    finetune_epochs: int = 200
    seed: int = 7
    distill_target: str = "both"
    loss_mix: str = "both"
    pooling_variant: str = "agp"
    pattern_mask: str = "all"
    hidden_dim: int = 128
    num_layers: int = 2
    relation_dim: int = 16
    head_hidden: int = 64
    pattern_radius: int = 2

    def __post_init__(self) -> None:
        if not any(abs(self.learning_rate - lr) < 1e-12 for lr in LEARNING_RATE_GRID):
            raise ConfigError(f"learning_rate must be one of {LEARNING_RATE_GRID}, got {self.learning_rate}")
        if self.distill_target not in DISTILL_TARGETS:
            raise ConfigError(f"distill_target must be one of {DISTILL_TARGETS}, got {self.distill_target!r}")
        if self.loss_mix not in LOSS_MIXES:
            raise ConfigError(f"loss_mix must be one of {LOSS_MIXES}, got {self.loss_mix!r}")
        if self.pooling_variant not in POOLING_VARIANTS:
            raise ConfigError(f"pooling_variant must be one of {POOLING_VARIANTS}, got {self.pooling_variant!r}")
        for name in ("batch_size", "hidden_dim", "relation_dim", "head_hidden", "pattern_radius"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("teacher_epochs", "distill_epochs", "finetune_epochs", "num_layers"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(f"{name} must be non-negative")

    @property
    def distillation_enabled(self) -> bool:
        return self.distill_target != "off" and self.loss_mix != "off"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **overrides)


# 消融预设：每个名字对应一组配置覆盖
ABLATION_PRESETS: dict[str, dict[str, Any]] = {
    "full": {},
    "d-gnn": {"distill_target": "gnn_only"},
    "d-agp": {"distill_target": "agp_only"},
    "w-o-distill": {"distill_target": "off", "pattern_mask": "none"},
    "pool-avg": {"pooling_variant": "avg"},
    "pool-max": {"pooling_variant": "max"},
    "pool-power": {"pooling_variant": "power"},
    "global-only": {"loss_mix": "global_only"},
    "local-only": {"loss_mix": "local_only"},
    "w-o-p1": {"pattern_mask": "without:P1"},
    "w-o-p2": {"pattern_mask": "without:P2"},
    "w-o-p3": {"pattern_mask": "without:P3"},
    "only-p1": {"pattern_mask": "only:P1"},
    "only-p2": {"pattern_mask": "only:P2"},
    "only-p3": {"pattern_mask": "only:P3"},
}


def apply_preset(config: TrainConfig, preset: str) -> TrainConfig:
    key = str(preset or "full").strip().lower()
    if key not in ABLATION_PRESETS:
        raise ConfigError(f"unknown ablation preset {preset!r}; known: {sorted(ABLATION_PRESETS)}")
    return config.with_overrides(**ABLATION_PRESETS[key])


def _parse_text(path: Path, text: str) -> dict[str, Any]:
    suffix = path.suffix.lower()
    try:
        if suffix in {".yaml", ".yml"}:
            data = yaml.safe_load(text)
        elif suffix == ".toml":
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except (yaml.YAMLError, tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    # 兼容把配置放在 train: 段落下的写法
    if set(data) == {"train"} and isinstance(data["train"], dict):
        data = data["train"]
    return data


def load_train_config(path: str | Path | None = None, **overrides: Any) -> TrainConfig:
    """读取配置文件并叠加覆盖项（None 值视为未指定）。"""

    values: dict[str, Any] = {}
    if path is not None:
        source = Path(path)
        if not source.is_file():
            raise ConfigError(f"config file not found: {source}")
        values.update(_parse_text(source, source.read_text(encoding="utf-8")))
    values.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in fields(TrainConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "learning_rate" in values:
        values["learning_rate"] = float(values["learning_rate"])
    return TrainConfig(**values)
