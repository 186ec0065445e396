"""子命令共用的运行上下文与小工具。"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from exdos.config.exdos_settings import Settings, seed_from_env
from exdos.config.train_config import TrainConfig, apply_preset, load_train_config
from exdos.services.opcode_table import OpcodeTable, load_opcode_table
from exdos.utils.errors import InputFormatError
from exdos.utils.json_io import canonical_dumps, write_json


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommandContext:
    settings: Settings
    seed: int
    out_dir: Path
    threads: int
    log_level: str
    opcode_table: OpcodeTable

    @classmethod
    def from_args(cls, args: argparse.Namespace, settings: Settings) -> "CommandContext":
        """命令行 > EXDOS_SEED > Settings 默认值。"""

        if args.seed is not None:
            seed = int(args.seed)
        else:
            env_seed = seed_from_env()
            seed = env_seed if env_seed is not None else settings.seed
        return cls(
            settings=settings,
            seed=seed,
            out_dir=Path(args.out_dir) if args.out_dir else settings.out_dir,
            threads=max(int(args.threads or settings.threads), 1),
            log_level=str(args.log_level or settings.log_level).upper(),
            opcode_table=load_opcode_table(settings.opcode_override),
        )

    def output_path(self, explicit: str | None, default_name: str) -> Path:
        return Path(explicit) if explicit else self.out_dir / default_name

    def write_resolved(self, subcommand: str, args: argparse.Namespace, **extra: Any) -> Path:
        """<out-dir>/<subcommand>.resolved.json：本次运行的完整参数（无时间戳）。"""

        options = {
            k: (str(v) if isinstance(v, Path) else v)
            for k, v in sorted(vars(args).items())
            if k not in {"handler", "command"} and not callable(v)
        }
        payload = {
            "subcommand": subcommand,
            "seed": self.seed,
            "threads": self.threads,
            "log_level": self.log_level,
            "out_dir": self.out_dir.as_posix(),
            "opcode_override": self.settings.opcode_override.as_posix() if self.settings.opcode_override else None,
            "pattern_radius": self.settings.pattern_radius,
            "options": options,
            **extra,
        }
        return write_json(self.out_dir / f"{subcommand}.resolved.json", payload)


def add_train_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TrainConfig 文件（YAML / JSON / TOML）")
    parser.add_argument("--preset", default=None, help="消融预设，例如 d-gnn / pool-avg / w-o-p1")
    parser.add_argument("--epochs", type=int, default=None, help="覆盖当前阶段的 epoch 数")


ALL_EPOCH_FIELDS = ("teacher_epochs", "distill_epochs", "finetune_epochs")


def resolve_train_config(
    args: argparse.Namespace,
    ctx: CommandContext,
    *,
    epoch_fields: tuple[str, ...] = ALL_EPOCH_FIELDS,
) -> TrainConfig:
    """配置文件 < --epochs / --radius < --preset；seed 始终取上下文里解析好的值。"""

    overrides: dict[str, Any] = {"seed": ctx.seed}
    if getattr(args, "epochs", None) is not None:
        overrides.update({name: args.epochs for name in epoch_fields})
    if getattr(args, "radius", None) is not None:
        overrides["pattern_radius"] = args.radius
    config = load_train_config(getattr(args, "config", None), **overrides)
    if getattr(args, "preset", None):
        config = apply_preset(config, args.preset)
    return config


def read_bytecode_arg(value: str) -> str:
    """参数既可以是文件路径，也可以直接是十六进制串。"""

    path = Path(value)
    try:
        if path.is_file():
            return path.read_text(encoding="utf-8").strip()
    except OSError:
        pass
    return value


def read_text(path: str | Path) -> str:
    source = Path(path)
    try:
        return source.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise InputFormatError(f"file not found: {source}") from exc


def emit_json(payload: Any) -> None:
    sys.stdout.write(canonical_dumps(payload))


def emit_line(text: str) -> None:
    sys.stdout.write(text + "\n")
