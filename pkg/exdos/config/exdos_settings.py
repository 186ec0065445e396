"""ExDoS 运行时配置。

说明：
- 所有可调项都从环境变量读取，带默认值回退（.env 由 CLI 入口统一 load_dotenv）
- 命令行参数优先级高于环境变量，合并逻辑在 cli 层完成
- 路径统一使用相对路径（runs/），避免部署时绝对路径找不到
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path


def _env_int(name: str, default: int) -> int:
    raw = str(os.environ.get(name) or "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


@dataclass(frozen=True)
class Settings:
    """进程级配置快照。"""

    seed: int
    out_dir: Path
    log_level: str
    threads: int
    opcode_override: Path | None
    pattern_radius: int

    @property
    def has_opcode_override(self) -> bool:
        return self.opcode_override is not None

    def ensure_out_dir(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir


def load_settings() -> Settings:
    """按当前环境变量构建 Settings（每次调用重新读取，方便测试 monkeypatch）。"""

    override = str(os.environ.get("EXDOS_OPCODE_OVERRIDE") or "").strip()
    return Settings(
        seed=_env_int("EXDOS_SEED", 7),
        out_dir=Path(os.environ.get("EXDOS_OUT_DIR") or "runs"),
        log_level=str(os.environ.get("EXDOS_LOG_LEVEL") or "INFO").strip().upper(),
        threads=max(_env_int("EXDOS_THREADS", 1), 1),
        opcode_override=Path(override) if override else None,
        pattern_radius=max(_env_int("EXDOS_PATTERN_RADIUS", 2), 1),
    )


def seed_from_env() -> int | None:
    raw = str(os.environ.get("EXDOS_SEED") or "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        return None
