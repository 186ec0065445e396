"""JSON / CSV 落盘工具。

所有输出都走这里，保证同样输入得到字节一致的文件（key 排序、固定分隔符、无时间戳）。
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import pandas as pd

from exdos.utils.errors import InputFormatError


def canonical_dumps(payload: Any) -> str:
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, payload: Any) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(canonical_dumps(payload), encoding="utf-8")
    return target


def read_json(path: str | Path) -> Any:
    source = Path(path)
    try:
        return json.loads(source.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputFormatError(f"file not found: {source}") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"invalid JSON in {source}: {exc.msg} at line {exc.lineno}") from exc


def write_csv(path: str | Path, rows: list[dict[str, Any]], *, columns: list[str]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(target, index=False, float_format="%.6f", lineterminator="\n")
    return target


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
