"""DAGN 参数的 JSON checkpoint。

格式：{"manifest": {...}, "arrays": {name: {"shape": [...], "data": [...]}}}
浮点数按 repr 写出，重新加载后逐位一致。
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from exdos.nn.autodiff import Tensor
from exdos.nn.dagn import DagnConfig, DagnParams
from exdos.utils.errors import InputFormatError
from exdos.utils.json_io import canonical_dumps, sha256_text


logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def checkpoint_dict(params: DagnParams, *, role: str = "") -> dict[str, Any]:
    cfg = params.config
    manifest = {
        "version": CHECKPOINT_VERSION,
        "role": role,
        "d_in": cfg.d_in,
        "d": cfg.hidden_dim,
        "L": cfg.num_layers,
        "d_r": cfg.relation_dim,
        "head_hidden": cfg.head_hidden,
        "pooling": cfg.pooling,
        "edge_type_vocab": list(cfg.relations),
        "seed": params.seed,
    }
    arrays = {
        name: {"shape": list(t.shape), "data": [float(x) for x in t.data.reshape(-1)]}
        for name, t in sorted(params.tensors.items())
    }
    return {"manifest": manifest, "arrays": arrays}


def checkpoint_text(params: DagnParams, *, role: str = "") -> str:
    return canonical_dumps(checkpoint_dict(params, role=role))


def params_digest(params: DagnParams) -> str:
    """参数内容的 SHA-256（不含 role），用于确认 teacher 在蒸馏前后未被修改。"""

    return sha256_text(checkpoint_text(params))


def save_checkpoint(params: DagnParams, path: str | Path, *, role: str = "") -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(checkpoint_text(params, role=role), encoding="utf-8")
    logger.info("checkpoint saved | path=%s | role=%s | params=%s", str(target), role, len(params.tensors))
    return target


def params_from_dict(data: Any) -> DagnParams:
    try:
        manifest = data["manifest"]
        if int(manifest["version"]) != CHECKPOINT_VERSION:
            raise InputFormatError(f"unsupported checkpoint version {manifest['version']}")
        config = DagnConfig(
            d_in=int(manifest["d_in"]),
            hidden_dim=int(manifest["d"]),
            num_layers=int(manifest["L"]),
            relation_dim=int(manifest["d_r"]),
            head_hidden=int(manifest["head_hidden"]),
            pooling=str(manifest["pooling"]),
            relations=tuple(manifest["edge_type_vocab"]),
        )
        tensors = {}
        for name, entry in data["arrays"].items():
            value = np.asarray(entry["data"], dtype=np.float64).reshape(tuple(entry["shape"]))
            tensors[name] = Tensor(value, requires_grad=True, name=name)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"invalid checkpoint: {exc}") from exc
    return DagnParams(config=config, tensors=tensors, seed=int(manifest.get("seed") or 0))


def load_checkpoint(path: str | Path) -> DagnParams:
    source = Path(path)
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputFormatError(f"checkpoint not found: {source}") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"checkpoint is not valid JSON: {source}") from exc
    return params_from_dict(data)
