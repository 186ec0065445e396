"""数据集清单（manifest）与分层划分。

manifest JSON：
    {"provenance": "...", "entries": [{contract_id, bytecode_path, ast_path, vulnerability, label}, ...]}
路径相对 manifest 所在目录解析；label 取 vulnerable / normal。
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from sklearn.model_selection import train_test_split

from exdos.services.pattern_engine_service import VULNERABILITIES
from exdos.utils.errors import DatasetError
from exdos.utils.json_io import read_json, write_json


logger = logging.getLogger(__name__)

LABELS = ("normal", "vulnerable")
DEFAULT_RATIOS = (7, 1, 2)


@dataclass(frozen=True)
class ManifestEntry:
    contract_id: str
    bytecode_path: Path
    vulnerability: str
    label: str
    ast_path: Path | None = None

    @property
    def target(self) -> int:
        """类别下标：0 = normal，1 = vulnerable。"""

        return LABELS.index(self.label)

    def read_bytecode(self) -> str:
        try:
            return self.bytecode_path.read_text(encoding="utf-8").strip()
        except FileNotFoundError as exc:
            raise DatasetError(f"bytecode file missing for {self.contract_id}: {self.bytecode_path}") from exc

    def read_ast(self) -> str:
        if self.ast_path is None:
            raise DatasetError(f"entry {self.contract_id} has no AST")
        try:
            return self.ast_path.read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise DatasetError(f"AST file missing for {self.contract_id}: {self.ast_path}") from exc

    def to_dict(self, root: Path) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id,
            "bytecode_path": _relative(self.bytecode_path, root),
            "ast_path": _relative(self.ast_path, root) if self.ast_path is not None else None,
            "vulnerability": self.vulnerability,
            "label": self.label,
        }


def _relative(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return path.as_posix()


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    root: Path
    provenance: str = ""

    def for_vulnerability(self, vulnerability: str) -> list[ManifestEntry]:
        if vulnerability not in VULNERABILITIES:
            raise DatasetError(f"unknown vulnerability {vulnerability!r}")
        return [e for e in self.entries if e.vulnerability == vulnerability]

    def by_id(self, contract_id: str) -> ManifestEntry:
        for entry in self.entries:
            if entry.contract_id == contract_id:
                return entry
        raise DatasetError(f"contract {contract_id!r} is not in the manifest")

    def to_dict(self) -> dict[str, Any]:
        return {"provenance": self.provenance, "entries": [e.to_dict(self.root) for e in self.entries]}


def validate_manifest(manifest: DatasetManifest, *, check_paths: bool = True) -> None:
    """校验：标签二值、漏洞类型合法、contract_id 全局唯一（各漏洞子集天然不相交）、文件存在。"""

    seen: set[str] = set()
    for entry in manifest.entries:
        if entry.label not in LABELS:
            raise DatasetError(f"entry {entry.contract_id}: label must be one of {LABELS}, got {entry.label!r}")
        if entry.vulnerability not in VULNERABILITIES:
            raise DatasetError(f"entry {entry.contract_id}: unknown vulnerability {entry.vulnerability!r}")
        if entry.contract_id in seen:
            raise DatasetError(f"duplicate contract_id {entry.contract_id!r}")
        seen.add(entry.contract_id)
        if check_paths:
            if not entry.bytecode_path.is_file():
                raise DatasetError(f"entry {entry.contract_id}: bytecode file not found {entry.bytecode_path}")
            if entry.ast_path is not None and not entry.ast_path.is_file():
                raise DatasetError(f"entry {entry.contract_id}: AST file not found {entry.ast_path}")


def manifest_from_dict(data: Any, root: Path) -> DatasetManifest:
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise DatasetError("manifest must be an object with an 'entries' array")
    entries: list[ManifestEntry] = []
    for raw in data["entries"]:
        try:
            ast_raw = raw.get("ast_path")
            entries.append(
                ManifestEntry(
                    contract_id=str(raw["contract_id"]),
                    bytecode_path=root / str(raw["bytecode_path"]),
                    ast_path=root / str(ast_raw) if ast_raw else None,
                    vulnerability=str(raw["vulnerability"]),
                    label=str(raw["label"]),
                )
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise DatasetError(f"invalid manifest entry {raw!r}: {exc}") from exc
    return DatasetManifest(entries=tuple(entries), root=root, provenance=str(data.get("provenance") or ""))


def load_manifest(path: str | Path, *, check_paths: bool = True) -> DatasetManifest:
    source = Path(path)
    manifest = manifest_from_dict(read_json(source), source.parent)
    validate_manifest(manifest, check_paths=check_paths)
    counts = Counter((e.vulnerability, e.label) for e in manifest.entries)
    logger.info("manifest loaded | path=%s | entries=%s | counts=%s", str(source), len(manifest.entries), dict(counts))
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    validate_manifest(manifest, check_paths=False)
    return write_json(path, manifest.to_dict())


# ---------------------------------------------------------------------------
# 分层划分
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[ManifestEntry, ...]
    val: tuple[ManifestEntry, ...]
    test: tuple[ManifestEntry, ...]
    seed: int = 0
    ratios: tuple[int, int, int] = field(default=DEFAULT_RATIOS)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": [e.contract_id for e in self.train],
            "val": [e.contract_id for e in self.val],
            "test": [e.contract_id for e in self.test],
        }


def _split_off(
    entries: list[ManifestEntry], size: int, *, seed: int
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    if size <= 0:
        return entries, []
    if size >= len(entries):
        raise DatasetError(f"cannot hold out {size} of {len(entries)} samples")
    labels = [e.target for e in entries]
    counts = Counter(labels)
    stratify: list[int] | None = labels
    # 样本太少时 sklearn 无法分层，退回普通随机划分
    if size < len(counts) or len(entries) - size < len(counts) or min(counts.values()) < 2:
        logger.warning("stratification skipped | samples=%s | hold_out=%s | classes=%s", len(entries), size, dict(counts))
        stratify = None
    try:
        rest, held = train_test_split(entries, test_size=size, random_state=seed, stratify=stratify)
    except ValueError as exc:
        raise DatasetError(f"stratified split failed: {exc}") from exc
    return list(rest), list(held)


def stratified_split(
    entries: Sequence[ManifestEntry],
    *,
    ratios: Iterable[int] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    """按 train:val:test 比例分层划分；同一 seed 结果确定，各集合不相交且覆盖全部样本。"""

    train_r, val_r, test_r = (int(r) for r in ratios)
    total_r = train_r + val_r + test_r
    if min(train_r, val_r, test_r) < 0 or total_r <= 0 or train_r == 0:
        raise DatasetError(f"invalid split ratios {(train_r, val_r, test_r)}")
    ordered = sorted(entries, key=lambda e: e.contract_id)
    n = len(ordered)
    if n == 0:
        raise DatasetError("cannot split an empty dataset")

    n_test = round(n * test_r / total_r)
    n_val = round(n * val_r / total_r)
    rest, test = _split_off(ordered, n_test, seed=seed)
    train, val = _split_off(rest, n_val, seed=seed)
    split = DatasetSplit(
        train=tuple(train),
        val=tuple(val),
        test=tuple(test),
        seed=seed,
        ratios=(train_r, val_r, test_r),
    )
    logger.debug("dataset split | seed=%s | train=%s | val=%s | test=%s", seed, len(train), len(val), len(test))
    return split
