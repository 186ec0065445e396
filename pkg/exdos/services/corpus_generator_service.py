"""合成语料生成。

- handcrafted_corpus()：每个模板一份无噪声实例，附带两种模态的期望子模式，用作模式规则的标注集
- generate_synthetic_corpus()：按漏洞类型轮流实例化易受攻击 / 安全模板，随机化存储槽位、常量
  和无关的 getter/setter，落盘 .hex / .ast.json 并写 manifest
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from exdos.services.corpus_templates import (
    NORMAL,
    TEMPLATES,
    VULNERABLE,
    ContractTemplate,
    RenderedContract,
    Variant,
    render_template,
)
from exdos.services.dataset_service import LABELS, DatasetManifest, ManifestEntry, write_manifest
from exdos.services.pattern_engine_service import VULNERABILITIES
from exdos.utils.errors import ConfigError


logger = logging.getLogger(__name__)

MIN_PER_VULNERABILITY = 40
PROVENANCE = "synthetic: hand-written opcode and AST templates (exdos gen-corpus)"


@dataclass(frozen=True)
class CorpusSpec:
    per_vulnerability: int = MIN_PER_VULNERABILITY
    vulnerabilities: tuple[str, ...] = VULNERABILITIES
    max_noise_functions: int = 2

    def __post_init__(self) -> None:
        if self.per_vulnerability < 2:
            raise ConfigError("per_vulnerability must be at least 2")
        unknown = set(self.vulnerabilities) - set(VULNERABILITIES)
        if unknown:
            raise ConfigError(f"unknown vulnerabilities {sorted(unknown)}")


def templates_for(vulnerability: str, label: int | None = None) -> list[ContractTemplate]:
    return [t for t in TEMPLATES if t.vulnerability == vulnerability and (label is None or t.label == label)]


def handcrafted_corpus(*, seed: int = 0) -> list[RenderedContract]:
    """每个模板一个实例（无噪声函数），合约名即模板名。"""

    rng = np.random.default_rng(seed)
    return [render_template(t, Variant(rng=rng, contract_name=t.name)) for t in TEMPLATES]


def iter_synthetic(spec: CorpusSpec, *, seed: int) -> list[RenderedContract]:
    rng = np.random.default_rng(seed)
    out: list[RenderedContract] = []
    for vulnerability in spec.vulnerabilities:
        pools = {label: templates_for(vulnerability, label) for label in (0, 1)}
        for i in range(spec.per_vulnerability):
            label = VULNERABLE if i % 2 == 0 else NORMAL
            pool = pools[label]
            template = pool[int(rng.integers(0, len(pool)))]
            variant = Variant(
                rng=rng,
                contract_name=f"{template.name}_{vulnerability.replace('-', '_')}_{i:03d}",
                noise=int(rng.integers(0, spec.max_noise_functions + 1)),
                noise_first=bool(rng.integers(0, 2)),
            )
            out.append(render_template(template, variant))
    return out


def write_contract(rendered: RenderedContract, directory: Path) -> tuple[Path, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    bytecode_path = directory / f"{rendered.contract_id}.hex"
    ast_path = directory / f"{rendered.contract_id}.ast.json"
    bytecode_path.write_text(rendered.bytecode_hex + "\n", encoding="utf-8")
    ast_path.write_text(json.dumps(rendered.ast, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return bytecode_path, ast_path


def generate_synthetic_corpus(
    out_dir: str | Path,
    *,
    spec: CorpusSpec | None = None,
    seed: int = 7,
    include_handcrafted: bool = False,
) -> DatasetManifest:
    """生成语料并写 <out_dir>/manifest.json，返回 manifest。同一 seed 输出逐字节一致。"""

    spec = spec or CorpusSpec()
    root = Path(out_dir)
    contracts_dir = root / "contracts"
    rendered = iter_synthetic(spec, seed=seed)
    if include_handcrafted:
        rendered = [r for r in handcrafted_corpus(seed=seed) if r.template.vulnerability in spec.vulnerabilities] + rendered

    entries: list[ManifestEntry] = []
    for item in rendered:
        bytecode_path, ast_path = write_contract(item, contracts_dir)
        entries.append(
            ManifestEntry(
                contract_id=item.contract_id,
                bytecode_path=bytecode_path,
                ast_path=ast_path,
                vulnerability=item.template.vulnerability,
                label=LABELS[item.template.label],
            )
        )
    manifest = DatasetManifest(entries=tuple(entries), root=root, provenance=f"{PROVENANCE}; seed={seed}")
    write_manifest(manifest, root / "manifest.json")
    logger.info(
        "synthetic corpus generated | out=%s | contracts=%s | per_vulnerability=%s | seed=%s",
        str(root),
        len(entries),
        spec.per_vulnerability,
        seed,
    )
    return manifest
