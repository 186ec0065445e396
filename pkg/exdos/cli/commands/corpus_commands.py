"""数据集子命令：gen-corpus / split。"""
from __future__ import annotations

import argparse

from exdos.cli.context import CommandContext
from exdos.services.corpus_generator_service import MIN_PER_VULNERABILITY, CorpusSpec, generate_synthetic_corpus
from exdos.services.dataset_service import DEFAULT_RATIOS, load_manifest, stratified_split
from exdos.services.pattern_engine_service import VULNERABILITIES
from exdos.utils.errors import UsageError
from exdos.utils.json_io import write_json


def _parse_ratios(raw: str) -> tuple[int, int, int]:
    parts = [p for p in raw.replace(":", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise UsageError(f"--ratios needs three integers like 7,1,2, got {raw!r}")
    try:
        return int(parts[0]), int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise UsageError(f"--ratios needs integers, got {raw!r}") from exc


def cmd_gen_corpus(args: argparse.Namespace, ctx: CommandContext) -> int:
    spec = CorpusSpec(
        per_vulnerability=args.per_vulnerability,
        vulnerabilities=tuple(args.vulnerability or VULNERABILITIES),
        max_noise_functions=args.max_noise,
    )
    dest = args.dest or (ctx.out_dir / "corpus")
    manifest = generate_synthetic_corpus(dest, spec=spec, seed=ctx.seed, include_handcrafted=args.handcrafted)
    ctx.write_resolved("gen-corpus", args, contracts=len(manifest.entries))
    return 0


def cmd_split(args: argparse.Namespace, ctx: CommandContext) -> int:
    manifest = load_manifest(args.manifest)
    entries = manifest.for_vulnerability(args.vulnerability) if args.vulnerability else list(manifest.entries)
    split = stratified_split(entries, ratios=_parse_ratios(args.ratios), seed=ctx.seed)
    write_json(ctx.output_path(args.out, "split.json"), split.to_dict())
    ctx.write_resolved("split", args)
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("gen-corpus", help="生成合成语料 + manifest")
    p.add_argument("--dest", help="输出目录（默认 <out-dir>/corpus）")
    p.add_argument("--per-vulnerability", type=int, default=MIN_PER_VULNERABILITY)
    p.add_argument("--vulnerability", action="append", choices=VULNERABILITIES, help="可重复；默认全部")
    p.add_argument("--max-noise", type=int, default=2, help="每个合约最多插入的无关函数对数")
    p.add_argument("--handcrafted", action="store_true", help="额外写出每个模板的无噪声标注实例")
    p.set_defaults(handler=cmd_gen_corpus)

    p = subparsers.add_parser("split", help="分层划分 train/val/test")
    p.add_argument("manifest")
    p.add_argument("--vulnerability", choices=VULNERABILITIES)
    p.add_argument("--ratios", default=",".join(str(r) for r in DEFAULT_RATIOS))
    p.add_argument("--out")
    p.set_defaults(handler=cmd_split)
