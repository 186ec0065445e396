"""部署与评估子命令：detect / eval。"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from exdos.cli.context import CommandContext, add_train_options, emit_json, read_bytecode_arg, resolve_train_config
from exdos.config.train_config import ABLATION_PRESETS
from exdos.nn.checkpoint import load_checkpoint
from exdos.services.dataset_service import load_manifest
from exdos.services.detect_service import detect
from exdos.services.distill_trainer_service import evaluate_model
from exdos.services.experiment_service import DEFAULT_RUNS, ablation_report, build_samples, five_run_report
from exdos.services.metrics_service import METRIC_COLUMNS, evaluate, roc_auc
from exdos.services.pattern_engine_service import VULNERABILITIES
from exdos.utils.errors import DatasetError, UsageError
from exdos.utils.json_io import read_json, write_csv, write_json


def cmd_detect(args: argparse.Namespace, ctx: CommandContext) -> int:
    student = load_checkpoint(args.model)
    contract_id = args.contract_id or (Path(args.bytecode).name.split(".")[0] if Path(args.bytecode).is_file() else "")
    report = detect(
        read_bytecode_arg(args.bytecode),
        student,
        contract_id=contract_id,
        vulnerability=args.vulnerability,
        radius=args.radius or ctx.settings.pattern_radius,
        table=ctx.opcode_table,
    )
    payload = report.to_dict()
    if args.out:
        write_json(args.out, payload)
    emit_json(payload)
    ctx.write_resolved("detect", args)
    return 0


def _eval_checkpoint(args: argparse.Namespace, ctx: CommandContext, out_dir: Path) -> None:
    """评估一个已训练的 checkpoint：--split 的 test 列表，没有 --split 就用该漏洞的全部合约。"""

    config = resolve_train_config(args, ctx)
    manifest = load_manifest(args.manifest)
    entries = manifest.for_vulnerability(args.vulnerability)
    if args.split:
        data = read_json(args.split)
        if not isinstance(data, dict):
            raise DatasetError(f"split file {args.split} must contain a JSON object")
        wanted = set(data.get("test") or [])
        entries = [e for e in entries if e.contract_id in wanted]
    if not entries:
        raise DatasetError("no contracts to evaluate")
    samples = build_samples(entries, config, threads=ctx.threads, table=ctx.opcode_table)
    ordered = [samples[e.contract_id] for e in entries]
    scores, predictions = evaluate_model(load_checkpoint(args.model), ordered)
    labels = np.asarray([s.label for s in ordered], dtype=np.int64)
    points, area = roc_auc(scores, labels)
    metrics = evaluate(predictions, labels).with_roc(points, area)
    write_csv(out_dir / "metrics.csv", [{"run": 0, "seed": ctx.seed, **metrics.row()}], columns=["run", "seed", *METRIC_COLUMNS])
    write_csv(
        out_dir / "roc.csv",
        [{"run": 0, "seed": ctx.seed, "fpr": f, "tpr": t, "threshold": th} for f, t, th in points],
        columns=["run", "seed", "fpr", "tpr", "threshold"],
    )


def cmd_eval(args: argparse.Namespace, ctx: CommandContext) -> int:
    out_dir = Path(args.dest) if args.dest else ctx.out_dir / "eval" / args.vulnerability
    if args.model:
        _eval_checkpoint(args, ctx, out_dir)
    elif args.ablation:
        presets = sorted(ABLATION_PRESETS) if args.ablation == "all" else [p.strip() for p in args.ablation.split(",") if p.strip()]
        if not presets:
            raise UsageError("--ablation needs at least one preset")
        ablation_report(
            load_manifest(args.manifest),
            args.vulnerability,
            resolve_train_config(args, ctx),
            presets,
            seed=ctx.seed,
            runs=args.runs,
            threads=ctx.threads,
            out_dir=out_dir,
            table=ctx.opcode_table,
        )
    else:
        report = five_run_report(
            load_manifest(args.manifest),
            args.vulnerability,
            resolve_train_config(args, ctx),
            seed=ctx.seed,
            runs=args.runs,
            threads=ctx.threads,
            out_dir=out_dir,
            preset=args.preset or "full",
            table=ctx.opcode_table,
        )
        write_json(out_dir / "report.json", report.to_dict())
    ctx.write_resolved("eval", args)
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("detect", help="只用字节码做检测，输出 JSON 报告")
    p.add_argument("bytecode", help="字节码文件或十六进制串")
    p.add_argument("--model", required=True, help="student checkpoint")
    p.add_argument("--vulnerability", choices=VULNERABILITIES, help="只报告该漏洞的子模式")
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--contract-id")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_detect)

    p = subparsers.add_parser("eval", help="多次运行评估 / 消融 / 评估单个 checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vulnerability", required=True, choices=VULNERABILITIES)
    p.add_argument("--runs", type=int, default=DEFAULT_RUNS)
    p.add_argument("--ablation", help="逗号分隔的预设名，或 all")
    p.add_argument("--model", help="只评估这个 checkpoint（配合 --split 用 test 列表）")
    p.add_argument("--split")
    p.add_argument("--dest", help="输出目录（默认 <out-dir>/eval/<vulnerability>）")
    add_train_options(p)
    p.set_defaults(handler=cmd_eval)
