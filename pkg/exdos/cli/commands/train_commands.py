"""训练子命令：train-teacher / distill / finetune。

三个阶段之间只通过 checkpoint 文件传递，训练集来自 --split 文件的 train 列表，
没给 --split 时按 seed 现场做 7:1:2 分层划分。
"""
from __future__ import annotations

import argparse
import logging

from exdos.cli.context import CommandContext, add_train_options, resolve_train_config
from exdos.config.train_config import TrainConfig
from exdos.nn.checkpoint import load_checkpoint, save_checkpoint
from exdos.services.dataset_service import load_manifest, stratified_split
from exdos.services.distill_trainer_service import PairedSample, distill, finetune, init_student, pretrain_teacher
from exdos.services.experiment_service import build_samples
from exdos.services.pattern_engine_service import VULNERABILITIES
from exdos.utils.errors import DatasetError
from exdos.utils.json_io import read_json, write_json


logger = logging.getLogger(__name__)


def training_samples(args: argparse.Namespace, ctx: CommandContext, config: TrainConfig) -> list[PairedSample]:
    manifest = load_manifest(args.manifest)
    entries = manifest.for_vulnerability(args.vulnerability)
    if args.split:
        data = read_json(args.split)
        if not isinstance(data, dict):
            raise DatasetError(f"split file {args.split} must contain a JSON object")
        wanted = data.get("train") or []
        by_id = {e.contract_id: e for e in entries}
        missing = [cid for cid in wanted if cid not in by_id]
        if missing:
            raise DatasetError(f"split references contracts outside the manifest: {missing[:5]}")
        train = [by_id[cid] for cid in wanted]
    else:
        train = list(stratified_split(entries, seed=ctx.seed).train)
    samples = build_samples(train, config, threads=ctx.threads, table=ctx.opcode_table)
    return [samples[e.contract_id] for e in train]


def cmd_train_teacher(args: argparse.Namespace, ctx: CommandContext) -> int:
    config = resolve_train_config(args, ctx, epoch_fields=("teacher_epochs",))
    teacher, history = pretrain_teacher(training_samples(args, ctx, config), config)
    save_checkpoint(teacher, ctx.output_path(args.out, "teacher.json"), role="teacher")
    write_json(ctx.out_dir / "train-teacher.history.json", history.to_dict())
    ctx.write_resolved("train-teacher", args, train_config=config.to_dict())
    return 0


def cmd_distill(args: argparse.Namespace, ctx: CommandContext) -> int:
    config = resolve_train_config(args, ctx, epoch_fields=("distill_epochs",))
    teacher = load_checkpoint(args.teacher)
    student, history = distill(teacher, init_student(config), training_samples(args, ctx, config), config)
    save_checkpoint(student, ctx.output_path(args.out, "student_distilled.json"), role="student-distilled")
    write_json(ctx.out_dir / "distill.history.json", history.to_dict())
    ctx.write_resolved("distill", args, train_config=config.to_dict())
    return 0


def cmd_finetune(args: argparse.Namespace, ctx: CommandContext) -> int:
    config = resolve_train_config(args, ctx, epoch_fields=("finetune_epochs",))
    student = load_checkpoint(args.student) if args.student else init_student(config)
    model, history = finetune(student, training_samples(args, ctx, config), config)
    save_checkpoint(model, ctx.output_path(args.out, "student.json"), role="student")
    write_json(ctx.out_dir / "finetune.history.json", history.to_dict())
    ctx.write_resolved("finetune", args, train_config=config.to_dict())
    return 0


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--vulnerability", required=True, choices=VULNERABILITIES)
    parser.add_argument("--split", help="split.json（由 split 子命令生成）")
    parser.add_argument("--out")
    add_train_options(parser)


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("train-teacher", help="在源码 CSG 上预训练 teacher")
    _common(p)
    p.set_defaults(handler=cmd_train_teacher)

    p = subparsers.add_parser("distill", help="冻结 teacher，双重聚焦蒸馏 student")
    _common(p)
    p.add_argument("--teacher", required=True, help="teacher checkpoint")
    p.set_defaults(handler=cmd_distill)

    p = subparsers.add_parser("finetune", help="student 在字节码 CFG 上监督微调")
    _common(p)
    p.add_argument("--student", help="蒸馏后的 student checkpoint；不给则从随机初始化开始（w/o Distill）")
    p.set_defaults(handler=cmd_finetune)
