"""实验编排：单次运行、五次独立运行报告、消融报告。

单次运行 = 分层划分 -> teacher 预训练 -> 蒸馏 -> 微调 -> 测试集指标。
多次运行之间没有共享的可变状态，可以放到线程池里并发执行，结果按 seed 排序后落盘。
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from exdos.config.train_config import TrainConfig, apply_preset
from exdos.services.dataset_service import DatasetManifest, DatasetSplit, ManifestEntry, stratified_split
from exdos.services.distill_trainer_service import (
    PairedSample,
    TrainingHistory,
    build_paired_sample,
    distill,
    evaluate_model,
    finetune,
    init_student,
    pretrain_teacher,
)
from exdos.services.metrics_service import METRIC_COLUMNS, RunMetrics, evaluate, mean_row, roc_auc
from exdos.services.opcode_table import OpcodeTable
from exdos.utils.errors import DatasetError
from exdos.utils.json_io import write_csv


logger = logging.getLogger(__name__)

DEFAULT_RUNS = 5


@dataclass
class RunResult:
    vulnerability: str
    seed: int
    split: DatasetSplit
    metrics: RunMetrics
    val_metrics: RunMetrics | None = None
    histories: list[TrainingHistory] = field(default_factory=list)

    def row(self, run: int) -> dict[str, Any]:
        return {"run": run, "seed": self.seed, **self.metrics.row()}


@dataclass
class FiveRunReport:
    vulnerability: str
    runs: list[RunResult]
    mean: dict[str, Any]
    preset: str = "full"

    def rows(self) -> list[dict[str, Any]]:
        out = [r.row(i) for i, r in enumerate(self.runs)]
        out.append({"run": "mean", "seed": None, **self.mean})
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "vulnerability": self.vulnerability,
            "preset": self.preset,
            "runs": self.rows(),
            "splits": [r.split.to_dict() for r in self.runs],
            "histories": [[h.to_dict() for h in r.histories] for r in self.runs],
        }


def build_samples(
    entries: Sequence[ManifestEntry],
    config: TrainConfig,
    *,
    threads: int = 1,
    table: OpcodeTable | None = None,
) -> dict[str, PairedSample]:
    """逐合约建图（纯函数，可并行），返回 contract_id -> PairedSample。"""

    if threads <= 1 or len(entries) <= 1:
        return {e.contract_id: build_paired_sample(e, config, table=table) for e in entries}
    samples: dict[str, PairedSample] = {}
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = {executor.submit(build_paired_sample, e, config, table=table): e.contract_id for e in entries}
        for future in as_completed(futures):
            samples[futures[future]] = future.result()
    return {e.contract_id: samples[e.contract_id] for e in entries}


def _test_metrics(params: Any, samples: Sequence[PairedSample]) -> RunMetrics | None:
    if not samples:
        return None
    scores, predictions = evaluate_model(params, samples, modality="bytecode")
    labels = np.asarray([s.label for s in samples], dtype=np.int64)
    points, area = roc_auc(scores, labels)
    return evaluate(predictions, labels).with_roc(points, area)


def run_experiment(
    manifest: DatasetManifest,
    vulnerability: str,
    config: TrainConfig,
    *,
    seed: int,
    samples: dict[str, PairedSample] | None = None,
    table: OpcodeTable | None = None,
) -> RunResult:
    """一次完整运行；seed 同时决定划分和参数初始化。"""

    entries = manifest.for_vulnerability(vulnerability)
    cfg = config.with_overrides(seed=seed)
    pool = samples if samples is not None else build_samples(entries, cfg, table=table)
    split = stratified_split(entries, seed=seed)
    train = [pool[e.contract_id] for e in split.train]
    val = [pool[e.contract_id] for e in split.val]
    test = [pool[e.contract_id] for e in split.test]

    histories: list[TrainingHistory] = []
    student = init_student(cfg)
    if cfg.distillation_enabled:
        teacher, teacher_history = pretrain_teacher(train, cfg)
        student, distill_history = distill(teacher, student, train, cfg)
        histories += [teacher_history, distill_history]
    model, finetune_history = finetune(student, train, cfg)
    histories.append(finetune_history)

    metrics = _test_metrics(model, test)
    if metrics is None:
        raise DatasetError(f"test split for {vulnerability} is empty")
    result = RunResult(
        vulnerability=vulnerability,
        seed=seed,
        split=split,
        metrics=metrics,
        val_metrics=_test_metrics(model, val),
        histories=histories,
    )
    logger.info(
        "run finished | vulnerability=%s | seed=%s | f1=%.2f | acc=%.2f | auc=%s",
        vulnerability,
        seed,
        metrics.f1,
        metrics.accuracy,
        metrics.auc,
    )
    return result


def five_run_report(
    manifest: DatasetManifest,
    vulnerability: str,
    config: TrainConfig,
    *,
    seed: int,
    runs: int = DEFAULT_RUNS,
    threads: int = 1,
    out_dir: str | Path | None = None,
    preset: str = "full",
    table: OpcodeTable | None = None,
) -> FiveRunReport:
    """seed..seed+runs-1 各跑一次（不同随机划分），取均值；给了 out_dir 就写 metrics.csv / roc.csv。"""

    entries = manifest.for_vulnerability(vulnerability)
    samples = build_samples(entries, config, threads=threads, table=table)
    seeds = [seed + i for i in range(runs)]

    results: dict[int, RunResult] = {}
    if threads <= 1:
        for s in seeds:
            results[s] = run_experiment(manifest, vulnerability, config, seed=s, samples=samples)
    else:
        with ThreadPoolExecutor(max_workers=min(threads, runs)) as executor:
            futures = {
                executor.submit(run_experiment, manifest, vulnerability, config, seed=s, samples=samples): s
                for s in seeds
            }
            for future in as_completed(futures):
                results[futures[future]] = future.result()
    ordered = [results[s] for s in seeds]

    report = FiveRunReport(
        vulnerability=vulnerability,
        runs=ordered,
        mean=mean_row([r.metrics.row() for r in ordered]),
        preset=preset,
    )
    if out_dir is not None:
        write_report(report, out_dir)
    logger.info(
        "five-run report | vulnerability=%s | preset=%s | runs=%s | mean_f1=%s",
        vulnerability,
        preset,
        runs,
        report.mean["f1"],
    )
    return report


def write_report(report: FiveRunReport, out_dir: str | Path) -> tuple[Path, Path]:
    target = Path(out_dir)
    metrics_path = write_csv(target / "metrics.csv", report.rows(), columns=["run", "seed", *METRIC_COLUMNS])
    roc_rows = [
        {"run": i, "seed": r.seed, "fpr": fpr, "tpr": tpr, "threshold": threshold}
        for i, r in enumerate(report.runs)
        for fpr, tpr, threshold in r.metrics.roc_points
    ]
    roc_path = write_csv(target / "roc.csv", roc_rows, columns=["run", "seed", "fpr", "tpr", "threshold"])
    return metrics_path, roc_path


def ablation_report(
    manifest: DatasetManifest,
    vulnerability: str,
    config: TrainConfig,
    presets: Sequence[str],
    *,
    seed: int,
    runs: int = DEFAULT_RUNS,
    threads: int = 1,
    out_dir: str | Path | None = None,
    table: OpcodeTable | None = None,
) -> list[dict[str, Any]]:
    """每个预设跑一份多次运行报告，汇总各自的均值指标；给了 out_dir 就写 ablation.csv。"""

    rows: list[dict[str, Any]] = []
    for preset in presets:
        preset_config = apply_preset(config, preset)
        report = five_run_report(
            manifest,
            vulnerability,
            preset_config,
            seed=seed,
            runs=runs,
            threads=threads,
            preset=preset,
            table=table,
        )
        rows.append({"preset": preset, "vulnerability": vulnerability, "runs": runs, **report.mean})
    if out_dir is not None:
        write_csv(
            Path(out_dir) / "ablation.csv",
            rows,
            columns=["preset", "vulnerability", "runs", *METRIC_COLUMNS],
        )
    return rows
