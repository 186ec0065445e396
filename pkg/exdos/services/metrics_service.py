"""评估指标：混淆矩阵、Acc / P / R / F1（百分比）、ROC 与 AUC。"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from sklearn.metrics import auc as trapezoid_auc
from sklearn.metrics import confusion_matrix, roc_curve

from exdos.utils.errors import DatasetError


logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["accuracy", "precision", "recall", "f1", "auc", "tp", "tn", "fp", "fn"]


@dataclass(frozen=True)
class RunMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    tn: int
    fp: int
    fn: int
    # (fpr, tpr, threshold)
    roc_points: tuple[tuple[float, float, float], ...] = field(default=(), compare=False)
    auc: float | None = None

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def with_roc(self, points: Sequence[tuple[float, float, float]], area: float | None) -> "RunMetrics":
        return RunMetrics(
            accuracy=self.accuracy,
            precision=self.precision,
            recall=self.recall,
            f1=self.f1,
            tp=self.tp,
            tn=self.tn,
            fp=self.fp,
            fn=self.fn,
            roc_points=tuple(points),
            auc=area,
        )

    def row(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in METRIC_COLUMNS}

    def to_dict(self) -> dict[str, Any]:
        data = self.row()
        data["roc_points"] = [list(p) for p in self.roc_points]
        return data


def _as_binary(values: Sequence[int] | np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values).reshape(-1)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise DatasetError(f"{name} must be binary (0/1)")
    return arr.astype(np.int64)


def evaluate(predictions: Sequence[int] | np.ndarray, labels: Sequence[int] | np.ndarray) -> RunMetrics:
    """正类 = vulnerable（1）。P + R = 0 时 F1 记 0，TP + FP = 0 时 precision 记 0。"""

    y_pred = _as_binary(predictions, "predictions")
    y_true = _as_binary(labels, "labels")
    if y_pred.shape != y_true.shape:
        raise DatasetError(f"predictions ({y_pred.size}) and labels ({y_true.size}) differ in length")
    if y_true.size == 0:
        raise DatasetError("cannot evaluate an empty prediction set")

    tn, fp, fn, tp = (int(x) for x in confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel())
    total = tp + tn + fp + fn
    accuracy = 100.0 * (tp + tn) / total
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return RunMetrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1, tp=tp, tn=tn, fp=fp, fn=fn)


def roc_auc(
    scores: Sequence[float] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
) -> tuple[list[tuple[float, float, float]], float | None]:
    """按全部不同得分做阈值扫描，梯形法求 AUC；只有一个类别时返回 ([], None)。

    起始点 (0, 0) 的阈值记为 max(score) + 1。
    """

    y_score = np.asarray(scores, dtype=np.float64).reshape(-1)
    y_true = _as_binary(labels, "labels")
    if y_score.shape != y_true.shape:
        raise DatasetError(f"scores ({y_score.size}) and labels ({y_true.size}) differ in length")
    if len(np.unique(y_true)) < 2:
        logger.warning("roc undefined for a single class | samples=%s", y_true.size)
        return [], None

    fpr, tpr, thresholds = roc_curve(y_true, y_score, drop_intermediate=False)
    top = float(y_score.max()) + 1.0
    points = [
        (float(f), float(t), float(th) if np.isfinite(th) else top)
        for f, t, th in zip(fpr, tpr, thresholds)
    ]
    return points, float(trapezoid_auc(fpr, tpr))


def mean_row(rows: Sequence[dict[str, Any]]) -> dict[str, Any]:
    """逐列平均；某列全为空（例如 AUC 未定义）时保持为空。"""

    out: dict[str, Any] = {}
    for name in METRIC_COLUMNS:
        values = [r[name] for r in rows if r.get(name) is not None]
        out[name] = float(np.mean(values)) if values else None
    return out
