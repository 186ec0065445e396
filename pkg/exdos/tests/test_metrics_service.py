import numpy as np
import pytest

from exdos.services.metrics_service import evaluate, mean_row, roc_auc
from exdos.utils.errors import DatasetError


def test_evaluate_should_compute_percent_metrics_from_confusion():
    # tp=2 tn=1 fp=1 fn=1
    metrics = evaluate([1, 1, 1, 0, 0], [1, 1, 0, 1, 0])

    assert (metrics.tp, metrics.tn, metrics.fp, metrics.fn) == (2, 1, 1, 1)
    assert metrics.accuracy == pytest.approx(60.0)
    assert metrics.precision == pytest.approx(200.0 / 3.0)
    assert metrics.recall == pytest.approx(200.0 / 3.0)
    assert metrics.f1 == pytest.approx(200.0 / 3.0)
    assert metrics.total == 5


def test_evaluate_should_zero_undefined_precision_and_f1():
    metrics = evaluate([0, 0, 0], [1, 0, 0])

    assert metrics.precision == 0.0
    assert metrics.recall == 0.0
    assert metrics.f1 == 0.0
    assert metrics.accuracy == pytest.approx(200.0 / 3.0)


@pytest.mark.parametrize(
    ("predictions", "labels"),
    [([1, 0], [1]), ([], []), ([2, 0], [1, 0])],
    ids=["length", "empty", "non-binary"],
)
def test_evaluate_should_reject_bad_inputs(predictions, labels):
    with pytest.raises(DatasetError):
        evaluate(predictions, labels)


def test_roc_auc_should_match_hand_computed_area():
    points, area = roc_auc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0])

    assert area == pytest.approx(0.75)
    assert points[0][:2] == (0.0, 0.0)
    assert points[0][2] == pytest.approx(1.9)
    assert points[-1][:2] == (1.0, 1.0)


def test_roc_auc_should_be_undefined_for_single_class():
    assert roc_auc([0.2, 0.7], [1, 1]) == ([], None)


def test_mean_row_should_skip_missing_auc():
    rows = [evaluate([1, 0], [1, 0]).row(), evaluate([1, 1], [1, 0]).row()]

    out = mean_row(rows)

    assert out["accuracy"] == pytest.approx(75.0)
    assert out["auc"] is None


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_evaluate_should_agree_with_brute_force_recount(seed: int):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=1000)
    scores = rng.uniform(0.0, 1.0, size=1000)
    predictions = (scores >= 0.5).astype(int)

    metrics = evaluate(predictions, labels)

    tp = tn = fp = fn = 0
    for pred, label in zip(predictions, labels):
        if pred == 1 and label == 1:
            tp += 1
        elif pred == 1:
            fp += 1
        elif label == 1:
            fn += 1
        else:
            tn += 1
    precision = 100.0 * tp / (tp + fp)
    recall = 100.0 * tp / (tp + fn)
    assert (metrics.tp, metrics.tn, metrics.fp, metrics.fn) == (tp, tn, fp, fn)
    assert metrics.accuracy == pytest.approx(100.0 * (tp + tn) / 1000)
    assert metrics.precision == pytest.approx(precision)
    assert metrics.recall == pytest.approx(recall)
    assert metrics.f1 == pytest.approx(2.0 * precision * recall / (precision + recall))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_roc_auc_should_be_near_half_for_label_independent_scores(seed: int):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=2000)
    scores = rng.uniform(0.0, 1.0, size=2000)

    _, area = roc_auc(scores, labels)

    assert area == pytest.approx(0.5, abs=0.05)
