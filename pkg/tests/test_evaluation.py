# -*- coding: utf-8 -*-
import numpy as np
import pytest

from core.checkpoint import Checkpoint
from core.data import CircleShift, ShiftGroup, ShiftGroups, build_shift_groups, encode
from core.errors import CircleMismatchError, LengthMismatchError, SchemaError, ZeroTestingMetricError
from core.evaluation import (
    ConfusionCounts,
    MetricReport,
    build_metric_table,
    classify,
    decreasing_rates,
    evaluate,
    evaluate_groups,
    rates_or_none,
    report_from_dict,
    score_predictions,
)
from core.model import build_model


def _report(recall, f1):
    return MetricReport(recall, 0.0, f1, ConfusionCounts(0, 0, 0, 0))


@pytest.fixture
def benchmark_checkpoint(benchmark_domains, tiny_model_config):
    source, _ = benchmark_domains
    encoded = encode(source)
    model = build_model(tiny_model_config(21), source.schema, seed=0)
    return Checkpoint(model, dict(encoded.stats))


def test_metrics_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        labels = rng.integers(0, 2, size=n)
        probs = rng.uniform(size=n)
        counts, report = score_predictions(probs, labels, 0.5)
        tp = sum(1 for p, y in zip(probs, labels) if p >= 0.5 and y == 1)
        fp = sum(1 for p, y in zip(probs, labels) if p >= 0.5 and y == 0)
        fn = sum(1 for p, y in zip(probs, labels) if p < 0.5 and y == 1)
        assert (counts.tp, counts.fp, counts.fn, counts.total) == (tp, fp, fn, n)
        recall = tp / (tp + fn) if tp + fn else 0.0
        precision = tp / (tp + fp) if tp + fp else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        assert report.recall == pytest.approx(recall, abs=1e-12)
        assert report.precision == pytest.approx(precision, abs=1e-12)
        assert report.f1 == pytest.approx(f1, abs=1e-12)


def test_counts_and_scores_on_hand_example():
    counts = ConfusionCounts.from_predictions([1, 1, 0, 0, 1, 0], [1, 0, 1, 0, 1, 0])
    assert (counts.tp, counts.fp, counts.fn, counts.tn) == (2, 1, 1, 2)
    report = MetricReport.from_predictions([1, 1, 0, 0, 1, 0], [1, 0, 1, 0, 1, 0])
    assert (report.recall, report.precision, report.f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3), abs=1e-12)


def test_no_positive_predictions_score_zero_precision():
    report = MetricReport.from_predictions([0, 0, 0], [1, 0, 1])
    assert (report.recall, report.precision, report.f1) == (0.0, 0.0, 0.0)
    assert report.flags == []


def test_empty_predictions():
    report = MetricReport.from_predictions([], [])
    assert report.counts.total == 0
    assert report.flags == ["no-positives"]


def test_threshold_is_inclusive():
    assert classify([0.5, 0.4999, 0.7], 0.5).tolist() == [True, False, True]


def test_no_positives_is_flagged():
    counts, report = score_predictions([0.9, 0.1], [0, 0])
    assert counts.fp == 1
    assert report.recall == 0.0 and report.f1 == 0.0
    assert report.flags == ["no-positives"]
    assert report.to_dict()["class"] == "defaulting"


def test_prediction_label_length_mismatch():
    with pytest.raises(LengthMismatchError):
        ConfusionCounts.from_predictions([True, False], [1])


def test_decreasing_rate_reference_value():
    rates = decreasing_rates(_report(0.90, 0.90), _report(0.67, 0.67))
    assert rates["recall"] == pytest.approx(0.343284, abs=1e-6)
    assert rates["f1"] == pytest.approx(0.343284, abs=1e-6)


def test_decreasing_rate_with_zero_testing_metric():
    with pytest.raises(ZeroTestingMetricError):
        decreasing_rates(_report(0.9, 0.8), _report(0.0, 0.0))
    assert rates_or_none(_report(0.9, 0.8), _report(0.5, 0.0)) == {"recall": None, "f1": None}


def test_report_round_trips_through_dict():
    _, report = score_predictions([0.9, 0.2, 0.7, 0.1], [1, 1, 0, 0])
    again = report_from_dict(report.to_dict())
    assert (again.recall, again.precision, again.f1) == (report.recall, report.precision, report.f1)
    assert again.counts == report.counts


def test_evaluate_target(benchmark_checkpoint, benchmark_domains):
    _, target = benchmark_domains
    counts, report = evaluate(benchmark_checkpoint, target)
    assert counts.total == 100
    assert counts.tp + counts.fn == 11
    assert 0.0 <= report.f1 <= 1.0


def test_recall_never_rises_with_threshold(benchmark_checkpoint, benchmark_domains):
    _, target = benchmark_domains
    recalls = [evaluate(benchmark_checkpoint, target, t)[1].recall for t in np.linspace(0.0, 1.0, 21)]
    assert recalls[0] == 1.0
    assert all(later <= earlier for earlier, later in zip(recalls, recalls[1:]))


def test_evaluate_rejects_other_schema(benchmark_checkpoint, small_dataset):
    with pytest.raises(SchemaError):
        evaluate(benchmark_checkpoint, small_dataset)


def test_groups_are_reported_largest_first(benchmark_checkpoint, benchmark_domains):
    source, target = benchmark_domains
    groups = build_shift_groups(source, target, group_sizes=(2, 10, 5), max_workers=1)
    ascending = ShiftGroups(groups.circles, tuple(reversed(groups.groups)))
    reports = evaluate_groups(benchmark_checkpoint, target, ascending)
    assert [r.size for r in reports] == [10, 5, 2]
    _, whole = evaluate(benchmark_checkpoint, target)
    assert reports[0].counts == whole.counts


def test_group_with_unknown_circle(benchmark_checkpoint, benchmark_domains):
    _, target = benchmark_domains
    groups = ShiftGroups((CircleShift("nowhere", 1.0),), (ShiftGroup(1, ("nowhere",), 1.0),))
    with pytest.raises(CircleMismatchError):
        evaluate_groups(benchmark_checkpoint, target, groups)


def test_metric_table(benchmark_checkpoint, benchmark_domains):
    source, target = benchmark_domains
    groups = build_shift_groups(source, target, group_sizes=(10, 4), max_workers=1)
    table = build_metric_table(benchmark_checkpoint, source, target=target, groups=groups)
    doc = table.to_dict()
    assert doc["validation"] is None
    assert doc["target"]["counts"]["tp"] + doc["target"]["counts"]["fn"] == 11
    assert [g["size"] for g in doc["groups"]] == [10, 4]
    assert set(doc["target"]["rates"]) == {"recall", "f1"}


def test_metric_table_from_stored_reports(benchmark_checkpoint, benchmark_domains):
    source, target = benchmark_domains
    _, training = evaluate(benchmark_checkpoint, source)
    stored = report_from_dict(training.to_dict())
    table = build_metric_table(benchmark_checkpoint, stored, stored, target)
    assert table.training is stored and table.validation is stored
    _, direct = evaluate(benchmark_checkpoint, target)
    assert table.target.counts == direct.counts
    assert table.target.rates == rates_or_none(training, direct)
    assert table.groups == []


def test_metric_table_without_training_scores(benchmark_checkpoint, benchmark_domains):
    _, target = benchmark_domains
    doc = build_metric_table(benchmark_checkpoint, None, target=target).to_dict()
    assert doc["training"] is None and doc["validation"] is None
    assert "rates" not in doc["target"]
