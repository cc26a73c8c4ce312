# -*- coding: utf-8 -*-
import numpy as np
import pytest
from sklearn.metrics import log_loss

from core.errors import ConfigError, EpochRangeError, LengthMismatchError, ShapeError
from core.losses import (
    LambdaMode,
    LossConfig,
    coral_loss,
    covariance,
    lambda_schedule,
    total_loss,
    weighted_bce,
)
from core.numcore import GradTape, ParameterSet, Tensor, grad_check


def _brute_force_covariance(x):
    x = np.asarray(x, dtype=np.float64)
    m = len(x)
    centred = x - x.mean(axis=0)
    out = np.zeros((x.shape[1], x.shape[1]))
    for row in centred:
        out += np.outer(row, row)
    return out / (m - 1)


def _brute_force_coral(a, b):
    d = a.shape[1]
    diff = _brute_force_covariance(a) - _brute_force_covariance(b)
    return float(np.sum(diff ** 2) / (4 * d * d))


def test_weighted_bce_reference_value():
    assert weighted_bce(np.array([0.5]), [1], 0.75).item() == pytest.approx(0.519860, abs=1e-6)


def test_weighted_bce_negative_class_uses_complement_weight():
    assert weighted_bce(np.array([0.5]), [0], 0.75).item() == pytest.approx(-0.25 * np.log(0.5), abs=1e-12)


def test_weighted_bce_clamps_certain_mistakes():
    loss = weighted_bce(np.array([0.0, 1.0]), [1, 0], 0.75, eps=1e-12).item()
    assert np.isfinite(loss)
    assert loss == pytest.approx(-(0.75 + 0.25) * np.log(1e-12) / 2, rel=1e-4)


def test_balanced_weight_halves_plain_cross_entropy():
    rng = np.random.default_rng(2)
    probs = rng.uniform(0.05, 0.95, size=40)
    labels = rng.integers(0, 2, size=40)
    plain = log_loss(labels, probs, labels=[0, 1])
    assert weighted_bce(probs, labels, 0.5).item() == pytest.approx(0.5 * plain, rel=1e-12)


def test_weighted_bce_length_mismatch():
    with pytest.raises(LengthMismatchError):
        weighted_bce(np.array([0.5, 0.5]), [1], 0.75)


def test_covariance_matches_brute_force():
    x = np.random.default_rng(0).normal(size=(9, 4))
    assert np.allclose(covariance(x).value, _brute_force_covariance(x), atol=1e-12)


def test_coral_hand_example():
    identity = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert coral_loss(identity, np.zeros((2, 2))).item() == pytest.approx(0.0625, abs=1e-12)


def test_coral_of_identical_inputs_is_exactly_zero():
    a = np.random.default_rng(1).normal(size=(10, 3))
    assert coral_loss(a, a).item() == 0.0


def test_coral_identities_over_random_pairs():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a = rng.normal(size=(12, 3))
        b = rng.normal(1.0, 2.0, size=(12, 3))
        forward = coral_loss(a, b).item()
        assert forward == pytest.approx(coral_loss(b, a).item(), abs=1e-12)
        assert forward == pytest.approx(coral_loss(a[rng.permutation(12)], b).item(), abs=1e-12)
        assert forward == pytest.approx(_brute_force_coral(a, b), abs=1e-12)
        assert forward >= 0.0


def test_coral_is_translation_invariant():
    a = np.random.default_rng(3).normal(size=(8, 2))
    b = np.random.default_rng(4).normal(size=(8, 2))
    assert coral_loss(a + 100.0, b).item() == pytest.approx(coral_loss(a, b).item(), abs=1e-9)


def test_coral_shape_errors():
    with pytest.raises(LengthMismatchError):
        coral_loss(np.ones((4, 2)), np.ones((5, 2)))
    with pytest.raises(ShapeError):
        coral_loss(np.ones((4, 2)), np.ones((4, 3)))
    with pytest.raises(ShapeError):
        coral_loss(np.ones((1, 2)), np.ones((1, 2)))


def test_coral_gradient_reaches_both_streams():
    a = Tensor(np.random.default_rng(5).normal(size=(6, 3)), requires_grad=True)
    b = Tensor(np.random.default_rng(6).normal(size=(6, 3)), requires_grad=True)
    with GradTape() as tape:
        loss = coral_loss(a, b)
    ga, gb = tape.gradient(loss, [a, b])
    assert np.abs(ga).sum() > 0 and np.abs(gb).sum() > 0


def test_coral_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    params = ParameterSet({"source": rng.normal(size=(4, 3)), "target": rng.normal(size=(4, 3))})
    report = grad_check(lambda p: coral_loss(p["source"], p["target"]), params, tol=1e-4)
    assert report.passed, report.to_dict()
    assert [c.name for c in report.checks] == ["source", "target"]


def test_lambda_schedule_endpoints():
    assert lambda_schedule(0, 250) == 0.004
    assert lambda_schedule(249, 250) == 1.0


def test_lambda_schedule_is_non_decreasing():
    values = [lambda_schedule(e, 40) for e in range(40)]
    assert values == sorted(values)


def test_lambda_schedule_fixed_mode():
    cfg = LossConfig.fixed(0.35)
    assert all(lambda_schedule(e, 10, cfg) == 0.35 for e in range(10))


@pytest.mark.parametrize("epoch,total", [(-1, 10), (10, 10), (0, 0)])
def test_lambda_schedule_range(epoch, total):
    with pytest.raises(EpochRangeError):
        lambda_schedule(epoch, total)


def test_total_loss_combines_terms():
    feats_s = np.array([[1.0, 0.0], [0.0, 1.0]])
    feats_t = np.zeros((2, 2))
    breakdown = total_loss(np.array([0.5, 0.5]), [1, 1], feats_s, feats_t, 4, LossConfig.fixed(0.5), 10)
    assert breakdown.weighted == pytest.approx(0.519860, abs=1e-6)
    assert breakdown.coral == pytest.approx(0.0625, abs=1e-12)
    assert breakdown.total == pytest.approx(0.519860 + 0.5 * 0.0625, abs=1e-6)
    assert breakdown.to_dict()["lambda"] == 0.5


def test_total_loss_without_adaptation_is_the_weighted_term():
    rng = np.random.default_rng(7)
    breakdown = total_loss(rng.uniform(0.1, 0.9, size=5), [0, 1, 0, 0, 1], rng.normal(size=(5, 3)),
                           rng.normal(size=(5, 3)), 0, LossConfig.fixed(0.0), 5)
    assert breakdown.total == breakdown.weighted


@pytest.mark.parametrize("kwargs", [
    {"minority_weight": 0.0},
    {"minority_weight": 1.0},
    {"lambda_mode": "fixed", "lambda_value": 1.5},
    {"lambda_mode": "sometimes"},
    {"clamp_eps": 0.0},
])
def test_loss_config_validation(kwargs):
    with pytest.raises(ConfigError):
        LossConfig(**kwargs)


def test_loss_config_from_dict_ignores_preset():
    cfg = LossConfig.from_dict({"preset": "full", "minority_weight": 0.6, "lambda_mode": "fixed",
                                "lambda_value": 0.2, "clamp_eps": 1e-9})
    assert cfg.lambda_mode is LambdaMode.FIXED
    assert cfg.to_dict()["minority_weight"] == 0.6
