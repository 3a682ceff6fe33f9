import json
from dataclasses import replace

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prach_sentinel.dataset import generate_dataset
from prach_sentinel.exceptions import InvalidArgumentError
from prach_sentinel.metrics import (REPORT_SCHEMA, ConfusionMatrix, EvalReport, baseline_compare,
                                    baseline_label, derive, evaluate, f1_score)
from prach_sentinel.receiver import correlate, front_end
from prach_sentinel.scenario import ScenarioConfig, simulate_observation
from prach_sentinel.zc import zc_root


class Constant:
    def __init__(self, label):
        self.label = label

    def predict(self, x):
        return np.full(len(x), self.label)


@pytest.fixture(scope="module")
def small_ds():
    return generate_dataset(n_per_cell=2, snr_grid=(-6.0, -12.0), interf_grid=(-6.0, -21.0), master_seed=2)


@pytest.mark.parametrize("p,r,f1", [(0.756, 0.805, 0.780), (0.847, 0.925, 0.884)])
def test_reported_metric_triples_are_consistent(p, r, f1):
    assert abs(f1_score(p, r) - f1) <= 0.001


def test_perfect_classifier():
    m = derive(ConfusionMatrix(tp=5, fp=0, tn=5, fn=0))
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)


def test_derive_formulas():
    m = derive(ConfusionMatrix(tp=30, fp=10, tn=45, fn=15))
    assert m.accuracy == 0.75
    assert m.precision == 0.75
    assert m.recall == 30 / 45
    assert m.f1 == pytest.approx(2 * 0.75 * (30 / 45) / (0.75 + 30 / 45))


def test_zero_denominators_are_flagged():
    m = derive(ConfusionMatrix(tp=0, fp=0, tn=4, fn=0))
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    assert m.precision_undefined and m.recall_undefined and m.f1_undefined
    m = derive(ConfusionMatrix(tp=0, fp=3, tn=0, fn=2))
    assert not m.precision_undefined and m.f1_undefined


def test_derive_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        derive(ConfusionMatrix())
    with pytest.raises(InvalidArgumentError):
        derive(ConfusionMatrix(tp=-1, tn=3))


@given(tp=st.integers(1, 500), fp=st.integers(0, 500), tn=st.integers(0, 500), fn=st.integers(0, 500))
@settings(max_examples=100)
def test_f1_is_between_precision_and_recall(tp, fp, tn, fn):
    m = derive(ConfusionMatrix(tp, fp, tn, fn))
    assert min(m.precision, m.recall) - 1e-15 <= m.f1 <= max(m.precision, m.recall) + 1e-15
    assert derive(ConfusionMatrix(tp, fp, tn, fn)) == m


def test_confusion_from_labels():
    cm = ConfusionMatrix.from_labels([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert cm.to_dict() == {"tp": 2, "fp": 1, "tn": 1, "fn": 1}
    with pytest.raises(InvalidArgumentError):
        ConfusionMatrix.from_labels([1, 0], [1])


def test_always_interfered_predictor(small_ds):
    rep = evaluate(Constant(1), small_ds)
    assert rep.metrics.accuracy == 0.5 and rep.metrics.recall == 1.0


def test_cells_partition_and_determinism(small_ds):
    rng = np.random.default_rng(0)
    preds = rng.integers(0, 2, len(small_ds))

    class Fixed:
        def predict(self, x):
            return preds

    rep = evaluate(Fixed(), small_ds)
    total = ConfusionMatrix()
    for cm in rep.cells.values():
        total = total + cm
    assert total == rep.confusion
    assert set(rep.cells) == {"-6|-6", "-6|-21", "-12|-6", "-12|-21", "-6|none", "-12|none"}
    again = evaluate(Fixed(), small_ds)
    assert again.confusion == rep.confusion and again.cells == rep.cells


def test_report_serialization(small_ds):
    rep = evaluate(Constant(0), small_ds, train_time_s=1.5, config={"seed": 2})
    d = json.loads(rep.to_json())
    jsonschema.validate(d, REPORT_SCHEMA)
    cm = ConfusionMatrix(**d["confusion"])
    m = derive(cm)
    assert (d["accuracy"], d["precision"], d["recall"], d["f1"]) == (m.accuracy, m.precision, m.recall, m.f1)
    lines = rep.to_csv().strip().split("\n")
    assert lines[0].split(",")[:2] == ["snr_db", "interf_power_db"]
    assert len(lines) == 1 + len(rep.cells)
    assert d["train_time_s"] == 1.5 and d["config"] == {"seed": 2}


def test_evaluate_rejects_empty(small_ds):
    with pytest.raises(InvalidArgumentError):
        evaluate(Constant(0), small_ds.subset([]))


def test_baseline_noiseless_clean_and_strong_interferer():
    cfg = ScenarioConfig()
    # static single-path channel: multipath sidelobes and Doppler ghost peaks
    # would otherwise clear a threshold built on a noiseless median
    flat = replace(cfg, channel=replace(cfg.channel, tap_delays_ns=(0.0,), tap_powers_db=(0.0,),
                                        doppler_hz=0.0))
    root = zc_root(22)
    for seed in range(5):
        clean = correlate(front_end(simulate_observation(flat, 300.0, None, seed), cfg.numerology), root)
        assert baseline_label(clean, 13) == 0
        hit = correlate(front_end(simulate_observation(cfg, 30.0, 0.0, seed), cfg.numerology), root)
        assert baseline_label(hit, 13) == 1


def test_baseline_compare_report(small_ds):
    rep = baseline_compare(small_ds)
    assert rep.confusion.total == len(small_ds)
    d = rep.to_dict()
    jsonschema.validate(d, REPORT_SCHEMA)
    assert d["accuracy"] == derive(rep.confusion).accuracy
    assert d["config"]["detector"] == "correlation_baseline"
