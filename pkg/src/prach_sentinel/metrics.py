"""
Confusion-matrix bookkeeping, derived metrics and the correlation baseline.

The positive class is "interfered" (label 1).
"""

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InvalidArgumentError
from .receiver import DEFAULT_THRESHOLD_FACTOR, correlate, front_end, window_peaks, detect
from .scenario import simulate_observation
from .zc import zc_root

__all__ = [
    "ConfusionMatrix",
    "Metrics",
    "EvalReport",
    "derive",
    "evaluate",
    "baseline_label",
    "baseline_compare",
    "REPORT_SCHEMA",
]


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred):
        y_true = np.asarray(y_true, dtype=int)
        y_pred = np.asarray(y_pred, dtype=int)
        if y_true.shape != y_pred.shape:
            raise InvalidArgumentError(f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
        return cls(
            tp=int(np.sum((y_true == 1) & (y_pred == 1))),
            fp=int(np.sum((y_true == 0) & (y_pred == 1))),
            tn=int(np.sum((y_true == 0) & (y_pred == 0))),
            fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        )

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False
    recall_undefined: bool = False
    f1_undefined: bool = False

    def to_dict(self):
        return dict(self.__dict__)


def f1_score(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def derive(cm):
    """
    Accuracy, precision, recall and F1 from confusion counts.

    Zero denominators give 0.0 with the matching ``*_undefined`` flag set.
    """
    if min(cm.tp, cm.fp, cm.tn, cm.fn) < 0:
        raise InvalidArgumentError("confusion counts must be non-negative")
    if cm.total == 0:
        raise InvalidArgumentError("empty confusion matrix")
    p_undef = cm.tp + cm.fp == 0
    r_undef = cm.tp + cm.fn == 0
    precision = 0.0 if p_undef else cm.tp / (cm.tp + cm.fp)
    recall = 0.0 if r_undef else cm.tp / (cm.tp + cm.fn)
    return Metrics(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        precision_undefined=p_undef,
        recall_undefined=r_undef,
        f1_undefined=precision + recall == 0,
    )


def _cell_key(snr, interf):
    interf = "none" if interf is None or (isinstance(interf, float) and math.isnan(interf)) else f"{interf:g}"
    return f"{snr:g}|{interf}"


REPORT_SCHEMA = {
    "type": "object",
    "required": ["confusion", "accuracy", "precision", "recall", "f1",
                 "train_time_s", "inference_time_s", "cells", "config"],
    "properties": {
        "confusion": {
            "type": "object",
            "required": ["tp", "fp", "tn", "fn"],
            "properties": {k: {"type": "integer", "minimum": 0} for k in ("tp", "fp", "tn", "fn")},
        },
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "precision": {"type": "number", "minimum": 0, "maximum": 1},
        "recall": {"type": "number", "minimum": 0, "maximum": 1},
        "f1": {"type": "number", "minimum": 0, "maximum": 1},
        "train_time_s": {"type": ["number", "null"]},
        "inference_time_s": {"type": "number", "minimum": 0},
        "cells": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["snr_db", "interf_power_db", "tp", "fp", "tn", "fn"],
            },
        },
        "config": {"type": "object"},
    },
}


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    metrics: Metrics
    inference_time_s: float
    train_time_s: float | None = None
    cells: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, y_true, y_pred, snr_db, interf_db, inference_time_s,
                         train_time_s=None, config=None):
        cm = ConfusionMatrix.from_labels(y_true, y_pred)
        cells = {}
        y_true = np.asarray(y_true, dtype=int)
        y_pred = np.asarray(y_pred, dtype=int)
        for i in range(len(y_true)):
            interf = float(interf_db[i])
            key = _cell_key(float(snr_db[i]), None if math.isnan(interf) else interf)
            cell = cells.setdefault(key, ConfusionMatrix())
            cells[key] = cell + ConfusionMatrix.from_labels(y_true[i:i + 1], y_pred[i:i + 1])
        return cls(cm, derive(cm), float(inference_time_s), train_time_s,
                   dict(sorted(cells.items())), config or {})

    def to_dict(self):
        m = self.metrics
        cells = []
        for key, cm in self.cells.items():
            snr, interf = key.split("|")
            cells.append({"snr_db": float(snr),
                          "interf_power_db": None if interf == "none" else float(interf),
                          **cm.to_dict()})
        return {
            "confusion": self.confusion.to_dict(),
            "accuracy": m.accuracy, "precision": m.precision, "recall": m.recall, "f1": m.f1,
            "undefined": {"precision": m.precision_undefined, "recall": m.recall_undefined,
                          "f1": m.f1_undefined},
            "train_time_s": self.train_time_s,
            "inference_time_s": self.inference_time_s,
            "cells": cells,
            "config": self.config,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def to_csv(self):
        """One row per (SNR, interference power) cell with its metrics."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["snr_db", "interf_power_db", "tp", "fp", "tn", "fn",
                         "accuracy", "precision", "recall", "f1"])
        for row in self.to_dict()["cells"]:
            cm = ConfusionMatrix(row["tp"], row["fp"], row["tn"], row["fn"])
            m = derive(cm)
            writer.writerow([row["snr_db"], "none" if row["interf_power_db"] is None else row["interf_power_db"],
                             cm.tp, cm.fp, cm.tn, cm.fn, m.accuracy, m.precision, m.recall, m.f1])
        return buf.getvalue()


def evaluate(model, dataset, clock=time.perf_counter, train_time_s=None, config=None):
    """
    Score ``model`` on every sample of ``dataset``.

    ``model`` is anything with ``predict(X)`` returning class labels, or
    returning ``(labels, probs)`` like :class:`~prach_sentinel.cnn.PrachCNN`.
    """
    if len(dataset) == 0:
        raise InvalidArgumentError("cannot evaluate an empty dataset")
    t0 = clock()
    out = model.predict(dataset.features)
    y_pred = out[0] if isinstance(out, tuple) else out
    elapsed = clock() - t0
    return EvalReport.from_predictions(dataset.labels, y_pred, dataset.snr_db, dataset.interf_db,
                                       elapsed, train_time_s, config)


def baseline_label(pdp, n_cs, threshold_factor=DEFAULT_THRESHOLD_FACTOR):
    """
    Correlation-receiver interference verdict for one PDP.

    Interfered when the strongest window fails detection, or when any other
    window also clears the detection threshold.
    """
    result = detect(pdp, n_cs, threshold_factor)
    if not result.detected:
        return 1
    peaks, _ = window_peaks(pdp, n_cs)
    peaks = np.delete(peaks, result.rapid_v)
    return int(np.any(peaks > result.threshold))


def baseline_compare(dataset, cfg=None, threshold_factor=DEFAULT_THRESHOLD_FACTOR,
                     clock=time.perf_counter):
    """
    Re-simulate every sample from its stored seed and classify it with
    :func:`baseline_label`.
    """
    if len(dataset) == 0:
        raise InvalidArgumentError("cannot evaluate an empty dataset")
    if getattr(dataset, "seeds", None) is None or dataset.meta.scenario is None:
        raise InvalidArgumentError("dataset lacks seed/scenario provenance")
    cfg = cfg or dataset.scenario_config()
    num = cfg.numerology
    root = zc_root(cfg.signal.seq_idx, num.n_zc)
    preds = np.empty(len(dataset), dtype=int)
    t0 = clock()
    for i in range(len(dataset)):
        interfered = bool(dataset.labels[i])
        c = cfg
        if interfered and dataset.seq_idx_interf[i] != cfg.interferer.seq_idx:
            c = replace(cfg, interferer=replace(cfg.interferer, seq_idx=int(dataset.seq_idx_interf[i])))
        obs = simulate_observation(c, float(dataset.snr_db[i]),
                                   float(dataset.interf_db[i]) if interfered else None,
                                   int(dataset.seeds[i]))
        pdp = correlate(front_end(obs, num), root)
        preds[i] = baseline_label(pdp, cfg.signal.n_cs, threshold_factor)
    elapsed = clock() - t0
    return EvalReport.from_predictions(
        dataset.labels, preds, dataset.snr_db, dataset.interf_db, elapsed,
        config={"detector": "correlation_baseline", "threshold_factor": threshold_factor,
                "scenario": cfg.to_dict()})
