"""
Declarative experiment configuration (JSON), validated up front.

Precedence: command-line flags > config file > defaults. ``seed`` has no
default; every random draw in an experiment derives from it.
"""

import json
from dataclasses import dataclass, field, fields, asdict, replace

from .channel import ChannelConfig
from .cnn import TrainConfig
from .dataset import DEFAULT_INTERF_GRID, DEFAULT_SNR_GRID
from .exceptions import ConfigValidationError, PrachError
from .receiver import DEFAULT_THRESHOLD_FACTOR
from .scenario import PrachConfig, ScenarioConfig
from .waveform import PrachNumerology

__all__ = ["DatasetConfig", "ReceiverConfig", "ExperimentConfig", "load_config", "merge_dicts",
           "apply_overrides"]


@dataclass(frozen=True)
class DatasetConfig:
    n_per_cell: int | None = None
    n_samples: int | None = 2400
    balance: float = 0.5
    train_frac: float = 2000 / 2400


@dataclass(frozen=True)
class ReceiverConfig:
    threshold_factor: float = DEFAULT_THRESHOLD_FACTOR
    decim: int = 1
    df_correction_hz: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    snr_grid: tuple = DEFAULT_SNR_GRID
    interf_grid: tuple = DEFAULT_INTERF_GRID
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    xfer_seqidx_interf: int = 3
    output_dir: str = "."

    def validate(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigValidationError("seed", f"must be a non-negative integer, got {self.seed!r}")
        for name, grid in (("snr_grid", self.snr_grid), ("interf_grid", self.interf_grid)):
            if not grid:
                raise ConfigValidationError(name, "must be non-empty")
        d = self.dataset
        if (d.n_per_cell is None) == (d.n_samples is None):
            raise ConfigValidationError("dataset", "set exactly one of n_per_cell and n_samples")
        if d.n_per_cell is not None and d.n_per_cell < 1:
            raise ConfigValidationError("dataset.n_per_cell", "must be >= 1")
        if d.n_samples is not None and d.n_samples < 2:
            raise ConfigValidationError("dataset.n_samples", "must be >= 2")
        if not 0 < d.balance < 1:
            raise ConfigValidationError("dataset.balance", "must be in (0, 1)")
        if not 0 < d.train_frac < 1:
            raise ConfigValidationError("dataset.train_frac", "must be in (0, 1)")
        if self.receiver.decim < 1:
            raise ConfigValidationError("receiver.decim", "must be >= 1")
        if not self.receiver.threshold_factor > 0:
            raise ConfigValidationError("receiver.threshold_factor", "must be > 0")
        checks = (("scenario", self.scenario.validate), ("train", self.train.validate),
                  ("xfer_seqidx_interf", lambda: replace(
                      self.scenario, interferer=replace(self.scenario.interferer,
                                                        seq_idx=self.xfer_seqidx_interf)).validate()))
        for name, check in checks:
            try:
                check()
            except PrachError as exc:
                raise ConfigValidationError(name, str(exc)) from exc
        return self

    def to_dict(self):
        return {
            "seed": self.seed,
            "scenario": self.scenario.to_dict(),
            "snr_grid": list(self.snr_grid),
            "interf_grid": list(self.interf_grid),
            "dataset": asdict(self.dataset),
            "train": asdict(self.train),
            "receiver": asdict(self.receiver),
            "xfer_seqidx_interf": self.xfer_seqidx_interf,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d):
        if "seed" not in d or d["seed"] is None:
            raise ConfigValidationError("seed", "required field is missing")
        _reject_unknown("", d, {f.name for f in fields(cls)})
        sc = d.get("scenario", {})
        _reject_unknown("scenario.", sc, {"numerology", "signal", "interferer", "channel", "feature_domain"})
        parts = {
            "scenario.numerology": (PrachNumerology, sc.get("numerology", {})),
            "scenario.signal": (PrachConfig, sc.get("signal", {})),
            "scenario.interferer": (PrachConfig, {"preamble_index": 3, **sc.get("interferer", {})}),
            "scenario.channel": (ChannelConfig, sc.get("channel", {})),
            "dataset": (DatasetConfig, d.get("dataset", {})),
            "train": (TrainConfig, d.get("train", {})),
            "receiver": (ReceiverConfig, d.get("receiver", {})),
        }
        built = {}
        for name, (typ, values) in parts.items():
            if not isinstance(values, dict):
                raise ConfigValidationError(name, "must be an object")
            _reject_unknown(name + ".", values, {f.name for f in fields(typ)})
            try:
                built[name] = typ(**values)
            except (TypeError, ValueError) as exc:
                raise ConfigValidationError(name, str(exc)) from exc
        scenario = ScenarioConfig(
            numerology=built["scenario.numerology"], signal=built["scenario.signal"],
            interferer=built["scenario.interferer"], channel=built["scenario.channel"],
            feature_domain=sc.get("feature_domain", "power"),
        )
        return cls(
            seed=d["seed"], scenario=scenario,
            snr_grid=tuple(float(x) for x in d.get("snr_grid", DEFAULT_SNR_GRID)),
            interf_grid=tuple(float(x) for x in d.get("interf_grid", DEFAULT_INTERF_GRID)),
            dataset=built["dataset"], train=built["train"], receiver=built["receiver"],
            xfer_seqidx_interf=int(d.get("xfer_seqidx_interf", 3)),
            output_dir=str(d.get("output_dir", ".")),
        )


def _reject_unknown(prefix, values, allowed):
    for key in values:
        if key not in allowed:
            raise ConfigValidationError(prefix + key, "unknown field")


def merge_dicts(base, update):
    """Recursive merge; values in ``update`` win, nested objects merge."""
    out = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_dicts(out[key], value)
        else:
            out[key] = value
    return out


def apply_overrides(data, overrides):
    """Set dotted keys (``"train.epochs"``) in a nested dict; returns a new dict."""
    data = merge_dicts({}, data)
    for dotted, value in (overrides or {}).items():
        node = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            child = node.get(p)
            node[p] = dict(child) if isinstance(child, dict) else {}
            node = node[p]
        node[leaf] = value
    return data


def read_config_file(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigValidationError("config", f"invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigValidationError("config", "top level must be an object")
    return data


def load_config(path=None, overrides=None, base=None):
    """
    Resolve an :class:`ExperimentConfig`.

    Layers, lowest precedence first: built-in defaults, ``base`` (a config
    echo such as the one embedded in a dataset), the JSON file at ``path``,
    then ``overrides`` keyed by dotted field paths. Every override is
    applied as given, so callers pass only the keys they mean to set.
    """
    data = dict(base or {})
    if path is not None:
        data = merge_dicts(data, read_config_file(path))
    data = apply_overrides(data, overrides)
    return ExperimentConfig.from_dict(data).validate()
