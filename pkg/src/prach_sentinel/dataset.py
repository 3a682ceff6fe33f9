"""
Labeled feature datasets over the SNR x interference-power grid.

File layout (little-endian)::

    b"PRDS" | u32 format_version | u64 header_len | header JSON | float32 block

The JSON header holds the :class:`DatasetMeta` fields plus one record per
sample (label, SNR, interference power, sequence indices, seed, byte
offset). The tensor block is the concatenation of every sample's
``[24][35][4]`` features in record order.
"""

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (CorruptHeaderError, InvalidArgumentError, TruncatedTensorError,
                         VersionMismatchError)
from .scenario import FEATURE_SHAPE, ScenarioConfig, observation_to_features, simulate_observation

__all__ = [
    "DEFAULT_SNR_GRID",
    "DEFAULT_INTERF_GRID",
    "LabeledSample",
    "DatasetMeta",
    "PrachDataset",
    "splitmix64",
    "sample_seed",
    "make_sample",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "split",
    "worker_count",
]

DEFAULT_SNR_GRID = (-18.0, -15.0, -12.0, -9.0, -6.0)
DEFAULT_INTERF_GRID = (-30.0, -27.0, -21.0, -15.0, -12.0, -9.0, -6.0)

DATASET_MAGIC = b"PRDS"
FORMAT_VERSION = 1
_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    z = (int(x) + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sample_seed(master_seed, index):
    # the finalizer is a bijection, so seeds are unique per index
    return splitmix64((int(master_seed) + int(index) * _GOLDEN) & _MASK64)


def worker_count(n_jobs=None):
    """Explicit ``n_jobs``, else ``PRACH_SENTINEL_THREADS``, else 1."""
    if n_jobs is None:
        n_jobs = int(os.environ.get("PRACH_SENTINEL_THREADS", "1") or 1)
    return max(1, int(n_jobs))


@dataclass(frozen=True, eq=False)
class LabeledSample:
    features: np.ndarray
    label: int
    snr_db: float
    interf_power_db: float | None
    seq_idx_signal: int
    seq_idx_interf: int | None
    seed: int


@dataclass
class DatasetMeta:
    n_samples: int
    class_balance: float
    snr_grid: list
    interf_grid: list
    master_seed: int
    scenario: dict
    format_version: int = FORMAT_VERSION

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "class_balance": self.class_balance,
            "snr_grid": list(self.snr_grid),
            "interf_grid": list(self.interf_grid),
            "master_seed": self.master_seed,
            "scenario": self.scenario,
            "format_version": self.format_version,
        }


@dataclass(eq=False)
class PrachDataset:
    """Column store of samples; ``interf_db`` is NaN and ``seq_idx_interf`` -1 for clean rows."""

    features: np.ndarray
    labels: np.ndarray
    snr_db: np.ndarray
    interf_db: np.ndarray
    seq_idx_signal: np.ndarray
    seq_idx_interf: np.ndarray
    seeds: np.ndarray
    meta: DatasetMeta

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            interfered = bool(self.labels[i])
            return LabeledSample(
                features=self.features[i], label=int(self.labels[i]), snr_db=float(self.snr_db[i]),
                interf_power_db=float(self.interf_db[i]) if interfered else None,
                seq_idx_signal=int(self.seq_idx_signal[i]),
                seq_idx_interf=int(self.seq_idx_interf[i]) if interfered else None,
                seed=int(self.seeds[i]),
            )
        return self.subset(np.arange(len(self))[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        labels = self.labels[idx]
        meta = replace(self.meta, n_samples=int(idx.size),
                       class_balance=float(labels.mean()) if idx.size else 0.0)
        return PrachDataset(self.features[idx], labels, self.snr_db[idx], self.interf_db[idx],
                            self.seq_idx_signal[idx], self.seq_idx_interf[idx], self.seeds[idx], meta)

    def scenario_config(self):
        return ScenarioConfig.from_dict(self.meta.scenario)

    def validate(self):
        n = len(self.labels)
        cols = (self.features, self.snr_db, self.interf_db, self.seq_idx_signal,
                self.seq_idx_interf, self.seeds)
        if any(len(c) != n for c in cols) or self.meta.n_samples != n:
            raise CorruptHeaderError("record counts disagree with the metadata")
        if self.features.shape[1:] != FEATURE_SHAPE:
            raise CorruptHeaderError(f"feature shape {self.features.shape[1:]} != {FEATURE_SHAPE}")
        if not np.all(np.isfinite(self.features)):
            raise CorruptHeaderError("non-finite feature values")
        if np.any((self.labels == 1) != np.isfinite(self.interf_db)):
            raise CorruptHeaderError("label must be interfered exactly when an interference power is set")
        return self


def make_sample(label, snr_db, interf_db, cfg, seed):
    """
    Simulate one occasion and extract its feature tensor.

    ``label`` is 1 (interfered) or 0 (clean); ``interf_db`` must be given
    exactly when the label is interfered.
    """
    label = int(label)
    if label not in (0, 1):
        raise InvalidArgumentError(f"label must be 0 or 1, got {label}")
    if (interf_db is not None) != bool(label):
        raise InvalidArgumentError("interf_db must be set iff label is interfered")
    obs = simulate_observation(cfg, snr_db, interf_db, seed)
    feats = observation_to_features(obs, cfg)
    return LabeledSample(
        features=feats, label=label, snr_db=float(snr_db),
        interf_power_db=None if interf_db is None else float(interf_db),
        seq_idx_signal=cfg.signal.seq_idx,
        seq_idx_interf=cfg.interferer.seq_idx if label else None,
        seed=int(seed) & _MASK64,
    )


def _plan(snr_grid, interf_grid, n_per_cell, n_samples, balance):
    cells = [(s, i) for s in snr_grid for i in interf_grid]
    if n_samples is None:
        n_interf = n_per_cell * len(cells)
        interfered = [c for c in cells for _ in range(n_per_cell)]
        n_clean = int(round(n_interf * (1.0 - balance) / balance))
    else:
        n_interf = int(round(n_samples * balance))
        interfered = [cells[k % len(cells)] for k in range(n_interf)]
        n_clean = n_samples - n_interf
    clean = [(snr_grid[k % len(snr_grid)], None) for k in range(n_clean)]
    return [(1, s, i) for s, i in interfered] + [(0, s, None) for s, _ in clean]


def generate_dataset(n_per_cell=None, balance=0.5, snr_grid=DEFAULT_SNR_GRID,
                     interf_grid=DEFAULT_INTERF_GRID, master_seed=0, cfg=None,
                     n_samples=None, n_jobs=None):
    """
    Sweep the grid and return a shuffled :class:`PrachDataset`.

    Either ``n_per_cell`` interfered samples go in every (SNR, interference)
    cell with clean samples spread over the SNRs to reach ``balance``, or
    ``n_samples`` in total are dealt round-robin over the cells. Sample
    ``k`` of the canonical plan gets seed ``sample_seed(master_seed, k)``,
    and the final order is a permutation drawn from ``master_seed``, so the
    result does not depend on ``n_jobs``.
    """
    cfg = (cfg or ScenarioConfig()).validate()
    if not 0.0 < balance < 1.0:
        raise InvalidArgumentError(f"balance must be in (0, 1), got {balance}")
    if (n_per_cell is None) == (n_samples is None):
        raise InvalidArgumentError("give exactly one of n_per_cell and n_samples")
    if n_per_cell is not None and n_per_cell < 1:
        raise InvalidArgumentError(f"n_per_cell must be >= 1, got {n_per_cell}")
    if n_samples is not None and n_samples < 2:
        raise InvalidArgumentError(f"n_samples must be >= 2, got {n_samples}")
    snr_grid = [float(s) for s in snr_grid]
    interf_grid = [float(i) for i in interf_grid]
    plan = _plan(snr_grid, interf_grid, n_per_cell, n_samples, balance)
    seeds = [sample_seed(master_seed, k) for k in range(len(plan))]

    def work(k):
        label, snr, interf = plan[k]
        return make_sample(label, snr, interf, cfg, seeds[k]).features

    workers = worker_count(n_jobs)
    if workers == 1:
        feats = [work(k) for k in range(len(plan))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            feats = list(pool.map(work, range(len(plan))))

    perm = np.random.default_rng(int(master_seed) & _MASK64).permutation(len(plan))
    labels = np.array([p[0] for p in plan], dtype=np.int8)
    meta = DatasetMeta(
        n_samples=len(plan), class_balance=float(labels.mean()), snr_grid=snr_grid,
        interf_grid=interf_grid, master_seed=int(master_seed), scenario=cfg.to_dict(),
    )
    ds = PrachDataset(
        features=np.stack(feats).astype(np.float32),
        labels=labels,
        snr_db=np.array([p[1] for p in plan], dtype=np.float64),
        interf_db=np.array([np.nan if p[2] is None else p[2] for p in plan], dtype=np.float64),
        seq_idx_signal=np.full(len(plan), cfg.signal.seq_idx, dtype=np.int64),
        seq_idx_interf=np.array([cfg.interferer.seq_idx if p[0] else -1 for p in plan], dtype=np.int64),
        seeds=np.array(seeds, dtype=np.uint64),
        meta=meta,
    )
    return ds.subset(perm) if len(plan) else ds


def _records(ds):
    rec_bytes = int(np.prod(FEATURE_SHAPE)) * 4
    out = []
    for i in range(len(ds)):
        interfered = bool(ds.labels[i])
        out.append({
            "label": int(ds.labels[i]),
            "snr_db": float(ds.snr_db[i]),
            "interf_power_db": float(ds.interf_db[i]) if interfered else None,
            "seq_idx_signal": int(ds.seq_idx_signal[i]),
            "seq_idx_interf": int(ds.seq_idx_interf[i]) if interfered else None,
            "seed": int(ds.seeds[i]),
            "offset": i * rec_bytes,
        })
    return out


def save_dataset(ds, path):
    header = json.dumps({"meta": ds.meta.to_dict(), "records": _records(ds),
                         "feature_shape": list(FEATURE_SHAPE)},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IQ", ds.meta.format_version, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())


def load_dataset(path):
    """
    Read a dataset file written by :func:`save_dataset`.

    Raises
    ------
    CorruptHeaderError
        Bad magic, unreadable JSON or records that break the invariants.
    VersionMismatchError
        ``format_version`` other than the supported one.
    TruncatedTensorError
        Tensor block length differs from what the records promise.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != DATASET_MAGIC:
        raise CorruptHeaderError(f"{path}: missing PRDS magic")
    version, hlen = struct.unpack_from("<IQ", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format_version {version}, expected {FORMAT_VERSION}")
    if 16 + hlen > len(blob):
        raise TruncatedTensorError(f"{path}: header runs past end of file")
    try:
        header = json.loads(blob[16:16 + hlen].decode("utf-8"))
        meta = DatasetMeta(**header["meta"])
        records = header["records"]
        shape = tuple(header["feature_shape"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptHeaderError(f"{path}: unreadable header ({exc})") from exc
    if meta.format_version != version:
        raise VersionMismatchError(f"{path}: metadata version {meta.format_version} != {version}")
    if shape != FEATURE_SHAPE:
        raise CorruptHeaderError(f"{path}: feature shape {shape} != {FEATURE_SHAPE}")
    n = len(records)
    block = blob[16 + hlen:]
    expected = n * int(np.prod(shape)) * 4
    if len(block) != expected:
        raise TruncatedTensorError(f"{path}: tensor block is {len(block)} bytes, expected {expected}")
    try:
        ds = PrachDataset(
            features=np.frombuffer(block, dtype="<f4").astype(np.float32).reshape((n,) + shape),
            labels=np.array([r["label"] for r in records], dtype=np.int8),
            snr_db=np.array([r["snr_db"] for r in records], dtype=np.float64),
            interf_db=np.array([np.nan if r["interf_power_db"] is None else r["interf_power_db"]
                                for r in records], dtype=np.float64),
            seq_idx_signal=np.array([r["seq_idx_signal"] for r in records], dtype=np.int64),
            seq_idx_interf=np.array([-1 if r["seq_idx_interf"] is None else r["seq_idx_interf"]
                                     for r in records], dtype=np.int64),
            seeds=np.array([r["seed"] for r in records], dtype=np.uint64),
            meta=meta,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptHeaderError(f"{path}: malformed record ({exc})") from exc
    return ds.validate()


def split(ds, train_frac=0.8, seed=0):
    """
    Stratified, seeded train/validation split.

    The training set gets ``round(train_frac * n)`` samples; per-class
    quotas use largest remainders so each class keeps its share to within
    one sample.
    """
    if not 0.0 < train_frac < 1.0:
        raise InvalidArgumentError(f"train_frac must be in (0, 1), got {train_frac}")
    n = len(ds)
    n_train = int(round(train_frac * n))
    classes = np.unique(ds.labels)
    members = {c: np.flatnonzero(ds.labels == c) for c in classes}
    exact = {c: train_frac * len(members[c]) for c in classes}
    quota = {c: int(np.floor(exact[c])) for c in classes}
    spare = n_train - sum(quota.values())
    for c in sorted(classes, key=lambda c: (-(exact[c] - quota[c]), c))[:max(spare, 0)]:
        quota[c] += 1
    rng = np.random.default_rng(int(seed) & _MASK64)
    train_idx, val_idx = [], []
    for c in classes:
        idx = rng.permutation(members[c])
        train_idx.append(idx[:quota[c]])
        val_idx.append(idx[quota[c]:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    for name, part in (("train", train_idx), ("validation", val_idx)):
        if len(classes) < 2 or any(np.sum(ds.labels[part] == c) == 0 for c in classes):
            raise InvalidArgumentError(f"split leaves the {name} set without every class")
    return ds.subset(train_idx), ds.subset(val_idx)
