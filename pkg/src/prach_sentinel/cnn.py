"""
Residual convolutional classifier with hand-written backpropagation.

Layer stack (NHWC, batch first)::

    input [24, 35, 4]
    conv_1 5x5, 20 filters, valid     -> relu_1   [20, 31, 20]
    conv_2 3x3, 20 filters, pad 1     -> relu_2
    conv_3 3x3, 20 filters, pad 1     -> relu_3
    add(relu_1, relu_3)
    fc 2 units -> sigmoid -> argmax (ties go to class 1, "interfered")

Training minimizes binary cross-entropy of both sigmoid units against
one-hot targets, summed over units and averaged over the batch.
"""

import csv
import io
import json
import struct
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import (ContractViolationError, DivergedTrainingError,
                         InvalidArgumentError, ModelLoadError, ShapeError)

__all__ = [
    "PrachCNN",
    "TrainConfig",
    "TrainHistory",
    "Adam",
    "SGD",
    "bce_loss",
    "train",
    "predict",
    "save_model",
    "load_model",
    "CLEAN",
    "INTERFERED",
]

CLEAN, INTERFERED = 0, 1
MODEL_MAGIC = b"PRNN"
MODEL_VERSION = 1
PARAM_ORDER = ("conv_1.W", "conv_1.b", "conv_2.W", "conv_2.b",
               "conv_3.W", "conv_3.b", "fc.W", "fc.b")


def _conv_forward(x, w, b, pad):
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    k = w.shape[0]
    win = sliding_window_view(x, (k, k), axis=(1, 2))          # [B, Ho, Wo, C, k, k]
    return np.tensordot(win, w, axes=([3, 4, 5], [2, 0, 1])) + b, win


def _conv_backward(dout, win, w, pad, need_dx=True):
    k = w.shape[0]
    dw = np.tensordot(win, dout, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
    db = dout.sum(axis=(0, 1, 2))
    if not need_dx:
        return None, dw, db
    # full correlation with the flipped kernel
    dpad = np.pad(dout, ((0, 0), (k - 1, k - 1), (k - 1, k - 1), (0, 0)))
    win2 = sliding_window_view(dpad, (k, k), axis=(1, 2))      # [B, Hp, Wp, F, k, k]
    dxp = np.tensordot(win2, w[::-1, ::-1], axes=([3, 4, 5], [3, 0, 1]))
    if pad:
        dxp = dxp[:, pad:-pad, pad:-pad, :]
    return dxp, dw, db


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(logits, targets):
    """Mean over the batch of the summed per-unit BCE, computed from logits."""
    softplus = np.logaddexp(0.0, logits)
    return float(np.mean(np.sum(softplus - targets * logits, axis=1)))


def one_hot(y, n_classes=2, dtype=np.float64):
    y = np.asarray(y, dtype=int)
    t = np.zeros((y.size, n_classes), dtype=dtype)
    t[np.arange(y.size), y] = 1.0
    return t


class PrachCNN:
    """
    The three-convolution residual classifier.

    Parameters
    ----------
    input_shape : tuple of int
        ``(H, W, C)`` of one sample.
    filters : int
        Output channels of every convolution.
    kernel_sizes : tuple of int
        Sizes of conv_1 (valid) and conv_2/conv_3 (same padding).
    n_outputs : int
        Sigmoid units in the head.
    dtype : numpy dtype
        ``float32`` for training, ``float64`` for gradient checks.
    seed : int
        He-uniform initialization seed.
    """

    def __init__(self, input_shape=(24, 35, 4), filters=20, kernel_sizes=(5, 3, 3),
                 n_outputs=2, dtype=np.float32, seed=0):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.filters = int(filters)
        self.kernel_sizes = tuple(int(k) for k in kernel_sizes)
        self.n_outputs = int(n_outputs)
        self.dtype = np.dtype(dtype)
        k1, k2, k3 = self.kernel_sizes
        if k2 % 2 == 0 or k3 % 2 == 0:
            raise InvalidArgumentError("conv_2/conv_3 kernels must be odd to preserve shape")
        h, w, c = self.input_shape
        if h < k1 or w < k1:
            raise InvalidArgumentError(f"input {self.input_shape} smaller than the {k1}x{k1} kernel")
        self.pads = (0, k2 // 2, k3 // 2)
        self.add_shape = (h - k1 + 1, w - k1 + 1, self.filters)
        self.params = {}
        self._version = 0
        self.init_params(seed)

    @property
    def fc_inputs(self):
        return int(np.prod(self.add_shape))

    def param_shapes(self):
        c = self.input_shape[2]
        f = self.filters
        k1, k2, k3 = self.kernel_sizes
        return {
            "conv_1.W": (k1, k1, c, f), "conv_1.b": (f,),
            "conv_2.W": (k2, k2, f, f), "conv_2.b": (f,),
            "conv_3.W": (k3, k3, f, f), "conv_3.b": (f,),
            "fc.W": (self.fc_inputs, self.n_outputs), "fc.b": (self.n_outputs,),
        }

    def init_params(self, seed=0):
        rng = np.random.default_rng(seed)
        for name in PARAM_ORDER:
            shape = self.param_shapes()[name]
            if name.endswith(".b"):
                self.params[name] = np.zeros(shape, dtype=self.dtype)
            else:
                fan_in = int(np.prod(shape[:-1]))
                limit = np.sqrt(6.0 / fan_in)
                self.params[name] = rng.uniform(-limit, limit, size=shape).astype(self.dtype)
        self.touch()

    def touch(self):
        """Mark parameters as changed; caches from earlier forwards go stale."""
        self._version += 1

    def spec(self):
        """JSON-serializable layer list, echoed into saved models."""
        h, w, c = self.input_shape
        k1, k2, k3 = self.kernel_sizes
        f = self.filters
        return [
            {"name": "input", "type": "input", "shape": [h, w, c], "split_complex": True},
            {"name": "conv_1", "type": "conv2d", "kernel": k1, "filters": f, "stride": 1, "padding": 0},
            {"name": "relu_1", "type": "relu"},
            {"name": "conv_2", "type": "conv2d", "kernel": k2, "filters": f, "stride": 1, "padding": self.pads[1]},
            {"name": "relu_2", "type": "relu"},
            {"name": "conv_3", "type": "conv2d", "kernel": k3, "filters": f, "stride": 1, "padding": self.pads[2]},
            {"name": "relu_3", "type": "relu"},
            {"name": "add", "type": "add", "inputs": ["relu_1", "relu_3"]},
            {"name": "fc", "type": "fully_connected", "units": self.n_outputs},
            {"name": "sigmoid", "type": "sigmoid"},
            {"name": "classoutput", "type": "classification", "tie_break": INTERFERED},
        ]

    def _check_input(self, x):
        x = np.asarray(x)
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeError("input", f"expected (N, {', '.join(map(str, self.input_shape))}), got {x.shape}")
        return x.astype(self.dtype, copy=False), single

    def forward(self, x, keep_cache=True):
        """
        Run the stack on one sample ``[H, W, C]`` or a batch ``[N, H, W, C]``.

        Returns
        -------
        probs : ndarray
            Sigmoid outputs, ``[2]`` or ``[N, 2]``.
        cache : dict or None
            Activations needed by :meth:`backward`.
        """
        x, single = self._check_input(x)
        p = self.params
        z1, win1 = _conv_forward(x, p["conv_1.W"], p["conv_1.b"], self.pads[0])
        a1 = np.maximum(z1, 0)
        z2, win2 = _conv_forward(a1, p["conv_2.W"], p["conv_2.b"], self.pads[1])
        a2 = np.maximum(z2, 0)
        z3, win3 = _conv_forward(a2, p["conv_3.W"], p["conv_3.b"], self.pads[2])
        a3 = np.maximum(z3, 0)
        s = a1 + a3
        if s.shape[1:] != self.add_shape:
            raise ShapeError("add", f"expected {self.add_shape}, got {s.shape[1:]}")
        flat = s.reshape(s.shape[0], -1)
        logits = flat @ p["fc.W"] + p["fc.b"]
        probs = _sigmoid(logits)
        cache = None
        if keep_cache:
            cache = {"version": self._version, "single": single, "win1": win1, "z1": z1,
                     "win2": win2, "z2": z2, "win3": win3, "z3": z3,
                     "flat": flat, "logits": logits, "probs": probs}
        return (probs[0] if single else probs), cache

    def backward(self, cache, targets, need_input_grad=False):
        """
        Gradients of :func:`bce_loss` w.r.t. every parameter.

        ``targets`` are one-hot rows matching the batch of the cached
        forward. The returned dict also carries ``"input"`` when
        ``need_input_grad`` is set.
        """
        if cache is None or cache.get("version") != self._version:
            raise ContractViolationError("cache is stale or missing; run forward with the current parameters")
        targets = np.atleast_2d(np.asarray(targets, dtype=self.dtype))
        probs = cache["probs"]
        if targets.shape != probs.shape:
            raise ContractViolationError(f"targets {targets.shape} do not match cached batch {probs.shape}")
        p = self.params
        batch = probs.shape[0]
        dlogits = (probs - targets) / batch
        grads = {"fc.W": cache["flat"].T @ dlogits, "fc.b": dlogits.sum(axis=0)}
        ds = (dlogits @ p["fc.W"].T).reshape((batch,) + self.add_shape)

        dz3 = ds * (cache["z3"] > 0)
        da2, grads["conv_3.W"], grads["conv_3.b"] = _conv_backward(dz3, cache["win3"], p["conv_3.W"], self.pads[2])
        dz2 = da2 * (cache["z2"] > 0)
        da1, grads["conv_2.W"], grads["conv_2.b"] = _conv_backward(dz2, cache["win2"], p["conv_2.W"], self.pads[1])
        # skip branch: add passes ds straight to relu_1
        dz1 = (ds + da1) * (cache["z1"] > 0)
        dx, grads["conv_1.W"], grads["conv_1.b"] = _conv_backward(
            dz1, cache["win1"], p["conv_1.W"], self.pads[0], need_dx=need_input_grad)
        if need_input_grad:
            grads["input"] = dx[0] if cache["single"] else dx
        return grads

    def loss(self, x, y):
        x, _ = self._check_input(x)
        _, cache = self.forward(x)
        return bce_loss(cache["logits"], one_hot(y, self.n_outputs, self.dtype))

    def predict_proba(self, x, batch_size=256):
        x, single = self._check_input(x)
        out = [self.forward(x[i:i + batch_size], keep_cache=False)[0]
               for i in range(0, x.shape[0], batch_size)]
        probs = np.concatenate(out, axis=0) if out else np.empty((0, self.n_outputs), self.dtype)
        return probs[0] if single else probs

    def predict(self, x, batch_size=256):
        probs = self.predict_proba(x, batch_size)
        return decide(probs), probs

    def copy(self):
        other = PrachCNN.__new__(PrachCNN)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other


def decide(probs):
    """Argmax over the two sigmoid units; equal scores go to ``INTERFERED``."""
    probs = np.asarray(probs)
    if probs.ndim == 1:
        return int(probs[INTERFERED] >= probs[CLEAN])
    return (probs[:, INTERFERED] >= probs[:, CLEAN]).astype(int)


def predict(model, x):
    """``(class, probs)`` for one sample or arrays of both for a batch."""
    return model.predict(x)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for k, p in params.items():
            p -= (self.lr * grads[k]).astype(p.dtype)


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(p))
            v = self.v.setdefault(k, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0  # L2 penalty on conv/fc weights, biases exempt

    def validate(self):
        if self.epochs < 1:
            raise InvalidArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidArgumentError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not self.weight_decay >= 0:
            raise InvalidArgumentError(f"weight_decay must be >= 0, got {self.weight_decay}")
        return self

    def make_optimizer(self):
        if self.optimizer == "sgd":
            return SGD(self.learning_rate)
        return Adam(self.learning_rate, self.beta1, self.beta2, self.eps)


HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    train_time_s: float = 0.0

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for r in self.rows:
            writer.writerow([r["epoch"]] + [repr(float(r[k])) for k in HISTORY_FIELDS[1:]])
        return buf.getvalue()

    def to_dict(self):
        return {"rows": self.rows, "config": self.config, "train_time_s": self.train_time_s}

    def __eq__(self, other):
        return isinstance(other, TrainHistory) and self.rows == other.rows and self.config == other.config


def evaluate_loss_acc(model, x, y, batch_size=256):
    losses, correct = 0.0, 0
    for i in range(0, len(y), batch_size):
        xb, yb = x[i:i + batch_size], y[i:i + batch_size]
        probs, cache = model.forward(xb)
        losses += bce_loss(cache["logits"], one_hot(yb, model.n_outputs)) * len(yb)
        correct += int(np.sum(decide(probs) == yb))
    n = max(len(y), 1)
    return losses / n, correct / n


def train(model, train_set, val_set, cfg=TrainConfig(), clock=time.perf_counter, log=None):
    """
    Mini-batch training with a seeded shuffle order.

    ``train_set`` and ``val_set`` are ``(X, y)`` pairs or objects exposing
    ``features``/``labels``. Train loss/accuracy per epoch are running
    means over that epoch's batches; validation metrics are evaluated after
    the epoch. Parameters of ``model`` are updated in place.
    """
    cfg.validate()
    x_tr, y_tr = _unpack(train_set)
    x_va, y_va = _unpack(val_set)
    if len(y_tr) == 0 or len(y_va) == 0:
        raise InvalidArgumentError("training and validation sets must be non-empty")
    model._check_input(x_tr[:1])
    model._check_input(x_va[:1])
    rng = np.random.default_rng(cfg.seed)
    opt = cfg.make_optimizer()
    history = TrainHistory(config=asdict(cfg))
    t0 = clock()
    n = len(y_tr)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            xb, yb = x_tr[idx], y_tr[idx]
            probs, cache = model.forward(xb)
            batch_loss = bce_loss(cache["logits"], one_hot(yb, model.n_outputs))
            if not np.isfinite(batch_loss):
                raise DivergedTrainingError(epoch)
            loss_sum += batch_loss * len(idx)
            correct += int(np.sum(decide(probs) == yb))
            grads = model.backward(cache, one_hot(yb, model.n_outputs, model.dtype))
            if cfg.weight_decay:
                for k in grads:
                    if k.endswith(".W"):
                        grads[k] = grads[k] + cfg.weight_decay * model.params[k]
            opt.step(model.params, grads)
            model.touch()
        val_loss, val_acc = evaluate_loss_acc(model, x_va, y_va)
        if not np.isfinite(val_loss):
            raise DivergedTrainingError(epoch, "non-finite validation loss")
        row = {"epoch": epoch, "train_loss": loss_sum / n, "train_acc": correct / n,
               "val_loss": val_loss, "val_acc": val_acc}
        history.rows.append(row)
        if log is not None:
            log(row)
    history.train_time_s = clock() - t0
    return history


def _unpack(data):
    if hasattr(data, "features"):
        return np.asarray(data.features), np.asarray(data.labels, dtype=int)
    x, y = data
    return np.asarray(x), np.asarray(y, dtype=int)


def save_model(model, path):
    """
    Layout: ``b"PRNN"``, u32 version, u64 header length, UTF-8 JSON header
    (layer spec and hyper-parameters), then float32 little-endian parameter
    blocks in ``PARAM_ORDER``.
    """
    header = json.dumps({
        "layers": model.spec(),
        "input_shape": list(model.input_shape),
        "filters": model.filters,
        "kernel_sizes": list(model.kernel_sizes),
        "n_outputs": model.n_outputs,
        "params": [[k, list(model.params[k].shape)] for k in PARAM_ORDER],
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IQ", MODEL_VERSION, len(header)))
        fh.write(header)
        for k in PARAM_ORDER:
            fh.write(np.ascontiguousarray(model.params[k], dtype="<f4").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC or len(blob) < 16:
        raise ModelLoadError(f"{path}: not a model file")
    version, hlen = struct.unpack_from("<IQ", blob, 4)
    if version != MODEL_VERSION:
        raise ModelLoadError(f"{path}: unsupported model version {version}")
    try:
        header = json.loads(blob[16:16 + hlen].decode("utf-8"))
        model = PrachCNN(header["input_shape"], header["filters"], header["kernel_sizes"],
                         header["n_outputs"], dtype=np.float32)
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelLoadError(f"{path}: corrupt header ({exc})") from exc
    offset = 16 + hlen
    for k in PARAM_ORDER:
        shape = model.param_shapes()[k]
        nbytes = 4 * int(np.prod(shape))
        if offset + nbytes > len(blob):
            raise ModelLoadError(f"{path}: truncated weight block {k}")
        model.params[k] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4,
                                        offset=offset).astype(np.float32).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise ModelLoadError(f"{path}: {len(blob) - offset} trailing bytes")
    model.touch()
    return model
