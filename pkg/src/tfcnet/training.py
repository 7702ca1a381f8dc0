"""Losses, metrics, the Adam optimizer and the epoch loop."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator

import numpy as np

from .model import TfcModel
from .tensor import NonFiniteError, ShapeError, verifying

log = logging.getLogger(__name__)

KEY_THRESHOLD = -0.5
CSV_HEADER = ("epoch", "train_loss", "val_loss", "metric", "seconds")


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""


# ------------------------------------------------------------------ losses

def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over all elements of the squared difference, and its gradient."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def cross_entropy_loss(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean ``-log p[label]`` and the fused softmax + cross-entropy logit gradient."""
    labels = np.asarray(labels)
    B, C = probs.shape
    if labels.shape != (B,):
        raise ShapeError(f"expected {B} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= C:
        raise ValueError(f"labels must lie in [0, {C})")
    picked = probs[np.arange(B), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, np.finfo(probs.dtype).tiny))))
    grad = probs.copy()
    grad[np.arange(B), labels] -= 1
    return loss, grad / B


# ------------------------------------------------------------------ Adam

class Adam:
    """Bias-corrected Adam: ``theta -= lr * m_hat / (sqrt(v_hat) + eps)``."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if verifying() and not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for {name}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype, copy=False)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {"step": np.array([self.t], dtype=np.int64)}
        for name in self.m:
            state[f"m/{name}"] = self.m[name]
            state[f"v/{name}"] = self.v[name]
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.t = int(state["step"][0])
        self.m = {k[2:]: v.copy() for k, v in state.items() if k.startswith("m/")}
        self.v = {k[2:]: v.copy() for k, v in state.items() if k.startswith("v/")}


# ------------------------------------------------------------------ metrics

def threshold_binarize(pred: np.ndarray, threshold: float = KEY_THRESHOLD) -> np.ndarray:
    """A key counts as played iff its value is strictly above the threshold."""
    return np.asarray(pred) > threshold


def jsb_accuracy(T: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Per-sequence accuracy ``1 - sum((T-P)^2) / sum(T + P)`` over the key axis.

    Both inputs are boolean with keys on the last axis. A sequence where both
    vectors are silent scores 1.
    """
    T = np.asarray(T, dtype=bool)
    P = np.asarray(P, dtype=bool)
    if T.shape != P.shape:
        raise ShapeError(f"truth {T.shape} and prediction {P.shape} differ")
    Ti, Pi = T.astype(np.int64), P.astype(np.int64)
    num = np.sum((Ti - Pi) ** 2, axis=-1)
    den = np.sum(Ti + Pi, axis=-1)
    silent = den == 0
    if np.any(silent):
        log.info("%d silent sequence(s) scored as accuracy 1", int(silent.sum()))
    acc = np.where(silent, 1.0, 1.0 - num / np.maximum(den, 1))
    clipped = (acc < 0) | (acc > 1)
    if np.any(clipped):
        log.warning("clamping %d accuracy value(s) to [0, 1]", int(clipped.sum()))
    return np.clip(acc, 0.0, 1.0)


def piano_accuracy(pred: np.ndarray, target: np.ndarray) -> float:
    """Dataset accuracy for frames in [-1, 1]; keys on the second-to-last axis."""
    T = threshold_binarize(target).reshape(target.shape[0], -1)
    P = threshold_binarize(pred).reshape(pred.shape[0], -1)
    return float(np.mean(jsb_accuracy(T, P)))


def classification_accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


# ------------------------------------------------------------------ loop

@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 18
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    horizon: int = 1  # forecast steps unrolled (shared weights) during training


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    metric: float | None
    seconds: float


@dataclass
class TrainReport:
    seed: int
    config_digest: str
    epochs: list[EpochRecord] = field(default_factory=list)

    @property
    def train_losses(self) -> list[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def best_epoch(self) -> EpochRecord | None:
        scored = [e for e in self.epochs if e.val_loss is not None]
        return min(scored, key=lambda e: e.val_loss) if scored else None

    def to_csv(self, include_seconds: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER if include_seconds else CSV_HEADER[:-1])
        for e in self.epochs:
            row = [e.epoch, _fmt(e.train_loss), _fmt(e.val_loss), _fmt(e.metric)]
            if include_seconds:
                row.append(f"{e.seconds:.3f}")
            w.writerow(row)
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    def as_dict(self) -> dict:
        return asdict(self)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator | None) -> Iterator[np.ndarray]:
    """Index batches over ``n`` samples; shuffled when ``rng`` is given. The short last batch is kept."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _targets(model: TfcModel, Y: np.ndarray, horizon: int) -> np.ndarray:
    if model.classifier:
        return Y
    Y = np.asarray(Y)
    frame = model.spec.frame_shape()
    if Y.shape[1:] == frame:
        Y = Y[:, None]
    if Y.shape[2:] != frame or Y.shape[1] < horizon:
        raise ShapeError(f"targets {Y.shape[1:]} do not hold {horizon} frame(s) of {frame}")
    return Y[:, :horizon]


def train_step(model: TfcModel, xb: np.ndarray, yb: np.ndarray, opt: Adam, horizon: int = 1) -> float:
    """One optimizer step on a batch; returns the batch loss."""
    model.zero_grads()
    if model.classifier:
        probs, cache = model.forward(xb)
        loss, dlogits = cross_entropy_loss(probs, yb)
        model.backward_logits(dlogits.astype(model.dtype, copy=False), cache)
    elif horizon == 1:
        pred, cache = model.forward(xb)
        loss, grad = mse_loss(pred, yb[:, 0].astype(model.dtype, copy=False))
        model.backward(grad, cache)
    else:
        preds, caches = model.parallel_forward(xb, horizon)
        loss, grad = mse_loss(preds, yb.astype(model.dtype, copy=False))
        model.parallel_backward(grad, caches)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite training loss {loss}")
    opt.step(model.named_params(), model.named_grads())
    return loss


def predict(model: TfcModel, X: np.ndarray, steps: int = 1, batch_size: int = 32) -> np.ndarray:
    """Batched inference: class probabilities, or ``steps`` chained forecasts ``(n, steps, ...)``."""
    outs = []
    for idx in iterate_batches(len(X), batch_size, None):
        xb = np.asarray(X[idx], dtype=model.dtype)
        if model.classifier:
            outs.append(model.classify(xb))
        else:
            outs.append(model.forecast_serial(xb, steps))
    return np.concatenate(outs, axis=0)


def evaluate(model: TfcModel, X: np.ndarray, Y: np.ndarray, kind: str = "frames",
             steps: int | None = None, batch_size: int = 32) -> dict[str, float]:
    """Deterministic metrics.

    ``kind`` is ``frames`` (mse), ``piano`` (mse and key accuracy) or ``labels``.
    For forecasts, every available target frame is predicted by serial chaining;
    the k-step mse is the mean of the per-frame mse values.
    """
    if model.classifier or kind == "labels":
        probs = predict(model, X, batch_size=batch_size)
        loss, _ = cross_entropy_loss(probs, Y)
        return {"loss": loss, "accuracy": classification_accuracy(probs, Y)}
    Y = np.asarray(Y)
    if Y.shape[1:] == model.spec.frame_shape():
        Y = Y[:, None]
    k = Y.shape[1] if steps is None else steps
    Yk = _targets(model, Y, k)
    preds = predict(model, X, steps=k, batch_size=batch_size)
    return forecast_metrics(preds, Yk, kind)


def forecast_metrics(preds: np.ndarray, targets: np.ndarray, kind: str = "frames") -> dict[str, float]:
    targets = np.asarray(targets, dtype=preds.dtype)
    per_frame = [float(np.mean((preds[:, j] - targets[:, j]) ** 2)) for j in range(preds.shape[1])]
    out = {"mse": per_frame[0]}
    if len(per_frame) > 1:
        out[f"mse_{len(per_frame)}step"] = float(np.mean(per_frame))
    if kind == "piano":
        out["accuracy"] = piano_accuracy(preds[:, 0], targets[:, 0])
    return out


def persistence_baseline(X: np.ndarray, Y: np.ndarray, kind: str = "frames") -> dict[str, float]:
    """Metrics of the predictor that repeats the last observed frame."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if Y.ndim == X.ndim - 1:
        Y = Y[:, None]
    last = X[:, -1:]
    preds = np.repeat(last, Y.shape[1], axis=1).astype(np.float64)
    return forecast_metrics(preds, Y.astype(np.float64), kind)


def train(model: TfcModel, X: np.ndarray, Y: np.ndarray, config: TrainConfig,
          validation: tuple[np.ndarray, np.ndarray] | None = None,
          metric: Callable[[TfcModel], float] | None = None,
          on_best: Callable[[TfcModel, Adam, EpochRecord], None] | None = None,
          optimizer: Adam | None = None,
          stop_when: Callable[[TfcModel, EpochRecord], bool] | None = None) -> TrainReport:
    """Fit ``model`` with Adam on mse (forecasting) or cross-entropy (classification).

    ``on_best`` is called whenever the validation loss improves, e.g. to write a
    checkpoint. ``stop_when`` ends training early once it returns true.
    Each epoch reshuffles with a generator derived from
    ``(seed, epoch)``.
    """
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    if config.epochs < 0:
        raise ValueError("epochs must be >= 0")
    Yt = _targets(model, Y, config.horizon)
    opt = optimizer or Adam(config.lr, config.beta1, config.beta2, config.eps)
    report = TrainReport(config.seed, model.spec.digest())
    best = np.inf
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([config.seed, epoch])
        total, count = 0.0, 0
        for idx in iterate_batches(len(X), config.batch_size, rng):
            xb = np.asarray(X[idx], dtype=model.dtype)
            loss = train_step(model, xb, Yt[idx], opt, config.horizon)
            total += loss * len(idx)
            count += len(idx)
        train_loss = total / count
        val_loss = None
        if validation is not None:
            Xv, Yv = validation
            if model.classifier:
                val_loss = evaluate(model, Xv, Yv, "labels")["loss"]
            else:
                val_loss = evaluate(model, Xv, Yv, steps=1)["mse"]
            if not np.isfinite(val_loss):
                raise DivergenceError(f"non-finite validation loss {val_loss}")
        value = metric(model) if metric is not None else None
        rec = EpochRecord(epoch, train_loss, val_loss, value, time.perf_counter() - t0)
        report.epochs.append(rec)
        log.info("epoch %d train %.6f val %s metric %s (%.1fs)", epoch, train_loss, val_loss, value, rec.seconds)
        if on_best is not None and val_loss is not None and val_loss < best:
            best = val_loss
            on_best(model, opt, rec)
        if stop_when is not None and stop_when(model, rec):
            break
    return report
