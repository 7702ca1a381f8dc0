"""Central finite-difference checks for layers and whole models."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .layers import Layer
from .tensor import NonFiniteError

EPS = 1e-5


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors.values())

    def table(self) -> str:
        width = max((len(k) for k in self.errors), default=4)
        lines = [f"{'tensor':<{width}}  {'entries':>7}  {'max rel err':>12}  status"]
        for name, err in self.errors.items():
            status = "ok" if err < self.tolerance else "FAIL"
            lines.append(f"{name:<{width}}  {self.checked[name]:>7}  {err:12.3e}  {status}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute disagreement, relative to the tensor's gradient scale."""
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    diff = np.max(np.abs(analytic - numeric), initial=0.0)
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def check_gradients(loss: Callable[[], float], analytic: dict[str, np.ndarray],
                    tensors: dict[str, np.ndarray], tolerance: float = 1e-4,
                    eps: float = EPS, max_entries: int | None = None,
                    seed: int = 0) -> GradCheckReport:
    """Compare ``analytic`` gradients with central differences of ``loss``.

    ``tensors`` are perturbed in place (and restored); ``loss`` must read them.
    With ``max_entries`` set, large tensors are spot-checked at random indices.
    """
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance)
    for name, arr in tensors.items():
        flat = arr.reshape(-1)
        if not np.shares_memory(flat, arr):
            raise ValueError(f"tensor {name!r} must be contiguous to be perturbed in place")
        if max_entries is None or flat.size <= max_entries:
            idx = np.arange(flat.size)
        else:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        a = analytic[name].reshape(-1)[idx]
        n = np.empty_like(a)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            fp = loss()
            flat[i] = orig - eps
            fm = loss()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteError(f"non-finite loss while perturbing {name}[{i}]")
            n[j] = (fp - fm) / (2 * eps)
        report.errors[name] = relative_error(a, n)
        report.checked[name] = int(idx.size)
    return report


def check_layer(layer: Layer, x: np.ndarray, tolerance: float = 1e-4, eps: float = EPS,
                max_entries: int | None = None, seed: int = 0) -> GradCheckReport:
    """Gradient check of ``sum(layer(x) * v)`` for a fixed random ``v``.

    Checks every parameter of the layer and the input ``x``; run in float64.
    """
    rng = np.random.default_rng(seed + 1)
    x = np.array(x, dtype=np.float64)
    y, cache = layer.forward(x)
    v = rng.standard_normal(y.shape)
    layer.zero_grads()
    dx = layer.backward(v, cache)

    analytic = {name: g.copy() for name, _, g in layer.named_parameters()}
    analytic["input"] = dx
    tensors = {name: p for name, p, _ in layer.named_parameters()}
    tensors["input"] = x

    def loss():
        return float(np.sum(layer(x) * v))

    return check_gradients(loss, analytic, tensors, tolerance, eps, max_entries, seed)


def check_model(model, window: np.ndarray, target: np.ndarray | None = None, horizon: int = 1,
                tolerance: float = 1e-3, eps: float = EPS, max_entries: int | None = 24,
                seed: int = 0) -> GradCheckReport:
    """Check a whole network end to end, including the input window.

    Forecasters use tanh output + mse (unrolled over ``horizon`` steps with
    shared weights); classifiers use softmax + cross-entropy on ``target`` labels.
    Zero biases are first moved off zero: behind a relu, an all-zero input
    leaves the pre-activation exactly on the kink, where central differences
    see half the slope.
    """
    from .training import cross_entropy_loss, mse_loss

    if model.dtype != np.float64:
        raise ValueError("gradient checks need a 64-bit model")
    rng = np.random.default_rng(seed + 2)
    for name, p in model.named_params().items():
        if name.endswith(".b") and not p.any():
            p += rng.uniform(-0.1, 0.1, p.shape)
    window = np.array(window, dtype=np.float64)
    B = window.shape[0]
    if model.classifier:
        labels = rng.integers(0, model.spec.head[-1], B) if target is None else np.asarray(target)

        def loss():
            return cross_entropy_loss(model.forward(window)[0], labels)[0]

        model.zero_grads()
        probs, cache = model.forward(window)
        dwin = model.backward_logits(cross_entropy_loss(probs, labels)[1], cache)
    else:
        shape = (B, horizon, *model.spec.frame_shape())
        tgt = np.tanh(rng.standard_normal(shape)) if target is None else np.asarray(target).reshape(shape)

        def loss():
            return mse_loss(model.parallel_forward(window, horizon)[0], tgt)[0]

        model.zero_grads()
        preds, caches = model.parallel_forward(window, horizon)
        dwin = model.parallel_backward(mse_loss(preds, tgt)[1], caches)

    analytic = {name: g.copy() for name, _, g in model.named_parameters()}
    analytic["input"] = dwin
    tensors = dict(model.named_params())
    tensors["input"] = window
    return check_gradients(loss, analytic, tensors, tolerance, eps, max_entries, seed)


# ------------------------------------------------------------------ per-kind cases

def _incriminator_case(primed: bool, tolerance, seed):
    from .model import TfcModel, tiny_spec

    model = TfcModel(tiny_spec(2, primed=primed), seed=seed, precision=64)
    rng = np.random.default_rng(seed + 3)
    spatial = model.spec.spatial
    x_t = rng.uniform(-1, 1, (2, *spatial, model.spec.in_features))
    y_t = rng.standard_normal((2, *spatial, model.spec.block.out_features))
    out, _ = model.incriminator_forward(x_t, y_t)
    v = rng.standard_normal(out.shape)
    model.zero_grads()
    _, cache = model.incriminator_forward(x_t, y_t)
    dx, dyt = model.incriminator_backward(v, cache)
    prefixes = ("inc.", "lc.")
    analytic = {n: g.copy() for n, _, g in model.named_parameters() if n.startswith(prefixes)}
    tensors = {n: p for n, p, _ in model.named_parameters() if n.startswith(prefixes)}
    analytic.update(x_t=dx, y_tilde=dyt)
    tensors.update(x_t=x_t, y_tilde=y_t)

    def loss():
        return float(np.sum(model.incriminator_forward(x_t, y_t)[0] * v))

    return check_gradients(loss, analytic, tensors, tolerance, seed=seed)


def _loss_case(kind: str, tolerance, seed):
    from .training import cross_entropy_loss, mse_loss
    from .layers import Activation

    rng = np.random.default_rng(seed + 4)
    x = rng.standard_normal((4, 6))
    if kind == "softmax-ce":
        act = Activation("softmax")
        labels = rng.integers(0, 6, 4)

        def loss():
            return cross_entropy_loss(act(x), labels)[0]

        grad = cross_entropy_loss(act(x), labels)[1]
    else:
        act = Activation("tanh")
        target = np.tanh(rng.standard_normal(x.shape))

        def loss():
            return mse_loss(act(x), target)[0]

        y, cache = act.forward(x)
        grad = act.backward(mse_loss(y, target)[1], cache)
    return check_gradients(loss, {"input": grad}, {"input": x}, tolerance, seed=seed)


def layer_case(kind: str, tolerance: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Gradient check of one small layer of the given kind in 64-bit precision."""
    from .layers import (Activation, Conv, ConvSpec, LocallyConnected, PatchExtractor,
                         PointwiseAffine, ResidualCell, ResidualCellSpec, Sequential)

    rng = np.random.default_rng(seed)
    f64 = np.float64
    if kind in ("conv2d", "conv3d"):
        D = 1 if kind == "conv2d" else 2
        layer = Conv(ConvSpec(2, 3, (3,) + (3,) * D, 2), rng, f64)
        x = rng.standard_normal((2, 5) + (6,) * D + (2,))
    elif kind == "affine":
        layer = PointwiseAffine(5, 4, rng, f64)
        x = rng.standard_normal((2, 3, 5))
    elif kind == "lc":
        layer = LocallyConnected((4, 4), 2, 3, 2, rng, f64)
        x = rng.standard_normal((2, 4, 4, 3))
    elif kind == "patches":
        layer = Sequential([PatchExtractor(3), PointwiseAffine(9 * 2, 3, rng, f64)])
        x = rng.standard_normal((2, 5, 5, 2))
    elif kind in ("cell", "cell-identity"):
        stride = 1 if kind == "cell-identity" else 2
        spec = ResidualCellSpec(4, 3, stride, 1, (2, 3, 3), (2, 3, 3))
        layer = ResidualCell(spec, 2, rng, f64)
        x = rng.standard_normal((2, 4, 5, 5, 2))
    elif kind in ("relu", "tanh", "softmax"):
        layer = Activation(kind)
        x = rng.standard_normal((3, 5))
    elif kind == "incriminator":
        return _incriminator_case(False, tolerance, seed)
    elif kind == "incriminator-primed":
        return _incriminator_case(True, tolerance, seed)
    elif kind in ("softmax-ce", "tanh-mse"):
        return _loss_case(kind, tolerance, seed)
    else:
        raise ValueError(f"unknown layer kind {kind!r}; choose from {', '.join(LAYER_KINDS)}")
    return check_layer(layer, x, tolerance, seed=seed)


LAYER_KINDS = ("conv2d", "conv3d", "affine", "lc", "patches", "incriminator", "incriminator-primed",
               "cell", "cell-identity", "relu", "tanh", "softmax", "softmax-ce", "tanh-mse")
