"""Temporally folded convolutional networks.

A residual block folds the time axis of a window of frames down to length
one; the incriminator then combines that summary with the last observed
frame, location by location, to predict the next frame.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .layers import (
    Activation,
    Layer,
    LocallyConnected,
    PatchExtractor,
    PointwiseAffine,
    ResidualCell,
    ResidualCellSpec,
    fold_length,
)
from .tensor import ShapeError, concat, ensure_finite, precision_dtype

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """An architecture description that cannot be instantiated."""


@dataclass(frozen=True)
class ResidualBlockSpec:
    cells: tuple[ResidualCellSpec, ...]
    fc_features: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "fc_features", tuple(int(n) for n in self.fc_features))
        if not self.cells:
            raise ConfigError("a residual block needs at least one cell")
        if not self.fc_features:
            raise ConfigError("a residual block needs at least one fully connected width")
        dims = {c.dimension for c in self.cells}
        if len(dims) != 1:
            raise ConfigError("all cells of a block must share one dimension")

    @property
    def dimension(self) -> int:
        return self.cells[0].dimension

    @property
    def out_features(self) -> int:
        return self.fc_features[-1]

    def time_lengths(self, window: int) -> list[int]:
        """Time length before the first cell and after each cell."""
        lengths = [window]
        for cell in self.cells:
            lengths.append(cell.out_time(lengths[-1]))
        return lengths

    def feature_counts(self, in_features: int) -> list[int]:
        counts = [in_features]
        for cell in self.cells:
            counts.append(cell.out_features(counts[-1]))
        return counts

    def validate(self, in_features: int, window: int, require_fold: bool = True) -> None:
        folded = self.time_lengths(window)[-1]
        if require_fold and folded != 1:
            raise ConfigError(f"cell strides fold a window of {window} to {folded}, not 1")
        widths = [in_features] + [c.n1 for c in self.cells]
        if any(a >= b for a, b in zip(widths, widths[1:])):
            log.warning("feature widths %s are not strictly increasing", widths)


@dataclass(frozen=True)
class IncriminatorSpec:
    r: int
    t: int
    N: int
    m: int
    primed: bool = False
    s: int = 1

    def __post_init__(self):
        if self.t < 1:
            raise ConfigError("incriminator neighbourhood t must be >= 1")
        if self.r < 0:
            raise ConfigError("incriminator neighbourhood r must be >= 0")
        if self.N < 1 or self.m < 1:
            raise ConfigError("incriminator widths must be >= 1")
        if self.primed and self.s < 1:
            raise ConfigError("locally connected kernel s must be >= 1")

    def first_inputs(self, dimension: int, n: int) -> int:
        return self.r ** dimension * self.m + self.t ** dimension * n


@dataclass(frozen=True)
class ModelSpec:
    name: str
    window: int
    spatial: tuple[int, ...]
    in_features: int
    block: ResidualBlockSpec
    incriminator: IncriminatorSpec
    head: tuple[int, ...] = ()
    cell_activation: str = "relu"
    fc_activation: str = "relu"
    incriminator_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "spatial", tuple(int(s) for s in self.spatial))
        object.__setattr__(self, "head", tuple(int(h) for h in self.head))
        if len(self.spatial) != self.block.dimension:
            raise ConfigError(f"spatial shape {self.spatial} does not match D={self.block.dimension}")
        if self.incriminator.m != self.in_features:
            raise ConfigError("incriminator output features must equal the frame features")
        if self.head and self.incriminator.r != 0:
            raise ConfigError("classifier models use the incriminator without the x_t branch (r = 0)")
        self.block.validate(self.in_features, self.window, require_fold=not self.head)

    @property
    def dimension(self) -> int:
        return self.block.dimension

    @property
    def classifier(self) -> bool:
        return bool(self.head)

    def frame_shape(self) -> tuple[int, ...]:
        return (*self.spatial, self.in_features)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        block = d["block"]
        cells = tuple(ResidualCellSpec(**c) for c in block["cells"])
        d["block"] = ResidualBlockSpec(cells, tuple(block["fc_features"]))
        d["incriminator"] = IncriminatorSpec(**d["incriminator"])
        d["spatial"] = tuple(d["spatial"])
        d["head"] = tuple(d.get("head", ()))
        return cls(**d)

    def digest(self) -> str:
        """SHA-256 of the architecture; the name is excluded."""
        d = self.to_dict()
        d.pop("name")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def scaled(self, factor: float) -> "ModelSpec":
        """Same architecture with every hidden width multiplied by ``factor``."""
        if factor == 1:
            return self
        block = ResidualBlockSpec(tuple(c.scaled(factor) for c in self.block.cells),
                                  tuple(max(1, round(n * factor)) for n in self.block.fc_features))
        inc = replace(self.incriminator, N=max(1, round(self.incriminator.N * factor)))
        head = tuple(max(1, round(h * factor)) for h in self.head[:-1]) + self.head[-1:]
        return replace(self, name=f"{self.name}@{factor:g}", block=block, incriminator=inc, head=head)


# ------------------------------------------------------------------ built-ins

def _cell(n1, n2, s1, k1, s2, k2):
    return ResidualCellSpec(n1, n2, s1, s2, tuple(k1), tuple(k2))


_D2_CELLS = (
    _cell(16, 32, 1, (4, 8, 8), 1, (4, 5, 5)),
    _cell(32, 64, 2, (2, 5, 5), 2, (4, 3, 3)),
    _cell(72, 96, 2, (3, 2, 2), 2, (2, 3, 3)),
)

_D2L_CELLS = (
    _cell(16, 32, 1, (4, 8, 8), 1, (4, 5, 5)),
    _cell(32, 64, 1, (2, 5, 5), 2, (4, 3, 3)),
    _cell(64, 64, 1, (2, 5, 5), 2, (4, 3, 3)),
    _cell(72, 72, 1, (3, 2, 2), 2, (2, 3, 3)),
)

_D1_CELLS = (
    _cell(16, 32, 1, (5, 16), 1, (6, 15)),
    _cell(32, 64, 1, (6, 8), 1, (3, 4)),
    _cell(64, 72, 1, (3, 5), 2, (4, 7)),
    _cell(72, 96, 1, (4, 8), 2, (4, 7)),
    _cell(96, 96, 1, (2, 8), 2, (3, 7)),
    _cell(96, 128, 1, (3, 2), 2, (2, 3)),
)


def _tfc_d2(primed=False, spatial=(64, 64), window=10, in_features=1, name="tfc-d2"):
    block = ResidualBlockSpec(_D2_CELLS, (96, 8))
    inc = IncriminatorSpec(r=7, t=1, N=1000, m=in_features, primed=primed, s=1)
    return ModelSpec(name, window, spatial, in_features, block, inc)


def _tfc_d2_l(primed=False, spatial=(64, 64), window=10, in_features=1, name="tfc-d2-l"):
    # the primed large variant ends in a (72; 96) cell and FC(96) instead of (72; 128) and FC(128)
    last = _cell(72, 96, 1, (3, 2, 2), 2, (2, 3, 3)) if primed else _cell(72, 128, 1, (3, 2, 2), 2, (2, 3, 3))
    width = 96 if primed else 128
    block = ResidualBlockSpec(_D2L_CELLS + (last,), (width, 8))
    inc = IncriminatorSpec(r=7, t=1, N=1000, m=in_features, primed=primed, s=1)
    return ModelSpec(name, window, spatial, in_features, block, inc)


def _tfc_d1(spatial=(88,), window=10, in_features=1, name="tfc-d1"):
    block = ResidualBlockSpec(_D1_CELLS, (128, 16))
    inc = IncriminatorSpec(r=12, t=1, N=1200, m=in_features)
    return ModelSpec(name, window, spatial, in_features, block, inc)


def _tfc_d1_cifar(spatial=(32,), window=32, in_features=3, name="tfc-d1-cifar"):
    block = ResidualBlockSpec(_D1_CELLS, (128, 16))
    inc = IncriminatorSpec(r=0, t=1, N=1200, m=in_features)
    return ModelSpec(name, window, spatial, in_features, block, inc, head=(96, 10))


BUILTINS = {
    "tfc-d2": lambda **kw: _tfc_d2(False, **{"name": "tfc-d2", **kw}),
    "tfc-d2p": lambda **kw: _tfc_d2(True, **{"name": "tfc-d2p", **kw}),
    "tfc-d2-l": lambda **kw: _tfc_d2_l(False, **{"name": "tfc-d2-l", **kw}),
    "tfc-d2-lp": lambda **kw: _tfc_d2_l(True, **{"name": "tfc-d2-lp", **kw}),
    "tfc-d1": lambda **kw: _tfc_d1(**{"name": "tfc-d1", **kw}),
    "tfc-d1-cifar": lambda **kw: _tfc_d1_cifar(**{"name": "tfc-d1-cifar", **kw}),
}

# Published weight counts for the TFC rows of the results tables.
PUBLISHED_WEIGHTS = {
    "tfc-d2": 447_000,
    "tfc-d2p": 742_000,
    "tfc-d2-l": 1_028_000,
    "tfc-d2-lp": 1_272_000,
    "tfc-d1": 1_270_000,
    "tfc-d1-cifar": 1_271_000,
}


def builtin_spec(name: str, **overrides) -> ModelSpec:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown built-in model {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**overrides)


def count_parameters(spec: ModelSpec) -> dict[str, int]:
    """Analytic per-component weight counts (biases included)."""
    D = spec.dimension
    counts: dict[str, int] = {}
    feats = spec.in_features
    for i, c in enumerate(spec.block.cells):
        counts[f"cell{i}.conv1"] = math.prod(c.k1) * feats * c.n1 + c.n1
        counts[f"cell{i}.conv2"] = math.prod(c.k2) * c.n1 * c.n2 + c.n2
        if c.has_shortcut_conv:
            counts[f"cell{i}.shortcut"] = feats * c.shortcut_features + c.shortcut_features
        feats = c.out_features(feats)
    for i, n in enumerate(spec.block.fc_features):
        counts[f"fc{i}"] = feats * n + n
        feats = n
    inc = spec.incriminator
    n = spec.block.out_features
    if inc.primed:
        counts["lc"] = math.prod(spec.spatial) * (inc.s ** D * n * n + n)
    counts["inc.fc1"] = inc.first_inputs(D, n) * inc.N + inc.N
    counts["inc.fc2"] = inc.N * inc.m + inc.m
    if spec.head:
        width = spec.block.time_lengths(spec.window)[-1] * math.prod(spec.spatial) * inc.m
        for i, h in enumerate(spec.head):
            counts[f"head{i}"] = width * h + h
            width = h
    return counts


# ------------------------------------------------------------------ network

class TfcModel(Layer):
    """Instantiated network: residual block, incriminator and optional classifier head.

    ``forward`` maps a window ``(batch, T, spatial..., m)`` to the next frame
    ``(batch, spatial..., m)`` (tanh-activated), or for classifiers to class
    probabilities ``(batch, classes)``.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0, precision: int = 32):
        super().__init__()
        self.spec = spec
        self.seed = seed
        self.precision = precision
        self.dtype = precision_dtype(precision)
        rng = np.random.default_rng(seed)
        D = spec.dimension

        feats = spec.in_features
        self.cells = []
        for i, cspec in enumerate(spec.block.cells):
            cell = ResidualCell(cspec, feats, rng, self.dtype, spec.cell_activation, spec.cell_activation)
            self.cells.append(cell)
            self.children[f"cell{i}"] = cell
            feats = cell.out_features
        self.block_fc = []
        for i, n in enumerate(spec.block.fc_features):
            fc = PointwiseAffine(feats, n, rng, self.dtype)
            self.block_fc.append(fc)
            self.children[f"fc{i}"] = fc
            feats = n
        self.fc_act = Activation(spec.fc_activation)

        inc = spec.incriminator
        n = spec.block.out_features
        self.lc = None
        if inc.primed:
            self.lc = LocallyConnected(spec.spatial, inc.s, n, n, rng, self.dtype)
            self.children["lc"] = self.lc
        self.patch_x = PatchExtractor(inc.r) if inc.r > 0 else None
        self.patch_y = PatchExtractor(inc.t)
        self.inc_fc1 = PointwiseAffine(inc.first_inputs(D, n), inc.N, rng, self.dtype)
        self.inc_act = Activation(spec.incriminator_activation)
        self.inc_fc2 = PointwiseAffine(inc.N, inc.m, rng, self.dtype)
        self.children["inc.fc1"] = self.inc_fc1
        self.children["inc.fc2"] = self.inc_fc2
        self.final_act = Activation("tanh")

        self.head = []
        if spec.head:
            width = spec.block.time_lengths(spec.window)[-1] * math.prod(spec.spatial) * inc.m
            for i, h in enumerate(spec.head):
                fc = PointwiseAffine(width, h, rng, self.dtype)
                self.head.append(fc)
                self.children[f"head{i}"] = fc
                width = h
            self.softmax = Activation("softmax")

    # ---------------------------------------------------------- bookkeeping

    @property
    def classifier(self) -> bool:
        return self.spec.classifier

    def named_params(self) -> dict[str, np.ndarray]:
        return {name: p for name, p, _ in self.named_parameters()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {name: g for name, _, g in self.named_parameters()}

    def load_params(self, tensors: dict[str, np.ndarray]) -> None:
        own = self.named_params()
        unknown = sorted(set(tensors) - set(own))
        missing = sorted(set(own) - set(tensors))
        if unknown or missing:
            raise KeyError(f"parameter mismatch: unknown {unknown}, missing {missing}")
        for name, value in tensors.items():
            if value.shape != own[name].shape:
                raise ShapeError(f"{name}: shape {value.shape} != {own[name].shape}")
            own[name][...] = value

    def parameter_table(self) -> dict[str, int]:
        """Instantiated parameter counts grouped like :func:`count_parameters`."""
        table: dict[str, int] = {}
        for name, p, _ in self.named_parameters():
            key = name.rsplit(".", 1)[0]
            table[key] = table.get(key, 0) + p.size
        return table

    def check_window(self, window: np.ndarray) -> None:
        spec = self.spec
        expected = (spec.window, *spec.spatial, spec.in_features)
        if window.ndim != len(expected) + 1 or tuple(window.shape[1:]) != expected:
            raise ShapeError(f"window shape {window.shape[1:]} != expected {expected}")

    # ---------------------------------------------------------- residual block

    def residual_block_forward(self, window: np.ndarray):
        self.check_window(window)
        h = np.asarray(window, dtype=self.dtype)
        caches = []
        for cell in self.cells:
            h, c = cell.forward(h)
            caches.append(c)
        folded_shape = h.shape
        if not self.classifier:
            h = h[:, 0]
        fc_caches = []
        for i, fc in enumerate(self.block_fc):
            h, c = fc.forward(h)
            a = None
            if i < len(self.block_fc) - 1:
                h, a = self.fc_act.forward(h)
            fc_caches.append((c, a))
        return h, (caches, folded_shape, fc_caches)

    def residual_block_backward(self, dy: np.ndarray, cache) -> np.ndarray:
        caches, folded_shape, fc_caches = cache
        for i in reversed(range(len(self.block_fc))):
            c, a = fc_caches[i]
            if a is not None:
                dy = self.fc_act.backward(dy, a)
            dy = self.block_fc[i].backward(dy, c)
        dy = dy.reshape(folded_shape)
        for cell, c in zip(reversed(self.cells), reversed(caches)):
            dy = cell.backward(dy, c)
        return dy

    # ---------------------------------------------------------- incriminator

    def incriminator_forward(self, x_t: np.ndarray | None, y_tilde: np.ndarray):
        """Pre-activation next frame from the last frame and the folded summary."""
        if x_t is not None and x_t.shape[:-1] != y_tilde.shape[:-1]:
            raise ShapeError(f"spatial mismatch between x_t {x_t.shape} and summary {y_tilde.shape}")
        lc_cache = None
        if self.lc is not None:
            y_tilde, lc_cache = self.lc.forward(y_tilde)
        py, cy = self.patch_y.forward(y_tilde)
        cx = None
        if self.patch_x is not None:
            px, cx = self.patch_x.forward(x_t)
            feats = concat(px, py, -1)
        else:
            feats = py
        h, c1 = self.inc_fc1.forward(feats)
        h, ca = self.inc_act.forward(h)
        out, c2 = self.inc_fc2.forward(h)
        return out, (lc_cache, cx, cy, c1, ca, c2)

    def incriminator_backward(self, dy: np.ndarray, cache):
        lc_cache, cx, cy, c1, ca, c2 = cache
        dfeat = self.inc_fc1.backward(self.inc_act.backward(self.inc_fc2.backward(dy, c2), ca), c1)
        dx_t = None
        if self.patch_x is not None:
            split = self.spec.incriminator.r ** self.spec.dimension * self.spec.in_features
            dx_t = self.patch_x.backward(dfeat[..., :split], cx)
            dfeat = dfeat[..., split:]
        dyt = self.patch_y.backward(dfeat, cy)
        if self.lc is not None:
            dyt = self.lc.backward(dyt, lc_cache)
        return dx_t, dyt

    # ---------------------------------------------------------- full network

    def forward(self, window: np.ndarray):
        window = np.asarray(window, dtype=self.dtype)
        y_tilde, bc = self.residual_block_forward(window)
        if self.classifier:
            B, T = y_tilde.shape[:2]
            flat_y = y_tilde.reshape(B * T, *y_tilde.shape[2:])
            z, ic = self.incriminator_forward(None, flat_y)
            z, fc = self.final_act.forward(z)
            h = z.reshape(B, -1)
            head_caches = []
            for i, fc_layer in enumerate(self.head):
                h, c = fc_layer.forward(h)
                a = None
                if i < len(self.head) - 1:
                    h, a = self.fc_act.forward(h)
                head_caches.append((c, a))
            p, sc = self.softmax.forward(h)
            return ensure_finite(p, "classifier"), (bc, ic, fc, z.shape, y_tilde.shape, head_caches, sc)
        z, ic = self.incriminator_forward(window[:, -1], y_tilde)
        y, fc = self.final_act.forward(z)
        return ensure_finite(y, "forecast"), (bc, ic, fc, window.shape)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        """Gradient w.r.t. the input window; parameter gradients are accumulated."""
        if self.classifier:
            bc, ic, fc, z_shape, yt_shape, head_caches, sc = cache
            dh = self.softmax.backward(dy, sc)
            return self._classifier_backward_from_logits(dh, cache)
        bc, ic, fc, wshape = cache
        dz = self.final_act.backward(dy, fc)
        dx_t, dyt = self.incriminator_backward(dz, ic)
        dwin = self.residual_block_backward(dyt, bc)
        if dx_t is not None:
            dwin[:, -1] += dx_t
        return dwin

    def _classifier_backward_from_logits(self, dh: np.ndarray, cache) -> np.ndarray:
        bc, ic, fc, z_shape, yt_shape, head_caches, sc = cache
        for i in reversed(range(len(self.head))):
            c, a = head_caches[i]
            if a is not None:
                dh = self.fc_act.backward(dh, a)
            dh = self.head[i].backward(dh, c)
        dz = self.final_act.backward(dh.reshape(z_shape), fc)
        _, dyt = self.incriminator_backward(dz, ic)
        return self.residual_block_backward(dyt.reshape(yt_shape), bc)

    def backward_logits(self, dlogits: np.ndarray, cache) -> np.ndarray:
        """Backward pass starting from pre-softmax logits (fused softmax + cross-entropy)."""
        if not self.classifier:
            raise ConfigError("model has no classifier head")
        return self._classifier_backward_from_logits(dlogits, cache)

    # ---------------------------------------------------------- forecasting

    def forecast_one(self, window: np.ndarray) -> np.ndarray:
        if self.classifier:
            raise ConfigError("classifier models do not forecast")
        return self.forward(window)[0]

    def forecast_serial(self, window: np.ndarray, k: int) -> np.ndarray:
        """Chain one-step forecasts: drop the oldest frame, append the prediction.

        Returns ``(batch, k, spatial..., m)``.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        w = np.asarray(window, dtype=self.dtype)
        outs = []
        for _ in range(k):
            y = self.forecast_one(w)
            outs.append(y)
            w = np.concatenate([w[:, 1:], y[:, None]], axis=1)
        return np.stack(outs, axis=1)

    def parallel_forward(self, window: np.ndarray, k: int):
        """Unrolled k-step forward with shared weights, kept for backward."""
        if k < 1:
            raise ValueError("k must be >= 1")
        w = np.asarray(window, dtype=self.dtype)
        outs, caches = [], []
        for _ in range(k):
            y, c = self.forward(w)
            outs.append(y)
            caches.append(c)
            w = np.concatenate([w[:, 1:], y[:, None]], axis=1)
        return np.stack(outs, axis=1), caches

    def parallel_backward(self, douts: np.ndarray, caches) -> np.ndarray:
        grad = None
        for j in reversed(range(len(caches))):
            dy = douts[:, j]
            if grad is not None:
                dy = dy + grad[:, -1]
            gj = self.backward(dy, caches[j])
            if grad is not None:
                gj[:, 1:] += grad[:, :-1]
            grad = gj
        return grad

    # ---------------------------------------------------------- classification

    def classify(self, images: np.ndarray) -> np.ndarray:
        if not self.classifier:
            raise ConfigError("model has no classifier head")
        return self.forward(images)[0]


class ParallelForecaster:
    """k-step unroll of a :class:`TfcModel` whose parameters are shared across steps."""

    def __init__(self, model: TfcModel, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.model = model
        self.k = k

    def forward(self, window):
        return self.model.parallel_forward(window, self.k)

    def backward(self, douts, caches):
        return self.model.parallel_backward(douts, caches)

    def __call__(self, window):
        return self.forward(window)[0]


def build_model(config: str | ModelSpec | dict, seed: int = 0, precision: int = 32,
                feature_scale: float = 1.0, **overrides) -> TfcModel:
    """Instantiate a built-in by name, a :class:`ModelSpec`, or its dict form."""
    if isinstance(config, str):
        spec = builtin_spec(config, **overrides)
    elif isinstance(config, dict):
        spec = ModelSpec.from_dict(config)
    else:
        spec = config
    spec = spec.scaled(feature_scale)
    model = TfcModel(spec, seed=seed, precision=precision)
    log.info("built %s with %d parameters", spec.name, model.num_parameters())
    return model


def build_parallel(model: TfcModel, k: int):
    """A k-step shared-weight trainable unroll; ``k == 1`` is the model itself."""
    if k == 1:
        return model
    return ParallelForecaster(model, k)


def fold_trace(spec: ModelSpec) -> list[int]:
    return spec.block.time_lengths(spec.window)


def conv_time_trace(spec: ModelSpec) -> list[int]:
    """Time length after every convolution of the block (two per cell)."""
    lengths = [spec.window]
    for c in spec.block.cells:
        lengths.append(fold_length(lengths[-1], (c.s1,)))
        lengths.append(fold_length(lengths[-1], (c.s2,)))
    return lengths


def tiny_spec(dimension: int = 2, primed: bool = False, window: int = 4,
              spatial: Sequence[int] | None = None, in_features: int = 1) -> ModelSpec:
    """A small TFC with the built-in structure, for checks and tests."""
    if spatial is None:
        spatial = (5, 5) if dimension == 2 else (7,)
    k = lambda t, s: (t,) + (s,) * dimension  # noqa: E731
    cells = (
        ResidualCellSpec(3, 4, 1, 1, k(2, 3), k(2, 3)),
        ResidualCellSpec(4, 5, 2, 2, k(2, 3), k(2, 2)),
    )
    block = ResidualBlockSpec(cells, (6, 3))
    inc = IncriminatorSpec(r=3, t=1, N=7, m=in_features, primed=primed, s=1)
    return ModelSpec(f"tiny-d{dimension}{'p' if primed else ''}", window, tuple(spatial),
                     in_features, block, inc)


def tiny_classifier_spec(window: int = 6, width: int = 5, in_features: int = 3,
                         classes: int = 4) -> ModelSpec:
    """A small classifier (image rows as time, folded to 2) for checks and tests."""
    cells = (
        ResidualCellSpec(4, 4, 1, 1, (2, 3), (2, 3)),
        ResidualCellSpec(5, 5, 1, 3, (2, 3), (2, 2)),
    )
    block = ResidualBlockSpec(cells, (6, 3))
    inc = IncriminatorSpec(r=0, t=1, N=7, m=in_features)
    return ModelSpec("tiny-classifier", window, (width,), in_features, block, inc, head=(5, classes))
