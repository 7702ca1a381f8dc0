"""Differentiable layers with explicit forward/backward passes.

Layout convention: every activation is ``(batch, [time,] spatial..., features)``.
``forward`` returns ``(output, cache)``; ``backward(dy, cache)`` returns the
input gradient and adds parameter gradients into ``layer.grads``. Keeping the
cache outside the layer lets one layer be applied several times in a single
graph (shared weights) and back-propagated in any order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, concat, ensure_finite


# ---------------------------------------------------------------- geometry

def ceil_div(a: int, b: int) -> int:
    return -(-int(a) // int(b))


def same_padding(length: int, kernel: int, stride: int = 1) -> tuple[int, tuple[int, int]]:
    """Output length and (before, after) zero padding for "same" convolution.

    Stride-1 axes keep their length; a strided axis emits ``ceil(length / stride)``.
    """
    if length < 1:
        raise ShapeError("axis length must be positive")
    out = ceil_div(length, stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return out, (total // 2, total - total // 2)


def fold_length(length: int, strides: Sequence[int]) -> int:
    for s in strides:
        length = ceil_div(length, s)
    return length


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------- specs

@dataclass(frozen=True)
class ConvSpec:
    in_features: int
    out_features: int
    kernel: tuple[int, ...]  # time first, then spatial
    time_stride: int = 1

    def __post_init__(self):
        if any(k < 1 for k in self.kernel):
            raise ValueError(f"kernel sizes must be >= 1, got {self.kernel}")
        if self.time_stride < 1:
            raise ValueError("time stride must be >= 1")
        if self.in_features < 1 or self.out_features < 1:
            raise ValueError("feature counts must be >= 1")

    def output_shape(self, in_shape: Sequence[int]) -> tuple[int, ...]:
        """``in_shape`` is ``(time, spatial...)``; batch and features excluded."""
        return (ceil_div(in_shape[0], self.time_stride), *in_shape[1:])


@dataclass(frozen=True)
class ResidualCellSpec:
    n1: int
    n2: int
    s1: int
    s2: int
    k1: tuple[int, ...]
    k2: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "k1", tuple(int(k) for k in self.k1))
        object.__setattr__(self, "k2", tuple(int(k) for k in self.k2))
        if len(self.k1) != len(self.k2):
            raise ValueError("both kernels of a cell must have the same rank")
        if len(self.k1) not in (2, 3):
            raise ValueError("kernels must have D+1 entries with D in {1, 2}")
        if self.s1 < 1 or self.s2 < 1:
            raise ValueError("strides must be >= 1")

    @property
    def dimension(self) -> int:
        return len(self.k1) - 1

    @property
    def has_shortcut_conv(self) -> bool:
        return self.s1 > 1 or self.s2 > 1

    @property
    def shortcut_features(self) -> int:
        return self.n1 // 2

    @property
    def time_stride(self) -> int:
        return self.s1 * self.s2

    def out_features(self, in_features: int) -> int:
        return self.n2 + (self.shortcut_features if self.has_shortcut_conv else in_features)

    def out_time(self, length: int) -> int:
        return fold_length(length, (self.s1, self.s2))

    def scaled(self, factor: float) -> "ResidualCellSpec":
        return ResidualCellSpec(max(2, round(self.n1 * factor)), max(1, round(self.n2 * factor)),
                                self.s1, self.s2, self.k1, self.k2)


# ---------------------------------------------------------------- functional conv

# bytes of im2col scratch per chunk
_CHUNK_BYTES = 32 * 2 ** 20


def _conv_geometry(in_axes, kernel, stride):
    out_axes, pads = [], []
    for i, (n, k) in enumerate(zip(in_axes, kernel)):
        o, p = same_padding(n, k, stride if i == 0 else 1)
        out_axes.append(o)
        pads.append(p)
    return tuple(out_axes), pads


def _column_chunks(xp, kernel, stride):
    """Yield ``(index, cols)`` im2col blocks of a valid, time-strided correlation.

    ``cols`` rows are output positions of ``out[index]``; columns are ordered
    kernel-offset-major, feature-minor to match ``W.reshape(-1, n)``.
    """
    nd = len(kernel)
    v = sliding_window_view(xp, kernel, axis=tuple(range(1, nd + 1)))
    v = v[:, ::stride]
    # (B, out..., m, *kernel) -> (B, out..., *kernel, m)
    order = tuple(range(nd + 1)) + tuple(range(nd + 2, 2 * nd + 2)) + (nd + 1,)
    v = v.transpose(order)
    B, To = v.shape[:2]
    K = int(np.prod(kernel)) * xp.shape[-1]
    per_step = int(np.prod(v.shape[2:nd + 1])) * K * xp.itemsize
    if per_step * To <= _CHUNK_BYTES:
        nb = max(1, _CHUNK_BYTES // (per_step * To))
        for b0 in range(0, B, nb):
            idx = (slice(b0, b0 + nb),)
            yield idx, np.ascontiguousarray(v[idx]).reshape(-1, K)
    else:
        nt = max(1, _CHUNK_BYTES // per_step)
        for b in range(B):
            for t0 in range(0, To, nt):
                idx = (slice(b, b + 1), slice(t0, t0 + nt))
                yield idx, np.ascontiguousarray(v[idx]).reshape(-1, K)


def _correlate(xp, W, stride):
    kernel = W.shape[:-2]
    n = W.shape[-1]
    out_axes = ((xp.shape[1] - kernel[0]) // stride + 1,) + tuple(
        L - k + 1 for L, k in zip(xp.shape[2:-1], kernel[1:]))
    out = np.empty((xp.shape[0], *out_axes, n), dtype=np.result_type(xp, W))
    Wr = W.reshape(-1, n)
    for idx, cols in _column_chunks(xp, kernel, stride):
        block = out[idx]
        block[...] = (cols @ Wr).reshape(block.shape)
    return out


def conv_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, stride: int = 1):
    """Same-padded (D+1)-d convolution with a stride on the time axis only.

    ``x``: (batch, time, spatial..., m); ``W``: (*kernel, m, n); ``b``: (n,).
    Returns ``(y, xp)`` where ``xp`` is the padded input kept for backward.
    """
    kernel = W.shape[:-2]
    if x.ndim != len(kernel) + 2:
        raise ShapeError(f"input rank {x.ndim} does not fit a {len(kernel)}-d kernel")
    if x.shape[-1] != W.shape[-2]:
        raise ShapeError(f"input has {x.shape[-1]} features, kernel expects {W.shape[-2]}")
    if x.shape[1] < 1:
        raise ShapeError("time axis must not be empty")
    out_axes, pads = _conv_geometry(x.shape[1:-1], kernel, stride)
    xp = np.pad(x, [(0, 0)] + pads + [(0, 0)]) if any(sum(p) for p in pads) else x
    y = _correlate(xp, W, stride)
    y += b
    return ensure_finite(y, "conv_forward"), xp


def conv_backward(dy: np.ndarray, xp: np.ndarray, x_shape, W: np.ndarray, stride: int = 1):
    """Returns ``(dx, dW, db)`` for :func:`conv_forward`."""
    kernel = W.shape[:-2]
    out_axes, pads = _conv_geometry(x_shape[1:-1], kernel, stride)
    B, n = x_shape[0], W.shape[-1]
    if dy.shape != (B, *out_axes, n):
        raise ShapeError(f"gradient shape {dy.shape} does not match conv output {(B, *out_axes, n)}")
    db = dy.reshape(-1, n).sum(axis=0)
    dW = np.zeros((int(np.prod(kernel)) * W.shape[-2], n), dtype=W.dtype)
    for idx, cols in _column_chunks(xp, kernel, stride):
        dW += cols.T @ dy[idx].reshape(-1, n)
    dW = dW.reshape(W.shape)

    dxp = _scatter_columns(dy, xp.shape, W, stride)
    crop = (slice(None),) + tuple(slice(p[0], p[0] + L) for p, L in zip(pads, x_shape[1:-1])) + (slice(None),)
    region = dxp[crop]
    if region.shape == tuple(x_shape):
        return region, dW, db
    # time positions past the last strided window receive no gradient
    dx = np.zeros(x_shape, dtype=dxp.dtype)
    dx[:, :region.shape[1]] = region
    return dx, dW, db


def _scatter_columns(dy, xp_shape, W, stride):
    """col2im: input gradient of the padded input, one kernel offset at a time."""
    kernel = W.shape[:-2]
    n, m = W.shape[-1], W.shape[-2]
    B, To = dy.shape[:2]
    out_sp = dy.shape[2:-1]
    taps = int(np.prod(kernel))
    Wk = W.reshape(taps, m, n)
    dxp = np.zeros(xp_shape, dtype=np.result_type(dy, W))
    per_step = int(np.prod(out_sp)) * taps * m * dy.itemsize
    nt = max(1, _CHUNK_BYTES // per_step)
    for b in range(B):
        for t0 in range(0, To, nt):
            t1 = min(To, t0 + nt)
            # (taps, m, rows) -> (taps, rows, m) so every tap is one contiguous block
            dcols = np.matmul(Wk, dy[b, t0:t1].reshape(-1, n).T).transpose(0, 2, 1)
            dcols = np.ascontiguousarray(dcols).reshape(taps, t1 - t0, *out_sp, m)
            target = dxp[b]
            for i, off in enumerate(np.ndindex(*kernel)):
                sl = (slice(t0 * stride + off[0], (t1 - 1) * stride + off[0] + 1, stride),)
                sl += tuple(slice(o, o + L) for o, L in zip(off[1:], out_sp))
                target[sl] += dcols[i]
    return dxp


# ---------------------------------------------------------------- patches

def extract_patches(x: np.ndarray, k: int) -> np.ndarray:
    """Gather the k-neighbourhood (per spatial axis) of every location.

    ``x``: (batch, spatial..., m) -> (batch, spatial..., k**D * m), ordered
    offset-major / feature-minor with offsets enumerated row-major from the
    most negative. Zero padding outside the domain, "same" split.
    """
    if k < 1:
        raise ValueError("patch size must be >= 1")
    D = x.ndim - 2
    if k == 1:
        return x.copy()
    before = (k - 1) // 2
    xp = np.pad(x, [(0, 0)] + [(before, k - 1 - before)] * D + [(0, 0)])
    spatial = x.shape[1:-1]
    parts = []
    for off in itertools.product(range(k), repeat=D):
        parts.append(xp[(slice(None),) + tuple(slice(o, o + n) for o, n in zip(off, spatial))])
    return np.stack(parts, axis=-2).reshape(*x.shape[:-1], -1)


def extract_patches_backward(dp: np.ndarray, x_shape, k: int) -> np.ndarray:
    D = len(x_shape) - 2
    if k == 1:
        return dp.reshape(x_shape).copy()
    before = (k - 1) // 2
    spatial = x_shape[1:-1]
    m = x_shape[-1]
    padded = (x_shape[0],) + tuple(n + k - 1 for n in spatial) + (m,)
    dxp = np.zeros(padded, dtype=dp.dtype)
    dps = dp.reshape(*x_shape[:-1], k ** D, m)
    for i, off in enumerate(itertools.product(range(k), repeat=D)):
        dxp[(slice(None),) + tuple(slice(o, o + n) for o, n in zip(off, spatial))] += dps[..., i, :]
    crop = (slice(None),) + tuple(slice(before, before + n) for n in spatial) + (slice(None),)
    return dxp[crop]


# ---------------------------------------------------------------- layer classes

class Layer:
    """Base class: parameters and same-shaped gradient accumulators."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.children: dict[str, Layer] = {}

    def add_param(self, name: str, value: np.ndarray) -> None:
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)[0]

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray, np.ndarray]]:
        for name, p in self.params.items():
            yield prefix + name, p, self.grads[name]
        for cname, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def zero_grads(self) -> None:
        for _, _, g in self.named_parameters():
            g[...] = 0

    def num_parameters(self) -> int:
        return sum(p.size for _, p, _ in self.named_parameters())


class Conv(Layer):
    """(D+1)-dimensional convolution, "same" padding, stride on time only."""

    def __init__(self, spec: ConvSpec, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.spec = spec
        area = int(np.prod(spec.kernel))
        shape = (*spec.kernel, spec.in_features, spec.out_features)
        self.add_param("W", glorot_uniform(rng, shape, area * spec.in_features,
                                           area * spec.out_features, dtype))
        self.add_param("b", np.zeros(spec.out_features, dtype=dtype))

    def forward(self, x):
        y, xp = conv_forward(x, self.params["W"], self.params["b"], self.spec.time_stride)
        return y, (xp, x.shape)

    def backward(self, dy, cache):
        xp, x_shape = cache
        dx, dW, db = conv_backward(dy, xp, x_shape, self.params["W"], self.spec.time_stride)
        self.grads["W"] += dW
        self.grads["b"] += db
        return dx


class PointwiseAffine(Layer):
    """Affine map on the feature axis, identical at every other index."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.add_param("W", glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype))
        self.add_param("b", np.zeros(n_out, dtype=dtype))

    def forward(self, x):
        W = self.params["W"]
        if x.shape[-1] != W.shape[0]:
            raise ShapeError(f"input has {x.shape[-1]} features, affine expects {W.shape[0]}")
        x2 = x.reshape(-1, W.shape[0])
        y = x2 @ W + self.params["b"]
        return ensure_finite(y.reshape(*x.shape[:-1], W.shape[1]), "pointwise_affine"), x2

    def backward(self, dy, cache):
        x2 = cache
        W = self.params["W"]
        dy2 = dy.reshape(-1, W.shape[1])
        self.grads["W"] += x2.T @ dy2
        self.grads["b"] += dy2.sum(axis=0)
        return (dy2 @ W.T).reshape(*dy.shape[:-1], W.shape[0])


class PatchExtractor(Layer):
    def __init__(self, k: int):
        super().__init__()
        if k < 1:
            raise ValueError("patch size must be >= 1")
        self.k = k

    def forward(self, x):
        return extract_patches(x, self.k), x.shape

    def backward(self, dy, cache):
        return extract_patches_backward(dy, cache, self.k)


class LocallyConnected(Layer):
    """Like a same-padded convolution, but with an independent matrix per location."""

    def __init__(self, spatial: Sequence[int], kernel: int, n_in: int, n_out: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.spatial = tuple(int(s) for s in spatial)
        self.kernel = kernel
        locations = int(np.prod(self.spatial))
        fan_in = kernel ** len(self.spatial) * n_in
        self.add_param("W", glorot_uniform(rng, (locations, fan_in, n_out), fan_in, n_out, dtype))
        self.add_param("b", np.zeros((locations, n_out), dtype=dtype))

    def forward(self, x):
        W = self.params["W"]
        if tuple(x.shape[1:-1]) != self.spatial:
            raise ShapeError(f"spatial shape {x.shape[1:-1]} != {self.spatial} the layer was built for")
        p = extract_patches(x, self.kernel)
        if p.shape[-1] != W.shape[1]:
            raise ShapeError("feature count does not match locally connected weights")
        pr = p.reshape(x.shape[0], W.shape[0], W.shape[1])
        y = np.einsum("blk,lko->blo", pr, W, optimize=True) + self.params["b"]
        return ensure_finite(y.reshape(*x.shape[:-1], W.shape[2]), "locally_connected"), (pr, x.shape)

    def backward(self, dy, cache):
        pr, x_shape = cache
        W = self.params["W"]
        dyr = dy.reshape(x_shape[0], W.shape[0], W.shape[2])
        self.grads["W"] += np.einsum("blk,blo->lko", pr, dyr, optimize=True)
        self.grads["b"] += dyr.sum(axis=0)
        dp = np.einsum("blo,lko->blk", dyr, W, optimize=True)
        return extract_patches_backward(dp.reshape(*x_shape[:-1], -1), x_shape, self.kernel)


ACTIVATIONS = ("relu", "tanh", "softmax", "identity")


class Activation(Layer):
    def __init__(self, kind: str):
        super().__init__()
        if kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
        self.kind = kind

    def forward(self, x):
        if self.kind == "relu":
            y = np.maximum(x, 0)
        elif self.kind == "tanh":
            y = np.tanh(x)
        elif self.kind == "softmax":
            z = np.exp(x - x.max(axis=-1, keepdims=True))
            y = z / z.sum(axis=-1, keepdims=True)
        else:
            y = x
        return y, (x, y)

    def backward(self, dy, cache):
        x, y = cache
        if self.kind == "relu":
            return dy * (x > 0)
        if self.kind == "tanh":
            return dy * (1 - y * y)
        if self.kind == "softmax":
            return y * (dy - (dy * y).sum(axis=-1, keepdims=True))
        return dy


class Sequential(Layer):
    def __init__(self, layers: Sequence[Layer]):
        super().__init__()
        self.layers = list(layers)
        for i, layer in enumerate(self.layers):
            self.children[str(i)] = layer

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def backward(self, dy, cache):
        for layer, c in zip(reversed(self.layers), reversed(cache)):
            dy = layer.backward(dy, c)
        return dy


class ResidualCell(Layer):
    """Two strided convolutions concatenated with a shortcut branch.

    The shortcut is the identity when both strides are 1, otherwise a
    kernel-1 convolution with ``n1 // 2`` features and time stride ``s1 * s2``
    so both branches emit the same time length.
    """

    def __init__(self, spec: ResidualCellSpec, in_features: int, rng: np.random.Generator,
                 dtype=np.float32, inner_activation: str = "relu", out_activation: str = "relu"):
        super().__init__()
        self.spec = spec
        self.in_features = in_features
        self.conv1 = Conv(ConvSpec(in_features, spec.n1, spec.k1, spec.s1), rng, dtype)
        self.act1 = Activation(inner_activation)
        self.conv2 = Conv(ConvSpec(spec.n1, spec.n2, spec.k2, spec.s2), rng, dtype)
        self.children = {"conv1": self.conv1, "conv2": self.conv2}
        self.shortcut = None
        if spec.has_shortcut_conv:
            kernel = (1,) * (spec.dimension + 1)
            self.shortcut = Conv(ConvSpec(in_features, spec.shortcut_features, kernel,
                                          spec.time_stride), rng, dtype)
            self.children["shortcut"] = self.shortcut
        self.act_out = Activation(out_activation)

    @property
    def out_features(self) -> int:
        return self.spec.out_features(self.in_features)

    def forward(self, x):
        h1, c1 = self.conv1.forward(x)
        a1, ca = self.act1.forward(h1)
        h2, c2 = self.conv2.forward(a1)
        if self.shortcut is not None:
            sc, cs = self.shortcut.forward(x)
        else:
            sc, cs = x, None
        if h2.shape[:-1] != sc.shape[:-1]:
            raise RuntimeError(f"residual branches disagree: {h2.shape} vs {sc.shape}")
        y, co = self.act_out.forward(concat(h2, sc, -1))
        return y, (c1, ca, c2, cs, co)

    def backward(self, dy, cache):
        c1, ca, c2, cs, co = cache
        dcat = self.act_out.backward(dy, co)
        n2 = self.spec.n2
        dx = self.conv1.backward(self.act1.backward(self.conv2.backward(dcat[..., :n2], c2), ca), c1)
        dsc = dcat[..., n2:]
        if self.shortcut is not None:
            dx = dx + self.shortcut.backward(dsc, cs)
        else:
            dx = dx + dsc
        return dx
