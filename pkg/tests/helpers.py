"""Synthetic stand-ins for the datasets and naive reference implementations."""
from __future__ import annotations

import itertools

import numpy as np

from tfcnet.layers import ResidualCellSpec
from tfcnet.model import IncriminatorSpec, ModelSpec, ResidualBlockSpec

# header padded as numpy writes it
NPY_2x2_U8 = (b"\x93NUMPY\x01\x00v\x00{'descr': '|u1', 'fortran_order': False, 'shape': (2, 2), }"
              + b" " * 58 + b"\n" + bytes([1, 2, 3, 4]))


def naive_conv(x, W, b, stride):
    """Loop-based same-padded convolution, stride on the time axis only."""
    kernel = W.shape[:-2]
    axes = x.shape[1:-1]
    outs, pads = [], []
    for i, (L, k) in enumerate(zip(axes, kernel)):
        s = stride if i == 0 else 1
        o = -(-L // s)
        total = max((o - 1) * s + k - L, 0)
        outs.append(o)
        pads.append(total // 2)
    B, n = x.shape[0], W.shape[-1]
    y = np.zeros((B, *outs, n))
    for bi in range(B):
        for pos in itertools.product(*(range(o) for o in outs)):
            acc = b.astype(np.float64).copy()
            for off in itertools.product(*(range(k) for k in kernel)):
                src = []
                for i, (p, o_, pad) in enumerate(zip(pos, off, pads)):
                    s = stride if i == 0 else 1
                    src.append(p * s + o_ - pad)
                if all(0 <= c < L for c, L in zip(src, axes)):
                    acc += x[(bi, *src)] @ W[off]
            y[(bi, *pos)] = acc
    return y


def moving_digits(n_seq: int, frames: int = 11, size: int = 16, seed: int = 0) -> np.ndarray:
    """Small moving-digit videos, ``(frames, n_seq, size, size)`` uint8.

    Each sequence is one 8x8 scikit-learn digit bouncing inside the frame
    with a constant velocity.
    """
    from sklearn.datasets import load_digits

    digits = load_digits().images  # 0..16
    rng = np.random.default_rng(seed)
    out = np.zeros((frames, n_seq, size, size), dtype=np.uint8)
    span = size - 8
    for s in range(n_seq):
        img = (digits[rng.integers(len(digits))] * (255 / 16)).astype(np.uint8)
        pos = rng.uniform(0, span, 2)
        vel = rng.uniform(-1.5, 1.5, 2)
        for t in range(frames):
            r, c = (int(round(v)) for v in pos)
            out[t, s, r:r + 8, c:c + 8] = np.maximum(out[t, s, r:r + 8, c:c + 8], img)
            pos = pos + vel
            for a in range(2):
                if pos[a] < 0 or pos[a] > span:
                    vel[a] = -vel[a]
                    pos[a] = np.clip(pos[a], 0, span)
    return out


def synthetic_chorales(n: int, length=(14, 40), seed: int = 0) -> list[list[list[int]]]:
    """Four-voice pitch lists that move slowly, as nested Python lists."""
    rng = np.random.default_rng(seed)
    chorales = []
    for _ in range(n):
        L = int(rng.integers(*length))
        voices = np.array([48, 55, 62, 69]) + rng.integers(-3, 4, 4)
        steps = []
        for _ in range(L):
            if rng.random() < 0.3:
                voices = np.clip(voices + rng.integers(-2, 3, 4), 21, 108)
            steps.append(sorted({int(v) for v in voices}))
        chorales.append(steps)
    return chorales


def cifar_records(labels, seed: int = 0) -> bytes:
    """Binary CIFAR-10 records: label byte then 1024 R, 1024 G, 1024 B bytes."""
    rng = np.random.default_rng(seed)
    out = bytearray()
    for lab in labels:
        out.append(int(lab))
        out += rng.integers(0, 256, 3072, dtype=np.uint8).tobytes()
    return bytes(out)


def striped_images(n: int, size: int = 8, classes: int = 4, seed: int = 0):
    """Tiny separable image task: the class picks the stripe orientation and colour."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, classes, n)
    X = rng.normal(0, 0.2, (n, size, size, 3))
    grid = np.arange(size)
    for i, c in enumerate(y):
        pattern = np.sin(grid * np.pi / 2)[:, None] if c % 2 == 0 else np.sin(grid * np.pi / 2)[None, :]
        X[i, ..., c // 2] += np.broadcast_to(pattern, (size, size))
    return np.clip(X, -1, 1), y


def small_forecaster(spatial=(16, 16), name="small"):
    """Three cells folding a 10-frame window to one."""
    D = len(spatial)
    k = lambda t, s: (t,) + (s,) * D  # noqa: E731
    cells = (ResidualCellSpec(3, 4, 1, 1, k(2, 3), k(2, 3)),
             ResidualCellSpec(4, 5, 2, 2, k(2, 3), k(2, 3)),
             ResidualCellSpec(6, 6, 2, 2, k(2, 2), k(2, 2)))
    return ModelSpec(name, 10, spatial, 1, ResidualBlockSpec(cells, (8, 3)), IncriminatorSpec(3, 1, 8, 1))


def small_cifar():
    """A CIFAR-shaped classifier small enough for unit tests."""
    cells = (ResidualCellSpec(4, 4, 1, 4, (2, 3), (2, 3)),
             ResidualCellSpec(5, 5, 1, 4, (2, 3), (2, 2)))
    return ModelSpec("small-cifar", 32, (32,), 3, ResidualBlockSpec(cells, (6, 3)),
                     IncriminatorSpec(0, 1, 6, 3), head=(8, 10))
