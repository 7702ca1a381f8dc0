"""Loaders and windowing for moving MNIST, JSB chorales and CIFAR-10.

All model inputs are rescaled to [-1, 1]. Splits are made at the level of
whole sequences or chorales, so no window ever straddles two splits.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib import format as npy_format

log = logging.getLogger(__name__)

N_KEYS = 88
LOWEST_PITCH = 21
HIGHEST_PITCH = LOWEST_PITCH + N_KEYS - 1
CIFAR_RECORD = 1 + 3 * 32 * 32
JSB_WINDOW = 11
JSB_TRAIN_CHORALES = 250

_NPY_DTYPES = {np.dtype("u1"), np.dtype("<f4"), np.dtype("<f8")}


class DataError(ValueError):
    """Malformed or unsupported dataset file."""


@dataclass
class SequenceBatch:
    """Windows of frames and the frames that follow them.

    ``inputs``: (n, T, spatial..., m); ``targets``: (n, K, spatial..., m).
    ``indices[i] = (source sequence, first input frame)``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, n: int | None) -> "SequenceBatch":
        if n is None or n >= len(self):
            return self
        return SequenceBatch(self.inputs[:n], self.targets[:n], self.indices[:n])


# ------------------------------------------------------------------ pixels

def rescale_u8(values: np.ndarray, dtype=np.float32) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) / 255.0 * 2.0 - 1.0).astype(dtype)


def unscale_u8(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rescale_u8` (exact on rescaled u8 values)."""
    v = (np.asarray(values, dtype=np.float64) + 1.0) / 2.0 * 255.0
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


# ------------------------------------------------------------------ NPY

def load_npy(path) -> np.ndarray:
    """Read a version 1.0, C-order NPY file of u8, f4 or f8 values."""
    with open(path, "rb") as fh:
        try:
            version = npy_format.read_magic(fh)
        except ValueError as exc:
            raise DataError(f"{path}: not an NPY file ({exc})") from None
        if version != (1, 0):
            raise DataError(f"{path}: NPY version {version} unsupported, need 1.0")
        try:
            shape, fortran, dtype = npy_format.read_array_header_1_0(fh)
        except ValueError as exc:
            raise DataError(f"{path}: bad NPY header ({exc})") from None
        if fortran:
            raise DataError(f"{path}: Fortran-ordered arrays are not supported")
        if dtype not in _NPY_DTYPES:
            raise DataError(f"{path}: dtype {dtype.str} unsupported")
        count = int(np.prod(shape))
        payload = fh.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise DataError(f"{path}: truncated payload ({len(payload)} of {count * dtype.itemsize} bytes)")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def save_npy(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    with open(path, "wb") as fh:
        npy_format.write_array(fh, array, version=(1, 0))


# ------------------------------------------------------------------ moving MNIST

def split_indices(n: int, seed: int, fractions=(0.8, 0.1, 0.1)) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def window_moving_mnist(raw: np.ndarray, horizon: int = 1, split_seed: int = 0, window: int = 10,
                        limits: dict[str, int] | None = None) -> dict[str, SequenceBatch]:
    """Split ``raw`` (frames, sequences, H, W) by sequence into train/val/test (80/10/10).

    Frames ``0..window-1`` are the input, the next ``horizon`` frames the target.
    ``limits`` caps the number of sequences taken from each split.
    """
    if raw.ndim != 4:
        raise DataError(f"expected (frames, sequences, H, W), got shape {raw.shape}")
    if horizon < 1 or horizon > 10:
        raise ValueError("horizon must be between 1 and 10")
    if raw.shape[0] < window + horizon:
        raise DataError(f"sequences have {raw.shape[0]} frames, need {window + horizon}")
    limits = limits or {}
    out = {}
    for name, idx in zip(("train", "val", "test"), split_indices(raw.shape[1], split_seed)):
        idx = np.sort(idx)[:limits.get(name)]
        frames = rescale_u8(raw[:window + horizon, idx])[..., None]  # (F, n, H, W, 1)
        frames = np.moveaxis(frames, 1, 0)
        prov = np.stack([idx, np.zeros_like(idx)], axis=1)
        out[name] = SequenceBatch(np.ascontiguousarray(frames[:, :window]),
                                  np.ascontiguousarray(frames[:, window:]), prov)
    return out


# ------------------------------------------------------------------ JSB chorales

def piano_roll(steps) -> np.ndarray:
    """Boolean (time, 88) roll from lists of MIDI pitches; duplicates collapse."""
    roll = np.zeros((len(steps), N_KEYS), dtype=bool)
    for t, step in enumerate(steps):
        for p in step:
            if isinstance(p, bool) or not isinstance(p, (int, np.integer)):
                raise DataError(f"pitch {p!r} is not an integer")
            if not LOWEST_PITCH <= p <= HIGHEST_PITCH:
                raise DataError(f"pitch {p} outside the piano range [{LOWEST_PITCH}, {HIGHEST_PITCH}]")
            roll[t, p - LOWEST_PITCH] = True
    return roll


def load_jsb_json(path) -> list[np.ndarray]:
    """Read ``{"chorales": [[[pitch, ...], ...], ...]}`` into boolean piano rolls."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("chorales"), list):
        raise DataError(f"{path}: expected an object with a 'chorales' array")
    rolls = []
    for i, chorale in enumerate(doc["chorales"]):
        if not isinstance(chorale, list) or not all(isinstance(s, list) for s in chorale):
            raise DataError(f"{path}: chorale {i} must be an array of pitch arrays")
        rolls.append(piano_roll(chorale))
    return rolls


def save_jsb_json(path, chorales) -> None:
    """Write piano rolls (or pitch lists) in the JSON layout read by :func:`load_jsb_json`."""
    doc = []
    for c in chorales:
        if isinstance(c, np.ndarray):
            doc.append([[int(k) + LOWEST_PITCH for k in np.flatnonzero(step)] for step in c])
        else:
            doc.append([[int(p) for p in step] for step in c])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"chorales": doc}, fh)


def roll_windows(roll: np.ndarray, length: int = JSB_WINDOW) -> np.ndarray:
    """All overlapping windows; a chorale of length L gives max(L - length + 1, 0)."""
    n = roll.shape[0] - length + 1
    if n <= 0:
        return np.zeros((0, length, roll.shape[1]), dtype=roll.dtype)
    return np.stack([roll[i:i + length] for i in range(n)])


def _window_batch(chorales, ids, length) -> SequenceBatch:
    wins, prov = [], []
    for cid in ids:
        w = roll_windows(chorales[cid], length)
        wins.append(w)
        prov.extend((cid, s) for s in range(len(w)))
    if wins:
        allw = np.concatenate(wins)
    else:
        allw = np.zeros((0, length, N_KEYS), dtype=bool)
    frames = np.where(allw, 1.0, -1.0).astype(np.float32)[..., None]  # (n, length, 88, 1)
    return SequenceBatch(frames[:, :length - 1], frames[:, length - 1:],
                         np.array(prov, dtype=np.int64).reshape(-1, 2))


def window_jsb(chorales: list[np.ndarray], n_train: int = JSB_TRAIN_CHORALES, split_seed: int = 0,
               length: int = JSB_WINDOW) -> dict[str, SequenceBatch]:
    """Windows for the first ``n_train`` chorales (train) and the rest (test corpus).

    The test corpus is additionally split in half at chorale level into
    ``val`` and ``test``; ``test_full`` holds all of its windows.
    """
    train_ids = list(range(min(n_train, len(chorales))))
    rest = list(range(len(train_ids), len(chorales)))
    perm = np.random.default_rng(split_seed).permutation(len(rest))
    half = len(rest) // 2
    val_ids = sorted(rest[i] for i in perm[:half])
    test_ids = sorted(rest[i] for i in perm[half:])
    return {
        "train": _window_batch(chorales, train_ids, length),
        "val": _window_batch(chorales, val_ids, length),
        "test": _window_batch(chorales, test_ids, length),
        "test_full": _window_batch(chorales, rest, length),
    }


# ------------------------------------------------------------------ CIFAR-10

def load_cifar10_batch(path, raw: bool = False):
    """Read one binary batch: records of 1 label byte + 1024 R + 1024 G + 1024 B.

    Returns ``(images, labels)`` with images (N, 32, 32, 3), in [-1, 1] unless ``raw``.
    """
    data = Path(path).read_bytes()
    if len(data) % CIFAR_RECORD:
        raise DataError(f"{path}: size {len(data)} is not a multiple of {CIFAR_RECORD}")
    rec = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise DataError(f"{path}: label {labels.max()} out of range")
    images = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    images = np.ascontiguousarray(images)
    return (images if raw else rescale_u8(images)), labels


def load_cifar10(directory, train_limit: int | None = None):
    """``(x_train, y_train, x_test, y_test)`` from ``data_batch_{1..5}.bin`` and ``test_batch.bin``."""
    directory = Path(directory)
    train_files = sorted(directory.glob("data_batch_*.bin"))
    test_file = directory / "test_batch.bin"
    if not train_files or not test_file.exists():
        raise FileNotFoundError(f"{directory}: CIFAR-10 binary batches not found")
    xs, ys = [], []
    for f in train_files:
        x, y = load_cifar10_batch(f)
        xs.append(x)
        ys.append(y)
        if train_limit is not None and sum(len(a) for a in ys) >= train_limit:
            break
    x_train = np.concatenate(xs)[:train_limit]
    y_train = np.concatenate(ys)[:train_limit]
    x_test, y_test = load_cifar10_batch(test_file)
    return x_train, y_train, x_test, y_test


def data_path(env: str) -> Path | None:
    """Dataset location from an environment variable, if set and present."""
    value = os.environ.get(env)
    if not value:
        return None
    p = Path(value)
    return p if p.exists() else None
