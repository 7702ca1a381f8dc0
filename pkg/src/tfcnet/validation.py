"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np

from .tensor import NonFiniteError, ShapeError


def check_windows(X, window: int | None = None, frame_shape: tuple[int, ...] | None = None,
                  dtype=np.float64) -> np.ndarray:
    """Validate a batch of windows ``(n, T, spatial..., m)``.

    A missing trailing feature axis is added when ``frame_shape`` says m == 1.
    """
    X = np.asarray(X, dtype=dtype)
    if frame_shape is not None and X.ndim == len(frame_shape) + 1 and frame_shape[-1] == 1:
        X = X[..., None]
    if X.ndim < 3:
        raise ShapeError(f"expected (n, time, spatial..., features), got shape {X.shape}")
    if len(X) == 0:
        raise ValueError("found an empty batch")
    if window is not None and X.shape[1] != window:
        raise ShapeError(f"windows hold {X.shape[1]} frames, model expects {window}")
    if frame_shape is not None and tuple(X.shape[2:]) != tuple(frame_shape):
        raise ShapeError(f"frames have shape {X.shape[2:]}, model expects {tuple(frame_shape)}")
    check_finite(X, "X")
    return X


def check_frame_targets(Y, n: int, frame_shape: tuple[int, ...], dtype=np.float64) -> np.ndarray:
    """Targets as ``(n, K, *frame_shape)``; a single frame per sample becomes K = 1."""
    Y = np.asarray(Y, dtype=dtype)
    frame_shape = tuple(frame_shape)
    if frame_shape[-1] == 1 and Y.shape[-len(frame_shape) + 1:] == frame_shape[:-1] \
            and Y.shape[-1] != 1:
        Y = Y[..., None]
    if tuple(Y.shape[1:]) == frame_shape:
        Y = Y[:, None]
    if len(Y) != n:
        raise ValueError(f"X has {n} samples but Y has {len(Y)}")
    if tuple(Y.shape[2:]) != frame_shape:
        raise ShapeError(f"targets {Y.shape[1:]} do not hold frames of shape {frame_shape}")
    check_finite(Y, "Y")
    return Y


def check_labels(y, n: int, n_classes: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-d, got shape {y.shape}")
    if len(y) != n:
        raise ValueError(f"X has {n} samples but y has {len(y)}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
    if y.min() < 0 or (n_classes is not None and y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return y


def check_finite(x: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} contains NaN or infinity")


def check_range(x: np.ndarray, low: float = -1.0, high: float = 1.0, name: str = "X") -> None:
    lo, hi = float(np.min(x)), float(np.max(x))
    if lo < low or hi > high:
        raise ValueError(f"{name} values span [{lo:g}, {hi:g}], expected within [{low:g}, {high:g}]")
