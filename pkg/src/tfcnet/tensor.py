"""Dense tensor helpers on top of numpy arrays.

Every value in the library is a C-contiguous ``numpy.ndarray``; this module
adds the handful of shape-checked operations the layers are written against,
plus an opt-in finiteness guard used in 64-bit verification runs.
"""
from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_VERIFY = contextvars.ContextVar("tfcnet_verify", default=False)

AXIS_ROLES = ("batch", "time", "spatial-1", "spatial-2", "feature")


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised in verify mode when an operation produces NaN or Inf."""


@contextlib.contextmanager
def verify_mode(enabled: bool = True):
    """Turn on NaN/Inf checks for every tensor op inside the block."""
    token = _VERIFY.set(enabled)
    try:
        yield
    finally:
        _VERIFY.reset(token)


def verifying() -> bool:
    return _VERIFY.get()


def ensure_finite(x: np.ndarray, where: str = "tensor op") -> np.ndarray:
    if _VERIFY.get() and not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite value produced by {where}")
    return x


def precision_dtype(bits: int) -> np.dtype:
    if bits == 32:
        return np.dtype(np.float32)
    if bits == 64:
        return np.dtype(np.float64)
    raise ValueError(f"precision must be 32 or 64, got {bits}")


@dataclass(frozen=True)
class Shape:
    """Axis lengths with a role per axis.

    Roles are unique, ``feature`` is last and ``time`` precedes the spatial
    axes. Used to describe and validate layer inputs.
    """

    axes: tuple[int, ...]
    roles: tuple[str, ...]

    def __post_init__(self):
        if len(self.axes) != len(self.roles):
            raise ShapeError("one role per axis required")
        if not self.axes:
            raise ShapeError("rank must be at least 1")
        if any(int(a) < 1 for a in self.axes):
            raise ShapeError(f"axis lengths must be >= 1, got {self.axes}")
        unknown = set(self.roles) - set(AXIS_ROLES)
        if unknown:
            raise ShapeError(f"unknown axis roles {sorted(unknown)}")
        if len(set(self.roles)) != len(self.roles):
            raise ShapeError(f"duplicate axis roles in {self.roles}")
        if "feature" in self.roles and self.roles[-1] != "feature":
            raise ShapeError("feature axis must be last")
        if "time" in self.roles:
            t = self.roles.index("time")
            if any(r.startswith("spatial") and i < t for i, r in enumerate(self.roles)):
                raise ShapeError("time axis must precede spatial axes")

    @classmethod
    def sequence(cls, batch: int, time: int, spatial: Sequence[int], features: int) -> "Shape":
        roles = ("batch", "time") + AXIS_ROLES[2:2 + len(spatial)] + ("feature",)
        return cls((batch, time, *spatial, features), roles)

    @property
    def spatial(self) -> tuple[int, ...]:
        return tuple(a for a, r in zip(self.axes, self.roles) if r.startswith("spatial"))

    def axis(self, role: str) -> int:
        return self.roles.index(role)

    def matches(self, x: np.ndarray) -> bool:
        return tuple(x.shape) == self.axes


def strides_of(shape: Sequence[int]) -> tuple[int, ...]:
    """Row-major element strides: product of trailing axis lengths."""
    out = []
    acc = 1
    for n in reversed(shape):
        out.append(acc)
        acc *= int(n)
    return tuple(reversed(out))


def flat_index(index: Sequence[int], shape: Sequence[int]) -> int:
    return sum(int(i) * s for i, s in zip(index, strides_of(shape)))


def _axis(axis: int, rank: int) -> int:
    if not -rank <= axis < rank:
        raise ShapeError(f"axis {axis} out of range for rank {rank}")
    return axis % rank


def concat(a: np.ndarray, b: np.ndarray, axis: int = -1) -> np.ndarray:
    if a.ndim != b.ndim:
        raise ShapeError(f"rank mismatch {a.shape} vs {b.shape}")
    ax = _axis(axis, a.ndim)
    for i, (p, q) in enumerate(zip(a.shape, b.shape)):
        if i != ax and p != q:
            raise ShapeError(f"cannot concat {a.shape} and {b.shape} on axis {ax}")
    return ensure_finite(np.concatenate([a, b], axis=ax), "concat")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul takes rank-2 operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return ensure_finite(a @ b, "matmul")


def map_elementwise(x: np.ndarray, f: Callable) -> np.ndarray:
    """Apply ``f`` pointwise. Numpy ufuncs are used directly, other callables are vectorized."""
    if isinstance(f, np.ufunc):
        out = f(x)
    else:
        out = np.vectorize(f, otypes=[x.dtype])(x) if x.size else x.copy()
    return ensure_finite(np.asarray(out, dtype=x.dtype), "map_elementwise")


def zip_elementwise(x: np.ndarray, y: np.ndarray, f: Callable) -> np.ndarray:
    if x.shape != y.shape:
        raise ShapeError(f"zip needs identical shapes, got {x.shape} and {y.shape}")
    if isinstance(f, np.ufunc):
        out = f(x, y)
    else:
        out = np.vectorize(f, otypes=[x.dtype])(x, y) if x.size else x.copy()
    return ensure_finite(np.asarray(out, dtype=x.dtype), "zip_elementwise")


def reduce(x: np.ndarray, kind: str = "sum", axis: int | None = None):
    """Sum, mean or argmax over one axis, or over everything when ``axis`` is None."""
    if axis is not None:
        axis = _axis(axis, x.ndim)
    if kind == "sum":
        out = np.sum(x, axis=axis)
    elif kind == "mean":
        out = np.mean(x, axis=axis)
    elif kind == "argmax":
        return np.argmax(x, axis=axis) if axis is not None else int(np.argmax(x))
    else:
        raise ValueError(f"unknown reduction {kind!r}")
    return ensure_finite(out, f"reduce({kind})")


def pad_zeros(x: np.ndarray, amounts: Sequence[tuple[int, int]]) -> np.ndarray:
    if len(amounts) != x.ndim:
        raise ShapeError(f"need {x.ndim} (before, after) pairs, got {len(amounts)}")
    if any(b < 0 or a < 0 for b, a in amounts):
        raise ValueError("padding amounts must be non-negative")
    if all(b == 0 and a == 0 for b, a in amounts):
        return x.copy()
    return np.pad(x, [(int(b), int(a)) for b, a in amounts])


def permute_axes(x: np.ndarray, order: Sequence[int]) -> np.ndarray:
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(x.ndim)):
        raise ShapeError(f"{order} is not a permutation of {x.ndim} axes")
    return np.ascontiguousarray(np.transpose(x, order))


def reshape(x: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} ({x.size} elements) to {shape}")
    return np.ascontiguousarray(x).reshape(shape)
