"""Binary checkpoint archive and PGM frame dumps.

Checkpoint layout (all integers little-endian)::

    b"TFCK"  u32 version  u32 digest_len  digest (ASCII)  u32 count
    count x { u32 name_len  name (UTF-8)  u8 dtype  u32 rank  rank x u64 dim  raw data }

Optimizer state is stored under names prefixed ``__adam__/``; the model
architecture as UTF-8 JSON bytes under ``__spec__``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelSpec, TfcModel
from .training import Adam

MAGIC = b"TFCK"
VERSION = 1
OPTIMIZER_PREFIX = "__adam__/"
SPEC_KEY = "__spec__"

DTYPE_CODES = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<i8"),
    4: np.dtype("u1"),
    5: np.dtype("<i4"),
}
_CODE_OF = {dt: code for code, dt in DTYPE_CODES.items()}


class CheckpointError(ValueError):
    pass


class DigestMismatch(CheckpointError):
    """The checkpoint was written for a different architecture."""


def save_checkpoint(path, tensors: dict[str, np.ndarray], digest: str) -> None:
    out = bytearray(MAGIC)
    d = digest.encode("ascii")
    out += struct.pack("<II", VERSION, len(d)) + d
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.itemsize > 1 else arr.dtype
        if dt not in _CODE_OF:
            raise CheckpointError(f"{name}: dtype {arr.dtype} cannot be stored")
        n = name.encode("utf-8")
        out += struct.pack("<I", len(n)) + n
        out += struct.pack("<BI", _CODE_OF[dt], arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=dt).tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a TFCK checkpoint")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    def raw(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    version, dlen = take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version} unsupported")
    digest = raw(dlen).decode("ascii")
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = take("<I")
        name = raw(nlen).decode("utf-8")
        code, rank = take("<BI")
        if code not in DTYPE_CODES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name}")
        shape = take(f"<{rank}Q")
        dt = DTYPE_CODES[code]
        nbytes = int(np.prod(shape)) * dt.itemsize
        tensors[name] = np.frombuffer(raw(nbytes), dtype=dt).reshape(shape).copy()
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return tensors, digest


def save_model(path, model: TfcModel, optimizer: Adam | None = None) -> None:
    tensors = dict(model.named_params())
    tensors[SPEC_KEY] = np.frombuffer(json.dumps(model.spec.to_dict(), sort_keys=True).encode(), dtype=np.uint8)
    if optimizer is not None:
        for k, v in optimizer.state_dict().items():
            tensors[OPTIMIZER_PREFIX + k] = v
    save_checkpoint(path, tensors, model.spec.digest())


def read_spec(tensors: dict[str, np.ndarray]) -> ModelSpec:
    if SPEC_KEY not in tensors:
        raise CheckpointError("checkpoint carries no architecture")
    return ModelSpec.from_dict(json.loads(tensors[SPEC_KEY].tobytes().decode()))


def load_model(path, spec: ModelSpec | None = None, precision: int | None = None,
               optimizer: Adam | None = None) -> TfcModel:
    """Rebuild a model from a checkpoint.

    With ``spec`` given, its digest must equal the one embedded in the file.
    """
    tensors, digest = load_checkpoint(path)
    if spec is None:
        spec = read_spec(tensors)
    elif spec.digest() != digest:
        raise DigestMismatch(f"{path}: checkpoint digest {digest[:12]} does not match model {spec.digest()[:12]}")
    params = {k: v for k, v in tensors.items() if not k.startswith(OPTIMIZER_PREFIX) and k != SPEC_KEY}
    if precision is None:
        first = next(iter(params.values()))
        precision = 64 if first.dtype == np.float64 else 32
    model = TfcModel(spec, precision=precision)
    model.load_params({k: v.astype(model.dtype) for k, v in params.items()})
    if optimizer is not None:
        state = {k[len(OPTIMIZER_PREFIX):]: v for k, v in tensors.items() if k.startswith(OPTIMIZER_PREFIX)}
        if state:
            optimizer.load_state_dict(state)
    return model


# ------------------------------------------------------------------ PGM

def frame_to_u8(frame: np.ndarray) -> np.ndarray:
    """Map [-1, 1] to 0..255 via ``(v + 1) / 2 * 255``, rounded and clamped."""
    v = (np.asarray(frame, dtype=np.float64) + 1.0) / 2.0 * 255.0
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def pgm_bytes(frame: np.ndarray) -> bytes:
    frame = np.asarray(frame)
    if frame.ndim == 3 and frame.shape[-1] == 1:
        frame = frame[..., 0]
    if frame.ndim == 1:
        frame = frame[None, :]
    if frame.ndim != 2:
        raise ValueError(f"PGM needs a 2-d frame, got shape {frame.shape}")
    h, w = frame.shape
    return f"P5 {w} {h} 255\n".encode("ascii") + frame_to_u8(frame).tobytes()


def write_pgm(path, frame: np.ndarray) -> None:
    Path(path).write_bytes(pgm_bytes(frame))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    pixels = data[pos + 1:pos + 1 + w * h]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()
