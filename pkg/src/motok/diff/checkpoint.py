"""Versioned binary checkpoint files.

Layout (all integers little-endian)::

    magic      8 bytes  b"MOTOKCKP"
    version    u32
    kind       u32 length + utf-8 model-kind tag
    hyper      u32 length + utf-8 JSON hyperparameter record
    count      u32 number of tensors
    tensors    per tensor: u32 length + utf-8 name, u8 dtype code,
               u32 ndim, ndim x u64 extents, raw little-endian values
"""

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"MOTOKCKP"
FORMAT_VERSION = 1

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1, np.dtype("int64"): 2}


class CheckpointError(ValueError):
    pass


def _write_str(buf, s):
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _read_exact(buf, n):
    raw = buf.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated checkpoint")
    return raw


def _read_str(buf):
    (n,) = struct.unpack("<I", _read_exact(buf, 4))
    return _read_exact(buf, n).decode("utf-8")


def dumps(kind, hyper, tensors):
    """Serialise ``tensors`` (name -> array/tensor) into checkpoint bytes."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    _write_str(buf, kind)
    _write_str(buf, json.dumps(hyper, sort_keys=True))
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        value = tensors[name]
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().numpy()
        arr = np.asarray(value)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        code = _CODES[arr.dtype]
        _write_str(buf, name)
        buf.write(struct.pack("<BI", code, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return buf.getvalue()


def loads(data, expected_shapes=None):
    """Parse checkpoint bytes into ``(kind, hyper, tensors)``.

    ``expected_shapes`` (name -> shape) makes the loader reject any declared
    tensor whose shape disagrees, and any missing tensor.
    """
    buf = io.BytesIO(data)
    if _read_exact(buf, len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", _read_exact(buf, 4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    kind = _read_str(buf)
    hyper = json.loads(_read_str(buf))
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    tensors = {}
    for _ in range(count):
        name = _read_str(buf)
        code, ndim = struct.unpack("<BI", _read_exact(buf, 5))
        if code not in _DTYPES:
            raise CheckpointError(f"tensor {name!r}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}Q", _read_exact(buf, 8 * ndim))
        dtype = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(_read_exact(buf, n * dtype.itemsize), dtype=dtype).reshape(shape)
        tensors[name] = arr.astype(dtype.newbyteorder("="))
    if buf.read(1):
        raise CheckpointError("trailing bytes after last tensor")
    if expected_shapes is not None:
        for name, shape in expected_shapes.items():
            if name not in tensors:
                raise CheckpointError(f"missing tensor {name!r}")
            if tuple(tensors[name].shape) != tuple(shape):
                raise CheckpointError(
                    f"tensor {name!r}: declared shape {tuple(tensors[name].shape)}, expected {tuple(shape)}"
                )
    return kind, hyper, tensors


def save(path, kind, hyper, tensors):
    data = dumps(kind, hyper, tensors)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load(path, expected_shapes=None):
    return loads(Path(path).read_bytes(), expected_shapes)


def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def state_tensors(module, prefix=""):
    return {prefix + k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_state(module, tensors, prefix=""):
    """Copy ``tensors`` into ``module``, validating every parameter shape."""
    state = module.state_dict()
    expected = {prefix + k: tuple(v.shape) for k, v in state.items()}
    for name, shape in expected.items():
        if name not in tensors:
            raise CheckpointError(f"missing tensor {name!r}")
        if tuple(tensors[name].shape) != shape:
            raise CheckpointError(
                f"tensor {name!r}: declared shape {tuple(tensors[name].shape)}, expected {shape}"
            )
    new_state = {k: torch.from_numpy(np.array(tensors[prefix + k])).to(v.dtype) for k, v in state.items()}
    module.load_state_dict(new_state)
