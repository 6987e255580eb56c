"""Binary checkpoint format.

    "SNPC" | u32 version | u32 config length | config JSON (utf-8)
    per tensor in ``param_shapes`` order: u32 ndim | ndim x u64 dims | f32 data
    u8 optimizer flag, and if set:
        u64 step | f64 beta1, beta2, eps, weight_decay | first moments | second moments

Everything is little-endian; moments use the same tensor layout as parameters.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import ModelParams, param_shapes
from .optim import OptimizerState

MAGIC = b"SNPC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _put_tensor(buf: io.BytesIO, t: np.ndarray) -> None:
    buf.write(struct.pack("<I", t.ndim))
    buf.write(struct.pack(f"<{t.ndim}Q", *t.shape))
    buf.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def _get_tensor(view: memoryview, off: int, expect: tuple[int, ...]):
    (ndim,) = struct.unpack_from("<I", view, off)
    off += 4
    shape = struct.unpack_from(f"<{ndim}Q", view, off)
    off += 8 * ndim
    if tuple(shape) != tuple(expect):
        raise CheckpointError(f"tensor shape {shape} does not match expected {expect}")
    count = int(np.prod(shape)) if ndim else 1
    if off + 4 * count > len(view):
        raise CheckpointError("checkpoint ends inside a tensor")
    t = np.frombuffer(view, dtype="<f4", count=count, offset=off).reshape(shape).astype(np.float32)
    return t, off + 4 * count


def dumps(params: ModelParams, state: OptimizerState | None = None) -> bytes:
    buf = io.BytesIO()
    cfg = params.config.to_json().encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(cfg)))
    buf.write(cfg)
    names = [n for n, _ in param_shapes(params.config)]
    for n in names:
        _put_tensor(buf, params[n])
    if state is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01")
        buf.write(struct.pack("<Q4d", state.step, state.beta1, state.beta2, state.eps, state.weight_decay))
        for moments in (state.m, state.v):
            for n in names:
                _put_tensor(buf, moments[n])
    return buf.getvalue()


def loads(data: bytes) -> tuple[ModelParams, OptimizerState | None]:
    try:
        return _loads(data)
    except (struct.error, IndexError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"truncated or corrupt checkpoint: {exc}") from exc


def _loads(data: bytes):
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, cfg_len = struct.unpack_from("<II", view, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config = ModelConfig.from_dict(json.loads(bytes(view[12 : 12 + cfg_len]).decode("utf-8")))
    off = 12 + cfg_len
    shapes = param_shapes(config)
    tensors = {}
    for name, shape in shapes:
        tensors[name], off = _get_tensor(view, off, shape)
    state = None
    flag = view[off]
    off += 1
    if flag:
        step, b1, b2, eps, wd = struct.unpack_from("<Q4d", view, off)
        off += 40
        moments = []
        for _ in range(2):
            d = {}
            for name, shape in shapes:
                d[name], off = _get_tensor(view, off, shape)
            moments.append(d)
        state = OptimizerState(moments[0], moments[1], step, b1, b2, eps, wd)
    if off != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return ModelParams(config, tensors), state


def save_checkpoint(path, params: ModelParams, state: OptimizerState | None = None) -> None:
    Path(path).write_bytes(dumps(params, state))


def load_checkpoint(path) -> tuple[ModelParams, OptimizerState | None]:
    return loads(Path(path).read_bytes())
