"""Binary checkpoints for ModelState.

Layout (all integers u32 little-endian)::

    b"ADVW"                      magic
    version                      currently 1
    descriptor length, bytes     UTF-8 JSON: {"seed": int, "spec": ModelSpec dict}
    then, per parameter, in spec order:
        name length, name bytes  UTF-8
        rank, dims[rank]
        values                   prod(dims) float64 little-endian

Loading reproduces the parameters bit for bit.
"""
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import (CheckpointError, CheckpointMagicError, CheckpointTruncatedError, CheckpointVersionError,
                     DescriptorMismatchError, InvalidSpecError)
from .models import ModelSpec, ModelState

MAGIC = b"ADVW"
VERSION = 1


def atomic_write_bytes(path, data):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _descriptor(state):
    return json.dumps({"seed": state.seed, "spec": state.spec.to_dict()}, sort_keys=True, separators=(",", ":"))


def encode(state):
    out = [MAGIC, struct.pack("<I", VERSION)]
    desc = _descriptor(state).encode("utf-8")
    out.append(struct.pack("<I", len(desc)) + desc)
    for name in state.spec.parameter_shapes():
        arr = np.ascontiguousarray(state.params[name], dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def save_checkpoint(state, path):
    atomic_write_bytes(path, encode(state))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(f"checkpoint truncated while reading {what}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def done(self):
        return self.pos == len(self.buf)


def decode(buf, spec=None):
    r = _Reader(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CheckpointMagicError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    r.pos = 4
    version = r.u32("format version")
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint format version {version} (this build reads {VERSION})")
    desc = r.take(r.u32("descriptor length"), "descriptor").decode("utf-8")
    try:
        meta = json.loads(desc)
        stored = ModelSpec.from_dict(meta["spec"])
    except (ValueError, KeyError, TypeError, InvalidSpecError) as err:
        raise CheckpointError(f"unreadable spec descriptor: {err}") from err
    if spec is not None and spec.to_dict() != stored.to_dict():
        raise DescriptorMismatchError(
            f"checkpoint holds model {stored.name!r} whose descriptor differs from the requested {spec.name!r}")
    expected = stored.parameter_shapes()
    params = {}
    while not r.done():
        name = r.take(r.u32("parameter name length"), "parameter name").decode("utf-8")
        rank = r.u32(f"rank of {name}")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of {name}"))
        values = r.take(8 * math.prod(dims), f"values of {name}")
        params[name] = np.frombuffer(values, dtype="<f8").astype(np.float64).reshape(dims)
    names = list(expected)
    if len(params) < len(names) and list(params) == names[:len(params)]:
        raise CheckpointTruncatedError(f"checkpoint ends after {len(params)} of {len(names)} parameters")
    if list(params) != names or any(params[k].shape != expected[k] for k in expected):
        raise CheckpointError("parameter records do not match the stored spec")
    return ModelState(stored, params, int(meta.get("seed", 0)))


def load_checkpoint(path, spec=None):
    """Read a checkpoint; if ``spec`` is given the stored descriptor must match it."""
    return decode(Path(path).read_bytes(), spec)
