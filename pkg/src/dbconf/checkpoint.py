"""Binary checkpoint format.

Layout: magic "DBCF", version u32, length-prefixed config text
(key=value lines), then one length-prefixed record per array:
name, ndim, dims (u32 each), float64 little-endian payload. Batchnorm
running statistics are stored as records named *.running_mean /
*.running_var. Round-trips are byte-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .autodiff import BatchNormState, Tensor
from .model import Model, ModelConfig

MAGIC = b"DBCF"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode_config(cfg: ModelConfig) -> bytes:
    lines = [f"{k}={v!r}" for k, v in sorted(cfg.to_dict().items())]
    return "\n".join(lines).encode()


def _decode_config(blob: bytes) -> ModelConfig:
    import ast
    d = {}
    for line in blob.decode().splitlines():
        k, v = line.split("=", 1)
        d[k] = ast.literal_eval(v)
    return ModelConfig.from_dict(d)


def _records(model: Model):
    for name in sorted(model.params):
        yield name, model.params[name].data
    for name in sorted(model.bn):
        yield f"{name}.running_mean", model.bn[name].mean
        yield f"{name}.running_var", model.bn[name].var


def save(path, model: Model):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        blob = _encode_config(model.cfg)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, arr in _records(model):
            nb = name.encode()
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load(path) -> Model:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (clen,) = struct.unpack_from("<I", raw, 8)
    off = 12
    cfg = _decode_config(raw[off:off + clen])
    off += clen
    arrays = {}
    while off < len(raw):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(raw, "<f8", count, off).reshape(shape).copy()
        off += 8 * count
    params, bn = {}, {}
    for name, arr in arrays.items():
        if name.endswith(".running_mean"):
            bn.setdefault(name[:-13], BatchNormState(len(arr))).mean = arr
        elif name.endswith(".running_var"):
            bn.setdefault(name[:-12], BatchNormState(len(arr))).var = arr
        else:
            params[name] = Tensor(arr, requires_grad=True)
    return Model(cfg, params=params, bn=bn)
