"""P2D1 checkpoints: magic, length-prefixed JSON header, then named f32 tensors."""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

from .model import DynamicsModel, ModelConfig, build_net

MAGIC = b"P2D1"


class CheckpointError(ValueError):
    pass


def encode_checkpoint(model: DynamicsModel) -> bytes:
    header = json.dumps({"config": model.config.to_dict(), "meta": model.meta}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    state = model.net.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, t in state.items():
        arr = t.detach().cpu().numpy().astype("<f4")
        raw = name.encode()
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> DynamicsModel:
    if buf[:4] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {buf[:4]!r}")
    pos = 4

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    try:
        (hlen,) = take("<I")
        header = json.loads(buf[pos : pos + hlen])
        pos += hlen
        cfg = ModelConfig.from_dict(header["config"])
        (count,) = take("<I")
        tensors = {}
        for _ in range(count):
            (nlen,) = take("<I")
            name = buf[pos : pos + nlen].decode()
            pos += nlen
            (ndim,) = take("<I")
            shape = take(f"<{ndim}I") if ndim else ()
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
            tensors[name] = torch.from_numpy(arr.astype(np.float32))
    except (struct.error, ValueError, KeyError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from e
    net = build_net(cfg)
    try:
        net.load_state_dict(tensors)
    except RuntimeError as e:
        raise CheckpointError(f"checkpoint does not match its config: {e}") from e
    return DynamicsModel(cfg, net, header.get("meta", {}))


def save_checkpoint(path, model: DynamicsModel) -> None:
    with open(path, "wb") as f:
        f.write(encode_checkpoint(model))


def load_checkpoint(path) -> DynamicsModel:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())
