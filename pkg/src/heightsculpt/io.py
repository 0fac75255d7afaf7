"""HFD binary heightfields and 16-bit PGM import/export."""

from __future__ import annotations

import os
import struct

import numpy as np

from .field import WORKSPACE_MM, HeightField

HFD_MAGIC = b"HFD1"
_HFD_HEADER = struct.Struct("<4sIIff")


class FormatError(ValueError):
    pass


def encode_hfd(values: np.ndarray, cell_size: float, d_max: float) -> bytes:
    values = np.asarray(values)
    if values.ndim != 2:
        raise FormatError("HFD stores 2D grids only")
    h, w = values.shape
    head = _HFD_HEADER.pack(HFD_MAGIC, w, h, cell_size, d_max)
    return head + values.astype("<f4").tobytes(order="C")


def decode_hfd(buf: bytes) -> tuple[np.ndarray, float, float]:
    if len(buf) < _HFD_HEADER.size:
        raise FormatError("truncated HFD header")
    magic, w, h, cs, d_max = _HFD_HEADER.unpack_from(buf)
    if magic != HFD_MAGIC:
        raise FormatError(f"bad HFD magic {magic!r}")
    body = buf[_HFD_HEADER.size :]
    if len(body) != 4 * w * h:
        raise FormatError(f"HFD body has {len(body)} bytes, expected {4 * w * h}")
    values = np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
    return values, float(cs), float(d_max)


def write_hfd_array(path, values, cell_size: float, d_max: float) -> None:
    with open(path, "wb") as f:
        f.write(encode_hfd(values, cell_size, d_max))


def read_hfd_array(path) -> tuple[np.ndarray, float, float]:
    """Raw grid plus (cell_size, d_max); no range checks, so deltas load too."""
    with open(path, "rb") as f:
        return decode_hfd(f.read())


def write_hfd(path, field: HeightField) -> None:
    write_hfd_array(path, field.depths, field.cell_size, field.d_max)


def read_hfd(path) -> HeightField:
    values, cs, d_max = read_hfd_array(path)
    return HeightField(values, cs, d_max)


def quantize_f32(field: HeightField) -> HeightField:
    """The field as it would come back from an HFD round trip."""
    f32 = lambda v: float(np.float32(v))  # noqa: E731
    return HeightField(field.depths.astype(np.float32).astype(np.float64), f32(field.cell_size), f32(field.d_max))


def write_pgm(path, field: HeightField) -> None:
    """16-bit binary PGM, 0 -> depth 0 and 65535 -> d_max."""
    scaled = np.clip(field.depths / field.d_max, 0.0, 1.0) * 65535.0
    data = np.rint(scaled).astype(">u2")
    h, w = field.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(data.tobytes())


def _pgm_tokens(buf: bytes):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path, d_max: float, cell_size: float | None = None) -> HeightField:
    with open(path, "rb") as f:
        buf = f.read()
    tokens, offset = _pgm_tokens(buf)
    if tokens[0] != b"P5":
        raise FormatError(f"expected binary PGM (P5), got {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    count = w * h
    raw = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    depths = raw.reshape(h, w).astype(np.float64) / maxval * d_max
    if cell_size is None:
        cell_size = WORKSPACE_MM / max(h, w)
    return HeightField(depths, cell_size, d_max)


def read_goal(path, d_max: float, cell_size: float | None = None) -> HeightField:
    """Load a goal depth map from .hfd or .pgm by extension."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pgm":
        return read_pgm(path, d_max, cell_size)
    if ext == ".hfd":
        return read_hfd(path)
    raise FormatError(f"unsupported goal format {ext!r} (use .hfd or .pgm)")
