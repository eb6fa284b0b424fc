"""Reader/writer for the big-endian IDX container used by MNIST-style datasets."""

from __future__ import annotations

import struct
from os import PathLike

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_UBYTE = 0x08


class IdxFormatError(ValueError):
    """Malformed, truncated or unexpected IDX file."""


def parse_idx(buf: bytes, expect: str | None = None) -> np.ndarray:
    """Decode an IDX byte string into a ``uint8`` array of the header's shape.

    ``expect`` may be ``"images"`` (3-d, magic 0x803) or ``"labels"``
    (1-d, magic 0x801); a different magic raises :class:`IdxFormatError`.
    """
    if len(buf) < 4:
        raise IdxFormatError(f"truncated IDX file: {len(buf)} bytes, header needs at least 4")
    (magic,) = struct.unpack(">I", buf[:4])
    zero, dtype_code, ndim = magic >> 16, (magic >> 8) & 0xFF, magic & 0xFF
    if zero != 0 or dtype_code != _UBYTE or ndim == 0:
        raise IdxFormatError(f"bad IDX magic 0x{magic:08x}")
    if expect == "images" and magic != IMAGES_MAGIC:
        raise IdxFormatError(f"expected image file (0x{IMAGES_MAGIC:08x}), got magic 0x{magic:08x}")
    if expect == "labels" and magic != LABELS_MAGIC:
        raise IdxFormatError(f"expected label file (0x{LABELS_MAGIC:08x}), got magic 0x{magic:08x}")
    header_end = 4 + 4 * ndim
    if len(buf) < header_end:
        raise IdxFormatError("truncated IDX header")
    dims = struct.unpack(f">{ndim}I", buf[4:header_end])
    n = int(np.prod(dims, dtype=np.int64))
    payload = len(buf) - header_end
    if payload < n:
        raise IdxFormatError(f"truncated IDX payload: header declares {n} bytes, found {payload}")
    if payload > n:
        raise IdxFormatError(f"IDX payload has {payload} bytes but header dimensions {dims} need {n}")
    return np.frombuffer(buf, dtype=np.uint8, offset=header_end).reshape(dims).copy()


def load_idx(path: str | PathLike, expect: str | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_idx(fh.read(), expect)


def encode_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise TypeError("only uint8 IDX payloads are supported")
    magic = (_UBYTE << 8) | array.ndim
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    return header + np.ascontiguousarray(array).tobytes()


def write_idx(path: str | PathLike, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_idx(array))
