"""Dense tensors, quantized tensors and the QTNS binary file format.

Real-valued tensors are plain float32 numpy arrays in NHWC layout
(batch, height, width, channels). The helpers here only enforce that
contract; everything else is ordinary numpy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from edgerestore.errors import DataError, ShapeError

QTNS_MAGIC = b"QTNS"
QTNS_VERSION = 1
DTYPE_FLOAT32 = 0
DTYPE_UINT8 = 1

PathLike = Union[str, Path]


@dataclass(frozen=True)
class QuantParams:
    """Affine mapping ``real = (q - zero_point) * scale`` for uint8 values."""

    scale: float
    zero_point: int

    def __post_init__(self):
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not 0 <= int(self.zero_point) <= 255 or int(self.zero_point) != self.zero_point:
            raise ValueError(f"zero_point must be an integer in [0, 255], got {self.zero_point}")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "zero_point", int(self.zero_point))

    @property
    def real_min(self) -> float:
        return (0 - self.zero_point) * self.scale

    @property
    def real_max(self) -> float:
        return (255 - self.zero_point) * self.scale

    def to_dict(self) -> dict:
        return {"scale": self.scale, "zero_point": self.zero_point}

    @classmethod
    def from_dict(cls, d: dict) -> "QuantParams":
        return cls(float(d["scale"]), int(d["zero_point"]))


@dataclass(frozen=True, eq=False)
class QuantTensor:
    data: np.ndarray  # uint8, NHWC
    params: QuantParams

    def __post_init__(self):
        if self.data.dtype != np.uint8:
            raise ShapeError(f"QuantTensor payload must be uint8, got {self.data.dtype}")
        _check_dims(self.data.shape)

    @property
    def shape(self) -> tuple:
        return self.data.shape


def _check_dims(dims: Sequence[int]) -> None:
    if len(dims) == 0:
        raise ShapeError("tensor dims must be non-empty")
    if any(int(d) < 1 for d in dims):
        raise ShapeError(f"all tensor dims must be >= 1, got {list(dims)}")


def tensor_create(dims: Sequence[int], fill: float = 0.0) -> np.ndarray:
    _check_dims(dims)
    return np.full(tuple(int(d) for d in dims), fill, dtype=np.float32)


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float32 array, validating its dims."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    _check_dims(arr.shape)
    return arr


def slice_channel(t: np.ndarray, c: int) -> np.ndarray:
    if not 0 <= c < t.shape[-1]:
        raise IndexError(f"channel {c} out of range for {t.shape[-1]} channels")
    return t[..., c : c + 1].copy()


def stack_channels(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.ascontiguousarray(np.concatenate(parts, axis=-1))


def equal_approx(a: np.ndarray, b: np.ndarray, atol: float) -> bool:
    if np.shape(a) != np.shape(b):
        return False
    if np.size(a) == 0:
        return True
    diff = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return bool(diff.max() <= atol)


# --- QTNS file format -------------------------------------------------------


def encode_tensor(t: Union[np.ndarray, QuantTensor]) -> bytes:
    if isinstance(t, QuantTensor):
        arr, params, dtype = t.data, t.params, DTYPE_UINT8
    else:
        arr, params, dtype = np.asarray(t), None, DTYPE_FLOAT32
        if arr.dtype != np.float32:
            raise ShapeError(f"only float32 and QuantTensor can be encoded, got {arr.dtype}")
    _check_dims(arr.shape)
    if arr.ndim > 255:
        raise ShapeError("rank must fit in one byte")
    header = QTNS_MAGIC + struct.pack("<IBB", QTNS_VERSION, dtype, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    if params is not None:
        header += struct.pack("<di", params.scale, params.zero_point)
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return header + np.ascontiguousarray(le).tobytes()


def decode_tensor(buf: bytes) -> Union[np.ndarray, QuantTensor]:
    if buf[:4] != QTNS_MAGIC:
        raise DataError("not a QTNS tensor (bad magic)")
    try:
        version, dtype, rank = struct.unpack_from("<IBB", buf, 4)
        if version != QTNS_VERSION:
            raise DataError(f"unsupported QTNS version {version}")
        pos = 10
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        params = None
        if dtype == DTYPE_UINT8:
            scale, zp = struct.unpack_from("<di", buf, pos)
            pos += 12
            params = QuantParams(scale, zp)
            np_dtype = np.dtype("<u1")
        elif dtype == DTYPE_FLOAT32:
            np_dtype = np.dtype("<f4")
        else:
            raise DataError(f"unknown QTNS dtype code {dtype}")
    except struct.error as exc:
        raise DataError(f"truncated QTNS header: {exc}") from exc
    count = int(np.prod(dims)) if rank else 0
    if len(buf) - pos != count * np_dtype.itemsize:
        raise DataError(
            f"QTNS payload has {len(buf) - pos} bytes, expected {count * np_dtype.itemsize}"
        )
    data = np.frombuffer(buf, dtype=np_dtype, count=count, offset=pos).reshape(dims)
    data = data.astype(np_dtype.newbyteorder("="))
    if params is not None:
        return QuantTensor(data, params)
    return data


def save_tensor(path: PathLike, t: Union[np.ndarray, QuantTensor]) -> None:
    Path(path).write_bytes(encode_tensor(t))


def load_tensor(path: PathLike) -> Union[np.ndarray, QuantTensor]:
    return decode_tensor(Path(path).read_bytes())


def read_pgm(path: PathLike) -> np.ndarray:
    """Read a binary (P5) 8- or 16-bit PGM into a 1xHxWx1 tensor scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PGM header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise DataError("only binary P5 PGM files are supported")
    width, height, maxval = (int(t) for t in tokens[1:])
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    pixels = np.frombuffer(raw, dtype=dtype, count=width * height, offset=pos)
    img = pixels.astype(np.float32).reshape(1, height, width, 1) / np.float32(maxval)
    return np.ascontiguousarray(img)


def write_pgm(path: PathLike, image: np.ndarray, bits: int = 8) -> None:
    img = np.clip(np.asarray(image, dtype=np.float64).reshape(image.shape[-3], image.shape[-2]), 0, 1)
    maxval = 255 if bits == 8 else 65535
    dtype = np.dtype("u1") if bits == 8 else np.dtype(">u2")
    pixels = np.rint(img * maxval).astype(dtype)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode()
    Path(path).write_bytes(header + pixels.tobytes())
