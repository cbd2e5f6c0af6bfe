"""Little-endian binary readers/writers used by all file formats."""

import struct

import numpy as np

from .errors import DecodeError


class ByteReader:
    """Sequential reader over a bytes object; running past the end raises DecodeError."""

    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.pos = offset

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError(
                f"truncated data: need {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes):
        got = self.take(len(expected))
        if got != expected:
            raise DecodeError(f"bad magic: expected {expected!r}, got {got!r}")

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self.take(4))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]

    def f32_array(self, count: int, shape=None) -> np.ndarray:
        arr = np.frombuffer(self.take(4 * count), dtype="<f4").copy()
        return arr.reshape(shape) if shape is not None else arr

    def i32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<i4").copy()

    def done(self) -> bool:
        return self.pos == len(self.data)


def u8(v: int) -> bytes:
    return struct.pack("<B", v)


def u16(v: int) -> bytes:
    return struct.pack("<H", v)


def u32(v: int) -> bytes:
    return struct.pack("<I", v)


def u64(v: int) -> bytes:
    return struct.pack("<Q", v)


def i32(v: int) -> bytes:
    return struct.pack("<i", v)


def f32(v: float) -> bytes:
    return struct.pack("<f", v)


def f32_array(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def i32_array(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<i4").tobytes()
