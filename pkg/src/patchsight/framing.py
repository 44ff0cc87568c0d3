"""Little-endian binary framing used by the model and embedding containers.

All multi-byte integers are little-endian; float arrays are stored as
length-prefixed float32; every container ends with a CRC32 of all preceding
bytes so silent corruption never produces a partial model.
"""

import struct
import zlib

import numpy as np

from .errors import CorruptModelError, FramingError


class ByteWriter:
    def __init__(self):
        self._buf = bytearray()

    def raw(self, data: bytes):
        self._buf += data

    def u8(self, v: int):
        self._buf += struct.pack("<B", v)

    def u16(self, v: int):
        self._buf += struct.pack("<H", v)

    def u32(self, v: int):
        self._buf += struct.pack("<I", v)

    def u64(self, v: int):
        self._buf += struct.pack("<Q", v)

    def f64(self, v: float):
        self._buf += struct.pack("<d", v)

    def utf8(self, s: str):
        data = s.encode("utf-8")
        self.u32(len(data))
        self.raw(data)

    def f32_array(self, arr: np.ndarray):
        flat = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
        self.u64(flat.size)
        self.raw(flat.tobytes())

    def finish_with_crc(self) -> bytes:
        """Append CRC32 of everything written so far and return the bytes."""
        self.u32(zlib.crc32(bytes(self._buf)))
        return bytes(self._buf)

    def __bytes__(self) -> bytes:
        return bytes(self._buf)


class ByteReader:
    """Bounds-checked sequential reader; overruns raise FramingError."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def raw(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise FramingError(
                f"truncated container: needed {n} bytes at offset {self._pos}, "
                f"have {self.remaining}"
            )
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.raw(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.raw(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.raw(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.raw(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.raw(8))[0]

    def utf8(self) -> str:
        n = self.u32()
        return self.raw(n).decode("utf-8")

    def f32_array(self) -> np.ndarray:
        count = self.u64()
        data = self.raw(count * 4)
        return np.frombuffer(data, dtype="<f4").astype(np.float64)

    def expect_end(self):
        if self.remaining != 0:
            raise FramingError(f"{self.remaining} trailing bytes after payload")


def check_crc(data: bytes, magic: bytes) -> bytes:
    """Validate a container's CRC32 footer and magic; return the body bytes.

    The CRC is checked first so any single flipped byte (including in the
    magic or the CRC itself) is reported. A file whose own length prefixes
    point past its end is reported as truncation rather than corruption.
    """
    if len(data) < len(magic) + 4:
        raise FramingError(f"container too short ({len(data)} bytes)")
    body, tail = data[:-4], data[-4:]
    if zlib.crc32(body) != struct.unpack("<I", tail)[0]:
        raise CorruptModelError("CRC32 mismatch: container bytes are corrupted")
    if body[: len(magic)] != magic:
        raise FramingError(
            f"bad magic {body[:len(magic)]!r}, expected {magic!r}"
        )
    return body
