"""Canonical binary encoding helpers.

All persistent artifacts (credentials, transactions, blocks, ledger
exports) use the same deterministic layout: fixed-width big-endian
integers and u32-length-prefixed byte strings. Two encodings of equal
values are bit-identical, which is what the determinism guarantees and
the hash-linked structures rely on.
"""

from __future__ import annotations

from .errors import WireError


class ByteWriter:
    def __init__(self):
        self._parts: list[bytes] = []

    def u8(self, v: int) -> "ByteWriter":
        self._parts.append(v.to_bytes(1, "big"))
        return self

    def u32(self, v: int) -> "ByteWriter":
        self._parts.append(v.to_bytes(4, "big"))
        return self

    def u64(self, v: int) -> "ByteWriter":
        self._parts.append(v.to_bytes(8, "big"))
        return self

    def raw(self, b: bytes) -> "ByteWriter":
        self._parts.append(b)
        return self

    def blob(self, b: bytes) -> "ByteWriter":
        """Length-prefixed byte string."""
        self.u32(len(b))
        self._parts.append(b)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class ByteReader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise WireError(f"truncated input: need {n} bytes at offset {self._pos}")
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self._take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self._take(8), "big")

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def eof(self) -> bool:
        return self._pos == len(self._data)

    def expect_eof(self) -> None:
        if not self.eof():
            raise WireError(f"{len(self._data) - self._pos} trailing bytes")
