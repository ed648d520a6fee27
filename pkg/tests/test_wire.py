"""Canonical byte codec tests."""

import pytest

from cpschain.errors import WireError
from cpschain.wire import ByteReader, ByteWriter


def test_round_trip():
    w = ByteWriter()
    w.u8(7).u32(1 << 20).u64(1 << 40).blob(b"hello").raw(b"xy")
    data = w.getvalue()
    r = ByteReader(data)
    assert r.u8() == 7
    assert r.u32() == 1 << 20
    assert r.u64() == 1 << 40
    assert r.blob() == b"hello"
    assert r.raw(2) == b"xy"
    assert r.eof()
    r.expect_eof()


def test_truncation_and_trailing():
    data = ByteWriter().blob(b"abc").getvalue()
    with pytest.raises(WireError):
        ByteReader(data[:-1]).blob()
    r = ByteReader(data + b"\x00")
    r.blob()
    with pytest.raises(WireError):
        r.expect_eof()


def test_identical_values_identical_bytes():
    a = ByteWriter().u32(5).blob(b"k").getvalue()
    b = ByteWriter().u32(5).blob(b"k").getvalue()
    assert a == b
