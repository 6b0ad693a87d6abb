import zlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import crc32_of_bitstring, crc32_shift_register
from wbwf.bits import CRC32_RESIDUE, BitReader, BitString, BitWriter, fcs32, fcs_field, fcs_from_field


class TestCrc:
    def test_check_string(self):
        assert fcs32(b"123456789") == 0xCBF43926
        assert zlib.crc32(b"123456789") == 0xCBF43926

    def test_empty_input(self):
        # init and final xor cancel on an empty message
        assert fcs32(b"") == 0
        assert crc32_shift_register("") == 0
        assert zlib.crc32(b"") == 0

    @given(st.binary(max_size=300))
    def test_matches_zlib(self, data):
        assert fcs32(data) == zlib.crc32(data)

    @given(st.integers(0, 2000).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, (1 << n) - 1 if n else 0))))
    def test_matches_shift_register_on_any_length(self, nv):
        n, v = nv
        bits = BitString(v, n)
        assert fcs32(bits) == crc32_of_bitstring(str(bits))

    @given(st.binary(min_size=1, max_size=200))
    def test_residue(self, data):
        # CRC over message + its on-air FCS is a constant
        bits = BitString.from_bytes(data)
        framed = bits + fcs_field(fcs32(bits))
        assert fcs32(framed) == CRC32_RESIDUE
        assert zlib.crc32(data + zlib.crc32(data).to_bytes(4, "little")) == 0x2144DF1C

    def test_fcs_field_little_endian(self):
        f = fcs_field(0xCBF43926)
        assert f.to_bytes() == bytes([0x26, 0x39, 0xF4, 0xCB])
        assert fcs_from_field(f) == 0xCBF43926


class TestBitString:
    def test_msb_first(self):
        b = BitString.from_str("1011")
        assert [b[i] for i in range(4)] == [1, 0, 1, 1]
        assert b.value == 0b1011

    def test_bytes_left_aligned(self):
        assert BitString.from_str("101").to_bytes() == b"\xa0"
        assert BitString.from_bytes(b"\xa0", 3) == BitString.from_str("101")

    def test_rejects_impossible_length(self):
        with pytest.raises(ValueError):
            BitString.from_bytes(b"\x00\x00", 3)

    def test_value_must_fit(self):
        with pytest.raises(ValueError):
            BitString(4, 2)

    @given(st.text("01", max_size=100), st.text("01", max_size=100))
    def test_concat_and_slice(self, a, b):
        x = BitString.from_str(a) + BitString.from_str(b)
        assert str(x) == a + b
        assert str(x.slice(len(a), len(a) + len(b))) == b

    @given(st.text("01", min_size=1, max_size=64), st.data())
    def test_flip(self, s, data):
        i = data.draw(st.integers(0, len(s) - 1))
        flipped = str(BitString.from_str(s).flip(i))
        assert sum(p != q for p, q in zip(s, flipped)) == 1 and flipped[i] != s[i]


class TestWriterReader:
    @given(st.lists(st.integers(1, 64).flatmap(lambda w: st.tuples(st.just(w), st.integers(0, (1 << w) - 1)))))
    def test_round_trip(self, fields):
        w = BitWriter()
        for width, value in fields:
            w.write(value, width)
        assert len(w) == sum(width for width, _ in fields)
        r = BitReader(w.bits())
        assert [r.read(width) for width, _ in fields] == [v for _, v in fields]
        assert r.remaining == 0

    def test_overflow_names_field(self):
        with pytest.raises(ValueError, match="frame_index"):
            BitWriter().write(8, 3, "frame_index")

    def test_read_past_end(self):
        with pytest.raises(EOFError):
            BitReader(BitString.from_str("101")).read(4)
