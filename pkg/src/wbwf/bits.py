"""MSB-first bit strings and the 802.11 CRC-32."""

from __future__ import annotations

from dataclasses import dataclass

CRC32_POLY_REFLECTED = 0xEDB88320
CRC32_RESIDUE = 0x2144DF1C


def _make_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ CRC32_POLY_REFLECTED if crc & 1 else crc >> 1
        table.append(crc)
    return table


_TABLE = _make_table()


@dataclass(frozen=True)
class BitString:
    """An immutable bit string; bit 0 is the most significant bit of ``value``."""

    value: int
    length: int

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("negative length")
        if self.value < 0 or self.value >> self.length:
            raise ValueError(f"value does not fit in {self.length} bits")

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(i)
        return (self.value >> (self.length - 1 - i)) & 1

    def __add__(self, other: "BitString") -> "BitString":
        return BitString((self.value << other.length) | other.value, self.length + other.length)

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""

    def slice(self, start: int, stop: int) -> "BitString":
        if not 0 <= start <= stop <= self.length:
            raise IndexError((start, stop))
        n = stop - start
        return BitString((self.value >> (self.length - stop)) & ((1 << n) - 1), n)

    def flip(self, i: int) -> "BitString":
        if not 0 <= i < self.length:
            raise IndexError(i)
        return BitString(self.value ^ (1 << (self.length - 1 - i)), self.length)

    def to_bytes(self) -> bytes:
        """Left-aligned bytes; a trailing partial byte is zero-filled."""
        nbytes = -(-self.length // 8)
        return (self.value << (nbytes * 8 - self.length)).to_bytes(nbytes, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_bytes(cls, data: bytes, length: int | None = None) -> "BitString":
        total = len(data) * 8
        length = total if length is None else length
        if not total - 8 < length <= total and not (length == 0 and total == 0):
            raise ValueError(f"{len(data)} bytes cannot hold exactly {length} bits")
        value = int.from_bytes(data, "big") >> (total - length)
        return cls(value, length)

    @classmethod
    def from_hex(cls, text: str, length: int | None = None) -> "BitString":
        return cls.from_bytes(bytes.fromhex("".join(text.split())), length)

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        return cls(int(text, 2) if text else 0, len(text))


class BitWriter:
    def __init__(self):
        self._value = 0
        self._length = 0

    def write(self, value: int, width: int, name: str = "field") -> None:
        if value < 0 or value >> width:
            raise ValueError(f"{name}={value} does not fit in {width} bits")
        self._value = (self._value << width) | value
        self._length += width

    def write_bits(self, bits: BitString) -> None:
        self._value = (self._value << bits.length) | bits.value
        self._length += bits.length

    def __len__(self) -> int:
        return self._length

    def bits(self) -> BitString:
        return BitString(self._value, self._length)


class BitReader:
    def __init__(self, bits: BitString):
        self._bits = bits
        self.pos = 0

    def read(self, width: int) -> int:
        end = self.pos + width
        if end > self._bits.length:
            raise EOFError(f"read of {width} bits past end at {self.pos}")
        v = (self._bits.value >> (self._bits.length - end)) & ((1 << width) - 1)
        self.pos = end
        return v

    @property
    def remaining(self) -> int:
        return self._bits.length - self.pos


def fcs32(data: BitString | bytes) -> int:
    """IEEE 802.11 FCS (reflected CRC-32, init and final XOR all ones).

    Each 8-bit group of the bit string is consumed least-significant bit
    first, like a byte on the air, so byte-aligned input gives the usual
    CRC-32 of its bytes. A trailing partial group is consumed the same way.
    """
    if isinstance(data, (bytes, bytearray)):
        data = BitString.from_bytes(bytes(data))
    crc = 0xFFFFFFFF
    whole = data.length // 8
    raw = data.to_bytes()
    for byte in raw[:whole]:
        crc = (crc >> 8) ^ _TABLE[(crc ^ byte) & 0xFF]
    tail = data.length - whole * 8
    if tail:
        group = raw[whole] >> (8 - tail)
        for k in range(tail):
            bit = (group >> k) & 1
            crc = (crc >> 1) ^ CRC32_POLY_REFLECTED if (crc ^ bit) & 1 else crc >> 1
    return crc ^ 0xFFFFFFFF


def fcs_field(crc: int) -> BitString:
    """The FCS as it sits on the air: four bytes, least significant first."""
    return BitString(int.from_bytes(crc.to_bytes(4, "little"), "big"), 32)


def fcs_from_field(bits: BitString) -> int:
    return int.from_bytes(bits.value.to_bytes(4, "big"), "little")
