"""MSB-first bit sink and source."""


class CorruptStreamError(ValueError):
    """The payload ended early or holds an impossible code."""


class BitWriter:
    __slots__ = ("_buf", "_acc", "_nacc", "nbits")

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nacc = 0
        self.nbits = 0

    def write_bit(self, bit: int) -> None:
        self._acc = (self._acc << 1) | (bit & 1)
        self._nacc += 1
        self.nbits += 1
        if self._nacc == 8:
            self._buf.append(self._acc)
            self._acc = 0
            self._nacc = 0

    def write_bits(self, value: int, n: int) -> None:
        for shift in range(n - 1, -1, -1):
            self.write_bit((value >> shift) & 1)

    def getvalue(self) -> bytes:
        """Bytes written so far, last byte zero-padded."""
        if self._nacc:
            return bytes(self._buf) + bytes([self._acc << (8 - self._nacc)])
        return bytes(self._buf)

    def bitstring(self) -> str:
        return "".join(str(b) for b in _iter_bits(self.getvalue()))[:self.nbits]


def _iter_bits(data: bytes):
    for byte in data:
        for shift in range(7, -1, -1):
            yield (byte >> shift) & 1


class BitReader:
    __slots__ = ("data", "pos", "limit")

    def __init__(self, data: bytes, nbits: int | None = None):
        self.data = bytes(data)
        self.pos = 0
        self.limit = len(self.data) * 8 if nbits is None else nbits

    @classmethod
    def from_bitstring(cls, bits: str) -> "BitReader":
        padded = bits + "0" * (-len(bits) % 8)
        data = bytes(int(padded[i:i + 8], 2) for i in range(0, len(padded), 8))
        return cls(data, nbits=len(bits))

    @property
    def remaining(self) -> int:
        return self.limit - self.pos

    def read_bit(self) -> int:
        if self.pos >= self.limit:
            raise CorruptStreamError("bit stream exhausted")
        bit = (self.data[self.pos >> 3] >> (7 - (self.pos & 7))) & 1
        self.pos += 1
        return bit

    def read_bits(self, n: int) -> int:
        v = 0
        for _ in range(n):
            v = (v << 1) | self.read_bit()
        return v
