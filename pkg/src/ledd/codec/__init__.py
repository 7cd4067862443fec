"""Near-lossless predictive codec with a hard per-pixel error bound.

Each pixel is predicted from already reconstructed neighbours with the
median edge detector, the residual is quantized with step ``2*tau + 1``
and the quantization index is Golomb-Rice coded under one of eight
activity contexts. Encoder and decoder predict from the same reconstructed
plane, so ``|x - y| <= tau`` holds at every pixel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..imageio import GrayImage
from . import kernels
from .bitio import BitReader, BitWriter, CorruptStreamError
from .kernels import (
    A_INIT,
    ESCAPE_RUN,
    K_MAX,
    N_INIT,
    NUM_CONTEXTS,
    RAW_BITS,
    RESET_AT,
    choose_k,
    map_signed,
    unmap_signed,
)

MAGIC = b"LNLC"
VERSION = 1
MAX_TAU = 8
HEADER = struct.Struct("<4sBIIB")

__all__ = [
    "BitReader", "BitWriter", "CausalContext", "CodeStream", "CoderState",
    "CodecError", "BadMagicError", "UnsupportedVersionError", "HeaderError",
    "CorruptStreamError", "TrailingDataError", "MAX_TAU",
    "predict_med", "quantize_residual", "context_id", "map_signed",
    "unmap_signed", "choose_k", "golomb_rice_encode", "golomb_rice_decode",
    "encode_image", "decode_image", "bits_per_pixel",
]


class CodecError(ValueError):
    pass


class BadMagicError(CodecError):
    pass


class UnsupportedVersionError(CodecError):
    pass


class HeaderError(CodecError):
    pass


class TrailingDataError(CodecError):
    pass


class CausalContext(NamedTuple):
    """Reconstructed north, west and north-west neighbours."""
    n: int
    w: int
    nw: int


class ResidualCode(NamedTuple):
    e: int
    q: int
    e_hat: int


def predict_med(ctx: CausalContext) -> int:
    return int(kernels.predict_med(int(ctx.n), int(ctx.w), int(ctx.nw)))


def quantize_residual(e: int, tau: int) -> ResidualCode:
    q = int(kernels.quantize_index(int(e), int(tau)))
    return ResidualCode(int(e), q, q * (2 * tau + 1))


def context_id(ctx: CausalContext, ne: int) -> int:
    return int(kernels.context_index(int(ctx.n), int(ctx.w), int(ne)))


def golomb_rice_encode(writer: BitWriter, u: int, k: int) -> None:
    if not 0 <= k <= K_MAX:
        raise ValueError(f"Rice parameter {k} outside [0, {K_MAX}]")
    if u < 0:
        raise ValueError("Golomb-Rice codes non-negative values only")
    p = u >> k
    if p < ESCAPE_RUN:
        writer.write_bits((1 << p) - 1, p)
        writer.write_bit(0)
        writer.write_bits(u & ((1 << k) - 1), k)
    else:
        if u >= 1 << RAW_BITS:
            raise ValueError(f"escape value {u} does not fit {RAW_BITS} bits")
        writer.write_bits((1 << ESCAPE_RUN) - 1, ESCAPE_RUN)
        writer.write_bit(0)
        writer.write_bits(u, RAW_BITS)


def golomb_rice_decode(reader: BitReader, k: int) -> int:
    run = 0
    while reader.read_bit():
        run += 1
        if run > ESCAPE_RUN:
            raise CorruptStreamError("unary run longer than the escape length")
    if run == ESCAPE_RUN:
        return reader.read_bits(RAW_BITS)
    return (run << k) | reader.read_bits(k)


class CoderState:
    """Per-context magnitude sums and counts driving the Rice parameter."""

    def __init__(self):
        self.A = [A_INIT] * NUM_CONTEXTS
        self.N = [N_INIT] * NUM_CONTEXTS

    def k(self, ctx: int) -> int:
        return int(choose_k(self.A[ctx], self.N[ctx]))

    def update(self, ctx: int, q: int) -> None:
        self.A[ctx] = max(self.A[ctx] + abs(q), 1)
        self.N[ctx] += 1
        if self.N[ctx] == RESET_AT:
            self.A[ctx] = (self.A[ctx] + 1) >> 1
            self.N[ctx] = (self.N[ctx] + 1) >> 1

    def snapshot(self):
        return tuple(self.A), tuple(self.N)


@dataclass(frozen=True)
class CodeStream:
    width: int
    height: int
    tau: int
    payload: bytes

    def to_bytes(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, self.width, self.height, self.tau) + self.payload

    @property
    def nbytes(self) -> int:
        return HEADER.size + len(self.payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CodeStream":
        if len(data) < 4 or data[:4] != MAGIC:
            raise BadMagicError(f"bad magic {bytes(data[:4])!r}")
        if len(data) < HEADER.size:
            raise HeaderError("stream shorter than its header")
        _, version, width, height, tau = HEADER.unpack_from(data)
        if version != VERSION:
            raise UnsupportedVersionError(f"stream version {version}, expected {VERSION}")
        if width < 1 or height < 1:
            raise HeaderError(f"bad dimensions {width}x{height}")
        if tau > MAX_TAU:
            raise HeaderError(f"tau {tau} exceeds {MAX_TAU}")
        return cls(width, height, tau, bytes(data[HEADER.size:]))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CodeStream":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _check_tau(tau):
    if not (isinstance(tau, (int, np.integer)) and 0 <= tau <= MAX_TAU):
        raise ValueError(f"tau must be an integer in [0, {MAX_TAU}], got {tau!r}")


def encode_image(img: GrayImage, tau: int):
    """Return ``(CodeStream, reconstruction)``; the reconstruction is what the decoder will produce."""
    _check_tau(tau)
    payload, rec = kernels.encode_plane(img.pixels, int(tau))
    stream = CodeStream(img.width, img.height, int(tau), payload.tobytes())
    return stream, GrayImage(rec)


def decode_image(stream) -> GrayImage:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = CodeStream.from_bytes(bytes(stream))
    payload = np.frombuffer(stream.payload, dtype=np.uint8)
    rec, status = kernels.decode_plane(payload, stream.height, stream.width, stream.tau)
    if status == kernels.TRAILING:
        raise TrailingDataError("bytes remain after the last pixel")
    if status == kernels.EXHAUSTED:
        raise CorruptStreamError("payload ended before the last pixel")
    if status == kernels.BAD_UNARY:
        raise CorruptStreamError("unary run longer than the escape length")
    if status == kernels.BAD_PADDING:
        raise CorruptStreamError("non-zero padding bits")
    return GrayImage(rec)


def bits_per_pixel(stream: CodeStream, img: GrayImage | None = None) -> float:
    """Total stream size (header included) in bits per pixel."""
    if img is not None and (img.width, img.height) != (stream.width, stream.height):
        raise ValueError("stream and image dimensions differ")
    return 8.0 * stream.nbytes / (stream.width * stream.height)
