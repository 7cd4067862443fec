"""8-bit grayscale rasters: binary PGM I/O, patching, normalization."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class PGMError(ValueError):
    """Base class for PGM parse failures."""


class UnsupportedFormatError(PGMError):
    pass


class BadHeaderError(PGMError):
    pass


class MaxvalError(PGMError):
    pass


class TruncatedPayloadError(PGMError):
    pass


@dataclass(eq=False)
class GrayImage:
    """Single-channel 8-bit image; ``pixels`` is a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D raster, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("samples must lie in [0, 255]")
            px = px.astype(np.uint8)
        self.pixels = np.ascontiguousarray(px)

    @classmethod
    def from_samples(cls, width: int, height: int, samples) -> "GrayImage":
        arr = np.asarray(samples)
        if arr.size != width * height:
            raise ValueError(f"{arr.size} samples for a {width}x{height} image")
        return cls(arr.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def samples(self) -> np.ndarray:
        """Row-major flat view of the samples."""
        return self.pixels.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


def _header_tokens(data: bytes, count: int):
    """Pull ``count`` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last one.
    """
    tokens = []
    i, n = 0, len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in (0x0A, 0x0D):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i] != ord("#"):
            i += 1
        if start == i:
            raise BadHeaderError("PGM header ended early")
        tokens.append(data[start:i])
    if i >= n or not data[i:i + 1].isspace():
        raise BadHeaderError("PGM header must end with a single whitespace byte")
    return tokens, i


def parse_pgm(data: bytes) -> GrayImage:
    if data[:2] != b"P5":
        raise UnsupportedFormatError(f"unsupported format {data[:2]!r}, only binary P5 is read")
    tokens, end = _header_tokens(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise BadHeaderError(f"non-numeric PGM header fields {tokens!r}") from None
    if width < 1 or height < 1:
        raise BadHeaderError(f"bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise MaxvalError(f"maxval {maxval} unsupported (need 255)")
    offset = 2 + end + 1
    payload = data[offset:offset + width * height]
    if len(payload) < width * height:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} of {width * height} bytes")
    return GrayImage.from_samples(width, height, np.frombuffer(payload, dtype=np.uint8))


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def pgm_bytes(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.pixels.tobytes()


def write_pgm(img: GrayImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(img))


def list_pgms(directory) -> list:
    """Sorted paths of the ``.pgm`` files directly inside ``directory``."""
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".pgm"))
    return [os.path.join(directory, n) for n in names]


def patch_origins(height: int, width: int, size: int, stride: int):
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if size > height or size > width:
        return []
    return [(r, c)
            for r in range(0, height - size + 1, stride)
            for c in range(0, width - size + 1, stride)]


def extract_patches(img: GrayImage, size: int, stride: int) -> list:
    """All ``size``x``size`` windows on a ``stride`` grid, in row-major order of origin."""
    return [GrayImage(img.pixels[r:r + size, c:c + size].copy())
            for r, c in patch_origins(img.height, img.width, size, stride)]


def to_normalized(img: GrayImage, dtype=np.float32) -> np.ndarray:
    """(1, 1, H, W) array of samples scaled into [0, 1]."""
    return (img.pixels.astype(dtype) / dtype(255))[None, None]


def round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def from_normalized(t) -> GrayImage:
    """Inverse of :func:`to_normalized`: clamp to [0, 1], scale, round ties away from zero."""
    arr = np.asarray(getattr(t, "data", t))
    if arr.ndim != 4 or arr.shape[:2] != (1, 1):
        raise ValueError(f"expected shape (1, 1, H, W), got {arr.shape}")
    scaled = np.clip(arr[0, 0].astype(np.float64), 0.0, 1.0) * 255.0
    return GrayImage(round_half_away(scaled).astype(np.uint8))
