"""8-bit binary PGM (P5) and PPM (P6) reading and writing."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from specklenet.errors import ImageFormatError

_CHANNELS = {b"P5": 1, b"P6": 3}


@dataclass
class RawImage:
    """8-bit pixels, shape ``(height, width, channels)``, RGB order when 3-channel."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] not in (1, 3) or px.dtype != np.uint8:
            raise ImageFormatError(f"expected uint8 (h, w, 1|3) pixels, got {px.dtype} {px.shape}")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


def _header_tokens(data: bytes, path) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: header ends after {len(tokens)} fields")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pnm(data: bytes, path="<bytes>") -> RawImage:
    if data[:2] not in _CHANNELS:
        raise ImageFormatError(f"{path}: not a binary PGM/PPM file (magic {data[:2]!r})")
    tokens, offset = _header_tokens(data, path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError(f"{path}: non-numeric header field in {tokens[1:]}") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise ImageFormatError(f"{path}: maxval {maxval} unsupported, only 8-bit images are read")
    channels = _CHANNELS[tokens[0]]
    n = width * height * channels
    raster = data[offset:offset + n]
    if len(raster) < n:
        raise ImageFormatError(f"{path}: truncated raster, {len(raster)} of {n} bytes")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels).copy()
    return RawImage(px)


def read_pnm(path) -> RawImage:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"{path}: cannot read ({exc.strerror})") from None
    return decode_pnm(data, path)


def encode_pnm(img: RawImage) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    return magic + f"\n{img.width} {img.height}\n255\n".encode() + img.pixels.tobytes()


def write_pnm(path, img: RawImage) -> None:
    Path(path).write_bytes(encode_pnm(img))
