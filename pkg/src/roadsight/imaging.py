"""Image representation, PPM/PNG codecs, cropping, resizing, float conversion.

The canonical on-disk frame/crop format is binary PPM (P6, maxval 255):
bit-exact and dependency-free. PNG (stored deflate blocks only) is emitted
for browser rendering.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, EmptyRect, MalformedHeader, Truncated, UnsupportedMaxval

PNG_SIGNATURE = bytes([0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A])


@dataclass(frozen=True)
class ImageRGB8:
    """8-bit interleaved RGB raster, row-major R,G,B."""

    width: int
    height: int
    data: bytes

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dims must be >= 1, got {self.width}x{self.height}")
        if len(self.data) != self.width * self.height * 3:
            raise ValueError(
                f"data length {len(self.data)} != {self.width}x{self.height}x3"
            )

    def as_array(self) -> np.ndarray:
        """View pixels as an H x W x 3 uint8 array."""
        return np.frombuffer(self.data, dtype=np.uint8).reshape(
            self.height, self.width, 3
        )

    @staticmethod
    def from_array(arr: np.ndarray) -> "ImageRGB8":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected H x W x 3 array, got shape {arr.shape}")
        h, w, _ = arr.shape
        return ImageRGB8(width=w, height=h, data=arr.tobytes())


@dataclass(frozen=True)
class PixelRect:
    """Half-open pixel rectangle [x0,x1) x [y0,y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


def _read_ppm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited header token, skipping '#' comment lines."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeader("unexpected end of PPM header")
    return buf[start:pos], pos


def decode_ppm(payload: bytes) -> ImageRGB8:
    """Decode a binary PPM (P6, maxval 255). '#' comments allowed in the header."""
    if payload[:2] != b"P6" or (
        len(payload) > 2 and not payload[2:3].isspace() and payload[2:3] != b"#"
    ):
        raise BadMagic(f"not a P6 PPM (magic {payload[:3]!r})")
    pos = 2
    try:
        w_tok, pos = _read_ppm_token(payload, pos)
        h_tok, pos = _read_ppm_token(payload, pos)
        max_tok, pos = _read_ppm_token(payload, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError as exc:
        raise MalformedHeader(f"non-numeric PPM header field: {exc}") from exc
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} != 255")
    # Exactly one whitespace byte separates maxval from the payload.
    if pos >= len(payload) or not payload[pos : pos + 1].isspace():
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    need = width * height * 3
    pixels = payload[pos : pos + need]
    if len(pixels) < need:
        raise Truncated(f"payload has {len(pixels)} bytes, need {need}")
    return ImageRGB8(width=width, height=height, data=bytes(pixels))


def encode_ppm(img: ImageRGB8) -> bytes:
    """Encode as binary PPM; decode_ppm(encode_ppm(x)) == x."""
    return b"P6\n%d %d\n255\n" % (img.width, img.height) + img.data


def read_ppm(path) -> ImageRGB8:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def write_ppm(path, img: ImageRGB8) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img))


def _png_chunk(kind: bytes, body: bytes) -> bytes:
    crc = zlib.crc32(body, zlib.crc32(kind))
    return struct.pack(">I", len(body)) + kind + body + struct.pack(">I", crc)


def _stored_zlib(raw: bytes) -> bytes:
    """zlib stream of stored (uncompressed) deflate blocks, hand-framed."""
    out = bytearray(b"\x78\x01")  # CMF/FLG: 32K window, no preset dict, FCHECK ok
    n = len(raw)
    pos = 0
    while True:
        block = raw[pos : pos + 65535]
        pos += len(block)
        final = 1 if pos >= n else 0
        out.append(final)  # BFINAL bit, BTYPE=00 (stored)
        out += struct.pack("<HH", len(block), len(block) ^ 0xFFFF)
        out += block
        if final:
            break
    out += struct.pack(">I", zlib.adler32(raw))
    return bytes(out)


def encode_png_stored(img: ImageRGB8) -> bytes:
    """Encode as a valid 8-bit RGB PNG using only stored deflate blocks."""
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, 8, 2, 0, 0, 0)
    stride = img.width * 3
    raw = bytearray()
    for y in range(img.height):
        raw.append(0)  # filter type None per row
        raw += img.data[y * stride : (y + 1) * stride]
    return (
        PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", _stored_zlib(bytes(raw)))
        + _png_chunk(b"IEND", b"")
    )


def clip_rect(rect: PixelRect, width: int, height: int) -> PixelRect:
    """Clip to image bounds; raises EmptyRect when nothing remains."""
    x0 = max(0, min(rect.x0, width))
    y0 = max(0, min(rect.y0, height))
    x1 = max(0, min(rect.x1, width))
    y1 = max(0, min(rect.y1, height))
    if x1 <= x0 or y1 <= y0:
        raise EmptyRect(f"rect {rect} is empty after clipping to {width}x{height}")
    return PixelRect(x0, y0, x1, y1)


def crop(img: ImageRGB8, rect: PixelRect) -> ImageRGB8:
    """Copy the pixels of `rect` (already clipped to bounds) into a new image."""
    if rect.x1 <= rect.x0 or rect.y1 <= rect.y0:
        raise EmptyRect(f"rect {rect} has zero area")
    if rect.x0 < 0 or rect.y0 < 0 or rect.x1 > img.width or rect.y1 > img.height:
        raise ValueError(f"rect {rect} exceeds {img.width}x{img.height} bounds")
    arr = img.as_array()[rect.y0 : rect.y1, rect.x0 : rect.x1]
    return ImageRGB8.from_array(arr)


def resize_bilinear(img: ImageRGB8, w: int, h: int) -> ImageRGB8:
    """Resize with half-pixel-center sampling, edge clamp, round half away from zero."""
    if w < 1 or h < 1:
        raise ValueError(f"target dims must be >= 1, got {w}x{h}")
    if w == img.width and h == img.height:
        return img
    src = img.as_array().astype(np.float64)

    def axis_coords(dst_dim: int, src_dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(dst_dim, dtype=np.float64) + 0.5) * (src_dim / dst_dim) - 0.5
        pos = np.clip(pos, 0.0, src_dim - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, src_dim - 1)
        frac = pos - lo
        return lo, hi, frac

    x0, x1, fx = axis_coords(w, img.width)
    y0, y1, fy = axis_coords(h, img.height)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    blended = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    # values are non-negative, so half-away-from-zero == floor(v + 0.5)
    out = np.floor(blended + 0.5).astype(np.uint8)
    return ImageRGB8.from_array(out)


def to_float_norm(img: ImageRGB8) -> np.ndarray:
    """H x W x 3 float32 tensor, each element byte/255.0."""
    return (img.as_array().astype(np.float32) / np.float32(255.0)).astype(np.float32)
