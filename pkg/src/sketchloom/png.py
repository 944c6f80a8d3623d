"""Minimal 8-bit PNG codec on top of :mod:`zlib`.

Writing our own keeps encoded bytes stable across library versions (the
synthetic corpus is hashed) and lets decode errors report byte offsets.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

SIGNATURE = b"\x89PNG\r\n\x1a\n"

# color type -> samples per pixel
_SAMPLES = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}


class PNGDecodeError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(PNGDecodeError):
    pass


def _chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def encode_png(pixels: np.ndarray) -> bytes:
    """Encode an (H, W) or (H, W, 1|3) uint8 array."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        raise TypeError(f"expected uint8 pixels, got {arr.dtype}")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    if c not in (1, 3):
        raise ValueError(f"cannot encode {c}-channel image")
    color_type = 0 if c == 1 else 2
    rows = arr.reshape(h, w * c)
    raw = np.zeros((h, w * c + 1), dtype=np.uint8)
    raw[:, 1:] = rows
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    return (
        SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw.tobytes(), 6))
        + _chunk(b"IEND", b"")
    )


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(data: bytes, h: int, stride: int, bpp: int, offset: int) -> np.ndarray:
    if len(data) != h * (stride + 1):
        raise PNGDecodeError(
            f"image data holds {len(data)} bytes, expected {h * (stride + 1)}", offset
        )
    buf = np.frombuffer(data, dtype=np.uint8).reshape(h, stride + 1)
    out = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int64)
    for y in range(h):
        ftype = int(buf[y, 0])
        line = buf[y, 1:].astype(np.int64)
        if ftype == 0:
            cur = line
        elif ftype == 1:
            cur = line.copy()
            for lane in range(bpp):
                cur[lane::bpp] = np.cumsum(line[lane::bpp]) % 256
        elif ftype == 2:
            cur = (line + prev) % 256
        elif ftype in (3, 4):
            vals = line.tolist()
            up = prev.tolist()
            for x in range(stride):
                left = vals[x - bpp] if x >= bpp else 0
                if ftype == 3:
                    vals[x] = (vals[x] + ((left + up[x]) >> 1)) & 0xFF
                else:
                    ul = up[x - bpp] if x >= bpp else 0
                    vals[x] = (vals[x] + _paeth(left, up[x], ul)) & 0xFF
            cur = np.array(vals, dtype=np.int64)
        else:
            raise PNGDecodeError(f"invalid filter type {ftype} on row {y}", offset)
        out[y] = cur
        prev = cur
    return out


def decode_png(data: bytes) -> np.ndarray:
    """Decode to an (H, W, C) uint8 array, C in {1, 2, 3, 4}; palettes expand to RGB."""
    if len(data) < 8 or data[:8] != SIGNATURE:
        raise PNGDecodeError("missing PNG signature", 0)
    pos = 8
    header = None
    palette = None
    idat = []
    seen_end = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise PNGDecodeError("truncated chunk header", pos)
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        body_start = pos + 8
        body_end = body_start + length
        if body_end + 4 > len(data):
            raise PNGDecodeError(f"truncated {tag!r} chunk", pos)
        body = data[body_start:body_end]
        (crc,) = struct.unpack(">I", data[body_end : body_end + 4])
        if zlib.crc32(tag + body) & 0xFFFFFFFF != crc:
            raise PNGDecodeError(f"CRC mismatch in {tag!r} chunk", pos)
        if tag == b"IHDR":
            if length != 13:
                raise PNGDecodeError("IHDR must be 13 bytes", pos)
            header = struct.unpack(">IIBBBBB", body)
            w, h, depth, ctype, _comp, _filt, interlace = header
            if ctype not in _SAMPLES:
                raise PNGDecodeError(f"invalid color type {ctype}", body_start + 9)
            if depth != 8:
                raise UnsupportedFormatError(f"unsupported bit depth {depth}", body_start + 8)
            if interlace != 0:
                raise UnsupportedFormatError("interlaced PNG not supported", body_start + 12)
            if w == 0 or h == 0:
                raise PNGDecodeError("zero image dimension", body_start)
        elif tag == b"PLTE":
            palette = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3)
        elif tag == b"IDAT":
            idat.append((body_start, body))
        elif tag == b"IEND":
            seen_end = True
            break
        pos = body_end + 4
    if header is None:
        raise PNGDecodeError("missing IHDR chunk", 8)
    if not idat:
        raise PNGDecodeError("missing IDAT chunk", pos)
    if not seen_end:
        raise PNGDecodeError("missing IEND chunk", pos)
    w, h, _depth, ctype, *_ = header
    try:
        raw = zlib.decompress(b"".join(body for _, body in idat))
    except zlib.error as exc:
        raise PNGDecodeError(f"corrupt image data: {exc}", idat[0][0]) from None
    samples = _SAMPLES[ctype]
    pixels = _unfilter(raw, h, w * samples, samples, idat[0][0]).reshape(h, w, samples)
    if ctype == 3:
        if palette is None:
            raise PNGDecodeError("palette image without PLTE chunk", 8)
        idx = pixels[:, :, 0]
        if idx.max() >= len(palette):
            raise PNGDecodeError("palette index out of range", idat[0][0])
        pixels = palette[idx]
    return pixels
