"""8-bit RGB image helpers: PNG encode/decode and bilinear resampling.

Encoding is written out here byte-for-byte (filter 0 scanlines, one zlib
stream) so the same pixels always produce the same file; decoding goes
through Pillow and must round-trip losslessly.
"""

from __future__ import annotations

import io
import struct
import zlib

import numpy as np
from PIL import Image as _PILImage


class ImageError(ValueError):
    pass


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def png_bytes(pixels: np.ndarray) -> bytes:
    """Encode (h, w, 3) uint8 pixels as a fixed-layout RGB PNG."""
    a = np.asarray(pixels)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise ImageError(f"png_bytes: need (h,w,3) uint8, got {a.shape} {a.dtype}")
    h, w = a.shape[:2]
    raw = bytearray()
    for r in range(h):
        raw.append(0)                      # filter type 0 per scanline
        raw += a[r].tobytes()
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n"
            + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(bytes(raw), 6))
            + _chunk(b"IEND", b""))


def write_png(path: str, pixels: np.ndarray) -> None:
    data = png_bytes(pixels)
    with open(path, "wb") as fh:
        fh.write(data)


def read_png(src) -> np.ndarray:
    """Decode a PNG from a path or bytes to (h, w, 3) uint8."""
    if isinstance(src, (bytes, bytearray)):
        img = _PILImage.open(io.BytesIO(src))
    else:
        img = _PILImage.open(src)
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _axis_coords(n_in: int, n_out: int):
    # half-pixel-center convention, clamped at the borders
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1.0)
    i0 = np.floor(x).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, x - i0


def bilinear_resize(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resample of an (h, w) or (h, w, c) array (float64 out)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        return bilinear_resize(a[:, :, None], out_h, out_w)[:, :, 0]
    if a.ndim != 3:
        raise ImageError(f"bilinear_resize: need 2-D or 3-D array, got shape {a.shape}")
    h, w = a.shape[:2]
    if h < 1 or w < 1 or out_h < 1 or out_w < 1:
        raise ImageError("bilinear_resize: empty extent")
    r0, r1, fr = _axis_coords(h, out_h)
    c0, c1, fc = _axis_coords(w, out_w)
    rows = a[r0] * (1.0 - fr)[:, None, None] + a[r1] * fr[:, None, None]
    out = rows[:, c0] * (1.0 - fc)[None, :, None] + rows[:, c1] * fc[None, :, None]
    return out
