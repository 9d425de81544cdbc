"""Binary weight container: named float32 tensors with a trailing CRC32.

Layout: magic "TBME" | u32 version | u32 tensor_count | per tensor
(u16 name_len, UTF-8 name, u8 dtype, u8 rank, u32 dims[rank], raw data) |
u32 CRC32 over everything before it. All integers little-endian; dtype 0 is
the only defined code (float32 LE).
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

MAGIC = b"TBME"
VERSION = 1
DTYPE_F32 = 0


class ContainerError(ValueError):
    pass


def container_bytes(tensors: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    seen = set()
    for name, arr in tensors.items():
        if name in seen:
            raise ContainerError(f"duplicate tensor name '{name}'")
        seen.add(name)
        nb = str(name).encode("utf-8")
        if not nb or len(nb) > 0xFFFF:
            raise ContainerError(f"bad tensor name length for '{name}'")
        a = np.asarray(arr)
        if a.dtype != np.float32:
            raise ContainerError(f"tensor '{name}' must be float32, got {a.dtype}")
        if a.ndim > 0xFF:
            raise ContainerError(f"tensor '{name}' rank {a.ndim} exceeds u8")
        if any(d > 0xFFFFFFFF for d in a.shape):
            raise ContainerError(f"tensor '{name}' dimension exceeds u32")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<BB", DTYPE_F32, a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def write_container(path, tensors: dict) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    data = container_bytes(tensors)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(src) -> dict:
    """Parse bytes or a file path into an ordered {name: float32 array}."""
    if isinstance(src, (bytes, bytearray)):
        data = bytes(src)
    else:
        with open(src, "rb") as f:
            data = f.read()
    if len(data) < 16:
        raise ContainerError(f"container truncated at {len(data)} bytes")
    body, (crc_stored,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ContainerError("CRC mismatch: container corrupted")
    if body[:4] != MAGIC:
        raise ContainerError(f"bad magic {body[:4]!r}")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        if off + 2 > len(body):
            raise ContainerError(f"tensor {i}: header past end of file")
        (name_len,) = struct.unpack_from("<H", body, off)
        off += 2
        if off + name_len + 2 > len(body):
            raise ContainerError(f"tensor {i}: name past end of file")
        try:
            name = body[off:off + name_len].decode("utf-8")
        except UnicodeDecodeError as e:
            raise ContainerError(f"tensor {i}: name is not UTF-8 ({e})") from None
        off += name_len
        dtype, rank = struct.unpack_from("<BB", body, off)
        off += 2
        if dtype != DTYPE_F32:
            raise ContainerError(f"tensor '{name}': unknown dtype code {dtype}")
        if off + 4 * rank > len(body):
            raise ContainerError(f"tensor '{name}': dims past end of file")
        dims = struct.unpack_from(f"<{rank}I", body, off)
        off += 4 * rank
        n = 1
        for d in dims:
            n *= d
        nbytes = 4 * n
        if off + nbytes > len(body):
            raise ContainerError(f"tensor '{name}': data past end of file")
        if name in out:
            raise ContainerError(f"duplicate tensor name '{name}'")
        arr = np.frombuffer(body, dtype="<f4", count=n, offset=off).reshape(dims)
        out[name] = arr.astype(np.float32, copy=True)
        off += nbytes
    if off != len(body):
        raise ContainerError(f"{len(body) - off} trailing bytes after last tensor")
    return out
