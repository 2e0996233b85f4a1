"""URK1 binary container: named float64 arrays.

Layout (all integers little-endian)::

    b"URK1"  u32 count
    count x ( u16 name_len  name(utf-8)  u8 ndims  ndims x u64 dim  float64[prod(dims)] )
"""

import struct

import numpy as np

from ..errors import ContainerError

MAGIC = b"URK1"


def to_bytes(arrays):
    parts = [MAGIC, struct.pack("<I", len(arrays))]
    for name, value in arrays.items():
        a = np.asarray(value, dtype=np.float64)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ContainerError(f"array name too long: {name[:40]}...")
        if a.ndim > 0xFF:
            raise ContainerError(f"too many dimensions for {name}")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n, what):
        if n < 0 or self.pos + n > len(self.data):
            raise ContainerError(f"truncated container while reading {what} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))


def from_bytes(data):
    r = _Reader(data)
    if bytes(r.take(4, "magic")) != MAGIC:
        raise ContainerError("bad magic: not a URK1 container")
    (count,) = r.unpack("<I", "array count")
    out = {}
    for i in range(count):
        (name_len,) = r.unpack("<H", f"name length of array {i}")
        try:
            name = bytes(r.take(name_len, f"name of array {i}")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerError(f"array {i} name is not UTF-8") from exc
        if name in out:
            raise ContainerError(f"duplicate array name {name!r}")
        (ndims,) = r.unpack("<B", f"rank of {name!r}")
        dims = r.unpack(f"<{ndims}Q", f"dimensions of {name!r}")
        total = 1
        for d in dims:
            total *= d
        payload = r.take(8 * total, f"payload of {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    if r.pos != len(r.data):
        raise ContainerError(f"{len(r.data) - r.pos} trailing bytes after last array")
    return out


def save_container(path, arrays):
    data = to_bytes(arrays)
    with open(path, "wb") as fh:
        fh.write(data)


def load_container(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
