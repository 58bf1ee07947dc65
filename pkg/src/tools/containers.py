"""
Named-matrix container ("NMAT") for trained models.

Layout, all integers u32 little-endian:

    magic "NMAT" | version=1 | section count
    per section: name length | UTF-8 name | ndim (0..2) | shape[ndim] |
                 float64 little-endian payload, row-major

Used for the TV model ("m", "T", "sigma"), LDA ("A"), SUV model
("S_SUV", "D", "ridge") and GPLDA model ("mean", "U1", "Lambda").
"""
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from src.schemas.exceptions import IVectorFormatError, TruncatedPayloadError
from src.tools.utils import atomic_write_bytes, read_bytes

MAGIC = b"NMAT"
VERSION = 1
_U32 = struct.Struct("<I")


def encode_matrices(sections: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(sections))]
    for name, value in sections.items():
        array = np.asarray(value, dtype="<f8")
        if array.ndim > 2:
            raise IVectorFormatError(f"section '{name}' has {array.ndim} dimensions (max 2)")
        encoded_name = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded_name)))
        parts.append(encoded_name)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(n) for n in array.shape)
        parts.append(np.ascontiguousarray(array).tobytes())
    return b"".join(parts)


def decode_matrices(data: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise TruncatedPayloadError(f"{source}: truncated while reading {what}")
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise IVectorFormatError(f"{source}: not a named-matrix container (bad magic)")
    (version,) = _U32.unpack(take(4, "version"))
    if version != VERSION:
        raise IVectorFormatError(f"{source}: unsupported container version {version}")
    (count,) = _U32.unpack(take(4, "section count"))

    sections: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = _U32.unpack(take(4, "section name length"))
        name = take(name_len, "section name").decode("utf-8")
        (ndim,) = _U32.unpack(take(4, f"'{name}' rank"))
        if ndim > 2:
            raise IVectorFormatError(f"{source}: section '{name}' has rank {ndim}")
        shape = tuple(_U32.unpack(take(4, f"'{name}' shape"))[0] for _ in range(ndim))
        size = int(np.prod(shape)) if shape else 1
        payload = take(8 * size, f"'{name}' payload")
        sections[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)

    if offset != len(data):
        raise IVectorFormatError(f"{source}: {len(data) - offset} unexpected trailing bytes")
    return sections


def write_matrices(path: Path | str, sections: Mapping[str, np.ndarray]) -> None:
    atomic_write_bytes(path, encode_matrices(sections))


def read_matrices(path: Path | str, required: tuple[str, ...] = ()) -> dict[str, np.ndarray]:
    sections = decode_matrices(read_bytes(path, "model file"), source=str(path))
    missing = [name for name in required if name not in sections]
    if missing:
        raise IVectorFormatError(f"{path}: missing section(s) {', '.join(missing)}")
    return sections
