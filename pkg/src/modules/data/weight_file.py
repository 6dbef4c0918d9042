"""
Named-tensor weight files.

Layout (all integers little-endian):
    magic        4 bytes  b"QFXW"
    version      uint32   currently 1
    count        uint32   number of tensors
    table        count entries of
                     name_len uint16, name (utf-8),
                     dtype    uint8 (1 = float32),
                     ndim     uint8, dims uint32 * ndim,
                     offset   uint64 (absolute byte offset of the payload)
    payload      little-endian float32 data

Every tensor's byte range must lie after the table, inside the file, and
must not overlap another tensor's range.
"""
import hashlib
import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

from core.exceptions import (
    BoundsError,
    CorruptHeaderError,
    DuplicateTensorError,
    MagicError,
    TruncatedPayloadError,
    VersionError,
    WeightFileError,
)
from utils.logger import logger


MAGIC = b"QFXW"
VERSION = 1
DTYPE_FLOAT32 = 1
_PAYLOAD_DTYPE = np.dtype("<f4")


def save_weights(store: Mapping[str, np.ndarray]) -> bytes:
    """Serialize a weight store; tensors are written as float32 in store order."""
    tensors = [(name, np.ascontiguousarray(value, dtype=_PAYLOAD_DTYPE)) for name, value in store.items()]

    table = bytearray()
    header_size = 12
    for name, value in tensors:
        header_size += 2 + len(name.encode("utf-8")) + 2 + 4 * value.ndim + 8

    offset = header_size
    for name, value in tensors:
        encoded = name.encode("utf-8")
        table.extend(struct.pack("<H", len(encoded)))
        table.extend(encoded)
        table.extend(struct.pack("<BB", DTYPE_FLOAT32, value.ndim))
        table.extend(struct.pack(f"<{value.ndim}I", *value.shape))
        table.extend(struct.pack("<Q", offset))
        offset += value.nbytes

    result = bytearray(MAGIC)
    result.extend(struct.pack("<II", VERSION, len(tensors)))
    result.extend(table)
    for _, value in tensors:
        result.extend(value.tobytes())

    logger.debug(f"[IO] Serialized {len(tensors)} tensors, {len(result)} bytes")
    return bytes(result)


def _read(data: bytes, fmt: str, pos: int, what: str) -> Tuple[tuple, int]:
    size = struct.calcsize(fmt)
    if pos + size > len(data):
        raise CorruptHeaderError(f"Header truncated while reading {what} at byte {pos}")
    return struct.unpack_from(fmt, data, pos), pos + size


def load_weights(data: bytes) -> Dict[str, np.ndarray]:
    """Parse and validate a weight file; returns float32 arrays by name."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise MagicError(bytes(data[:4]))
    (version, count), pos = _read(data, "<II", 4, "version/count")
    if version != VERSION:
        raise VersionError(version)

    entries = []
    names = set()
    for index in range(count):
        (name_len,), pos = _read(data, "<H", pos, f"name length of tensor {index}")
        if pos + name_len > len(data):
            raise CorruptHeaderError(f"Header truncated in name of tensor {index}")
        try:
            name = data[pos:pos + name_len].decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptHeaderError(f"Tensor {index} name is not utf-8: {e}") from e
        pos += name_len
        (dtype, ndim), pos = _read(data, "<BB", pos, f"dtype of '{name}'")
        if dtype != DTYPE_FLOAT32:
            raise CorruptHeaderError(f"Tensor '{name}' has unknown dtype code {dtype}")
        dims, pos = _read(data, f"<{ndim}I", pos, f"dims of '{name}'")
        (offset,), pos = _read(data, "<Q", pos, f"offset of '{name}'")
        if name in names:
            raise DuplicateTensorError(name)
        names.add(name)
        entries.append((name, tuple(dims), offset))

    header_end = pos
    ranges = []
    store: Dict[str, np.ndarray] = {}
    for name, dims, offset in entries:
        nbytes = int(np.prod(dims, dtype=np.int64)) * _PAYLOAD_DTYPE.itemsize
        if offset < header_end or offset > len(data):
            raise BoundsError(f"Tensor '{name}' offset {offset} outside payload [{header_end}, {len(data)}]")
        if offset + nbytes > len(data):
            raise TruncatedPayloadError(
                f"Tensor '{name}' needs bytes [{offset}, {offset + nbytes}), file has {len(data)}"
            )
        ranges.append((offset, offset + nbytes, name))
        store[name] = np.frombuffer(data, dtype=_PAYLOAD_DTYPE, count=nbytes // 4, offset=offset).reshape(dims).copy()

    ranges.sort()
    for (_, end, first), (start, _, second) in zip(ranges, ranges[1:]):
        if start < end:
            raise BoundsError(f"Tensors '{first}' and '{second}' overlap")
    return store


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_weights(path: str, store: Mapping[str, np.ndarray]) -> str:
    """Write a weight file; returns its SHA-256."""
    data = save_weights(store)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)
    logger.info(f"[IO] Wrote {len(store)} tensors to {path}")
    return sha256_hex(data)


def read_weights(path: str) -> Tuple[Dict[str, np.ndarray], str]:
    """Read a weight file; returns (store, SHA-256 of the file)."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise WeightFileError(f"Cannot read weight file {path}: {e}") from e
    store = load_weights(data)
    logger.info(f"[IO] Loaded {len(store)} tensors from {path}")
    return store, sha256_hex(data)
