"""Binary framing for sparse client updates (the upload whose size we account for).

Frame layout, all integers little-endian u32:

    magic   4 bytes, b"PVT1"
    round   u32
    client  u32
    sample_count u32
    entry_count  u32
    entries, sorted ascending by var_id:
        var_id   u32
        byte_len u32          (always 4 * parameter count)
        payload  byte_len bytes of little-endian float32
    checksum u32              (CRC-32 over every preceding byte)

Total size: 20 + sum(8 + byte_len) + 4. Payloads are raw float32 with no
quantization or compression; the savings come entirely from omitting frozen
variables, and compression would be a separate, composable layer.

Each way a frame can be malformed raises its own exception class so callers
can tell corruption modes apart.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .client import ClientUpdate

MAGIC = b"PVT1"
_HEADER = struct.Struct("<4sIIII")
_ENTRY = struct.Struct("<II")
_CHECKSUM = struct.Struct("<I")


class WireFormatError(ValueError):
    """Base class for malformed frames."""


class BadMagicError(WireFormatError):
    pass


class TruncatedFrameError(WireFormatError):
    pass


class ChecksumMismatchError(WireFormatError):
    pass


class UnsortedEntryError(WireFormatError):
    pass


class DuplicateEntryError(WireFormatError):
    pass


def encode(update: ClientUpdate) -> bytes:
    """Serialize an update; entries carry exactly the trained-variable deltas."""
    entries = sorted(update.deltas.items())
    parts = [
        _HEADER.pack(
            MAGIC,
            update.round_index,
            update.client,
            update.sample_count,
            len(entries),
        )
    ]
    for var_id, delta in entries:
        payload = np.ascontiguousarray(delta, dtype="<f4").tobytes()
        parts.append(_ENTRY.pack(var_id, len(payload)))
        parts.append(payload)
    body = b"".join(parts)
    return body + _CHECKSUM.pack(zlib.crc32(body))


def decode(
    data: bytes, shapes: dict[int, tuple[int, ...]] | None = None
) -> ClientUpdate:
    """Parse a frame back into a ClientUpdate.

    Deltas come back as flat float32 arrays unless ``shapes`` (var id ->
    shape) is supplied. Cost and loss fields are local accounting, not wire
    content, so they are None on the result.
    """
    if len(data) < _HEADER.size + _CHECKSUM.size:
        raise TruncatedFrameError(f"frame too short: {len(data)} bytes")
    magic, round_index, client, sample_count, entry_count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")

    # structural walk first, so cut-off frames report truncation rather than
    # a coincidental checksum failure
    end = len(data) - _CHECKSUM.size
    pos = _HEADER.size
    raw_entries: list[tuple[int, bytes]] = []
    for _ in range(entry_count):
        if pos + _ENTRY.size > end:
            raise TruncatedFrameError("frame ends inside an entry header")
        var_id, byte_len = _ENTRY.unpack_from(data, pos)
        pos += _ENTRY.size
        if pos + byte_len > end:
            raise TruncatedFrameError("frame ends inside an entry payload")
        if byte_len % 4 != 0:
            raise WireFormatError(f"payload length {byte_len} is not float32-aligned")
        raw_entries.append((var_id, data[pos : pos + byte_len]))
        pos += byte_len
    if pos != end:
        raise WireFormatError(f"{end - pos} unexpected trailing bytes before checksum")

    (stated,) = _CHECKSUM.unpack_from(data, end)
    actual = zlib.crc32(data[:end])
    if stated != actual:
        raise ChecksumMismatchError(f"checksum {stated:#010x} != {actual:#010x}")

    deltas: dict[int, np.ndarray] = {}
    prev_id = -1
    for var_id, payload in raw_entries:
        if var_id == prev_id:
            raise DuplicateEntryError(f"duplicate var_id {var_id}")
        if var_id < prev_id:
            raise UnsortedEntryError(f"var_id {var_id} after {prev_id}")
        prev_id = var_id
        values = np.frombuffer(payload, dtype="<f4").copy()
        if shapes is not None:
            if var_id not in shapes:
                raise WireFormatError(f"no shape known for var_id {var_id}")
            expected = shapes[var_id]
            if values.size != int(np.prod(expected, dtype=np.int64)):
                raise WireFormatError(
                    f"var_id {var_id}: {values.size} floats do not fit shape {expected}"
                )
            values = values.reshape(expected)
        deltas[var_id] = values

    return ClientUpdate(
        client=client,
        round_index=round_index,
        sample_count=sample_count,
        deltas=deltas,
    )
