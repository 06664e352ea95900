"""Canonical byte encoding and digests.

Every protocol object that gets hashed or signed is reduced to a tree of
primitives (None, bool, int, str, bytes, tuple/list, dict) and encoded with a
fixed tag-length-value layout:

    None        b"N"
    bool        b"T" | b"F"
    int         b"I" + u32 length + signed big-endian magnitude
    str         b"S" + u32 length + utf-8 bytes
    bytes       b"B" + u32 length + raw bytes
    sequence    b"L" + u32 count  + encoded items
    mapping     b"D" + u32 count  + (key, value) pairs sorted by encoded key
    object      b"O" + encoded type name + encoded ``canonical()`` tree

Field order inside an object is whatever its ``canonical()`` returns, so the
layout is fixed in code and bit-stable across runs and platforms.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Any

Digest = bytes

DIGEST_SIZE = 32
ZERO_DIGEST: Digest = bytes(DIGEST_SIZE)

_U32 = struct.Struct(">I")


def _int_bytes(value: int) -> bytes:
    length = (value.bit_length() + 8) // 8
    return value.to_bytes(length, "big", signed=True)


def _encode_into(obj: Any, out: list[bytes]) -> None:
    if obj is None:
        out.append(b"N")
    elif obj is True:
        out.append(b"T")
    elif obj is False:
        out.append(b"F")
    elif isinstance(obj, int):
        raw = _int_bytes(obj)
        out.append(b"I" + _U32.pack(len(raw)) + raw)
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out.append(b"S" + _U32.pack(len(raw)) + raw)
    elif isinstance(obj, (bytes, bytearray)):
        out.append(b"B" + _U32.pack(len(obj)) + bytes(obj))
    elif hasattr(obj, "canonical"):
        out.append(b"O")
        _encode_into(type(obj).__name__, out)
        _encode_into(obj.canonical(), out)
    elif isinstance(obj, (tuple, list)):
        out.append(b"L" + _U32.pack(len(obj)))
        for item in obj:
            _encode_into(item, out)
    elif isinstance(obj, dict):
        pairs = sorted((encode(k), encode(v)) for k, v in obj.items())
        out.append(b"D" + _U32.pack(len(pairs)))
        for k, v in pairs:
            out.append(k)
            out.append(v)
    elif isinstance(obj, (set, frozenset)):
        items = sorted(encode(x) for x in obj)
        out.append(b"L" + _U32.pack(len(items)))
        out.extend(items)
    else:
        raise TypeError(f"cannot canonically encode {type(obj).__name__}")


def encode(obj: Any) -> bytes:
    """Return the canonical byte encoding of ``obj``."""
    out: list[bytes] = []
    _encode_into(obj, out)
    return b"".join(out)


def decode(data: bytes) -> Any:
    """Inverse of ``encode`` for primitive trees.

    Objects come back as ``(type_name, canonical_tree)`` pairs and mappings as
    dicts; sequences come back as tuples.
    """
    value, pos = _decode_at(data, 0)
    if pos != len(data):
        raise ValueError("trailing bytes after canonical value")
    return value


def _decode_at(data: bytes, pos: int) -> tuple[Any, int]:
    tag = data[pos:pos + 1]
    pos += 1
    if tag == b"N":
        return None, pos
    if tag == b"T":
        return True, pos
    if tag == b"F":
        return False, pos
    if tag in (b"I", b"S", b"B"):
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        raw = data[pos:pos + n]
        pos += n
        if tag == b"I":
            return int.from_bytes(raw, "big", signed=True), pos
        if tag == b"S":
            return raw.decode("utf-8"), pos
        return bytes(raw), pos
    if tag == b"L":
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        items = []
        for _ in range(n):
            item, pos = _decode_at(data, pos)
            items.append(item)
        return tuple(items), pos
    if tag == b"D":
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        out = {}
        for _ in range(n):
            k, pos = _decode_at(data, pos)
            v, pos = _decode_at(data, pos)
            out[k] = v
        return out, pos
    if tag == b"O":
        name, pos = _decode_at(data, pos)
        tree, pos = _decode_at(data, pos)
        return (name, tree), pos
    raise ValueError(f"bad tag {tag!r} at offset {pos - 1}")


def compute_digest(payload: bytes) -> Digest:
    """SHA-256 of a byte sequence."""
    return hashlib.sha256(payload).digest()


def digest_of(obj: Any) -> Digest:
    """Digest of the canonical encoding of ``obj``."""
    return compute_digest(encode(obj))


def short(d: Digest) -> str:
    return d.hex()[:10]
