"""Protobuf wire-format encoding primitives (writer side only)."""

from __future__ import annotations

import struct


def varint(value: int) -> bytes:
    if value < 0:
        value &= (1 << 64) - 1
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def tag(field: int, wire: int) -> bytes:
    return varint((field << 3) | wire)


def varint_field(field: int, value: int) -> bytes:
    return tag(field, 0) + varint(value)


def float_field(field: int, value: float) -> bytes:
    return tag(field, 5) + struct.pack("<f", value)


def bytes_field(field: int, payload: bytes) -> bytes:
    return tag(field, 2) + varint(len(payload)) + payload


def string_field(field: int, value: str) -> bytes:
    return bytes_field(field, value.encode("utf-8"))


def message_field(field: int, message: bytes) -> bytes:
    return bytes_field(field, message)


def packed_varints(field: int, values) -> bytes:
    payload = b"".join(varint(v) for v in values)
    return bytes_field(field, payload)
