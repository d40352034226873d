from __future__ import annotations

from Crypto.Hash import keccak


def keccak256(data: bytes) -> bytes:
    h = keccak.new(digest_bits=256)
    h.update(data)
    return h.digest()


def keccak_int(data: bytes) -> int:
    return int.from_bytes(keccak256(data), "big")


def selector(signature: str) -> int:
    """4-byte ABI function selector as an int."""
    return int.from_bytes(keccak256(signature.encode())[:4], "big")


def event_topic(signature: str) -> int:
    return keccak_int(signature.encode())
