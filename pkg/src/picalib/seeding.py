import hashlib
import struct


def derive_seed(*parts):
    """Stable 64-bit seed from a tuple of integers (blake2b, little-endian)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(struct.pack("<q", int(p) % (1 << 63)))
    return int.from_bytes(h.digest(), "little")
