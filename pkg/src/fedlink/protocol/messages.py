"""Wire format of the three-party training protocol.

Frame layout: 4-byte big-endian length of everything that follows, then
1 byte message kind, 8-byte BE session id, 8-byte BE per-direction
sequence number, then the kind-specific payload.

Payload building blocks:

* unsigned int:            4-byte BE
* index vector:            count, then 4-byte BE entries
* float64 vector:          count, then 8-byte BE IEEE doubles
* encrypted number:        length-prefixed ciphertext bytes, then the
                           public exponent as 8-byte BE two's complement
* encrypted number vector: count, then elements
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import gmpy2
import numpy as np

from .. import encoding, paillier


class MessageKind(enum.IntEnum):
    PUBLIC_KEY = 1
    ENC_MASK = 2
    HOLDOUT_INIT = 3
    MODEL_BROADCAST = 4
    ENC_PARTIAL_U = 5
    ENC_WZ = 6
    ENC_GRAD_PARTS = 7
    ENC_LOSS = 8
    ABORT = 9


class Phase(enum.IntEnum):
    """Sub-tag on model broadcasts: what the receiver should compute."""

    GRADIENT = 0
    LOSS = 1
    DONE = 2


@dataclass(frozen=True)
class Frame:
    kind: MessageKind
    session: int
    seq: int
    payload: bytes

    def to_bytes(self) -> bytes:
        body = bytes([self.kind]) + self.session.to_bytes(8, "big") \
            + self.seq.to_bytes(8, "big") + self.payload
        return len(body).to_bytes(4, "big") + body

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Frame":
        n = int.from_bytes(buf[:4], "big")
        body = buf[4:4 + n]
        if len(body) != n:
            raise ProtocolError("truncated frame")
        return cls(MessageKind(body[0]), int.from_bytes(body[1:9], "big"),
                   int.from_bytes(body[9:17], "big"), body[17:])


class ProtocolError(RuntimeError):
    """Malformed, out-of-order, or unexpected protocol data."""


# --- payload primitives ---------------------------------------------------

def pack_uint(x: int) -> bytes:
    return int(x).to_bytes(4, "big")


def unpack_uint(buf: bytes, off: int) -> tuple[int, int]:
    return int.from_bytes(buf[off:off + 4], "big"), off + 4


def pack_indices(idx) -> bytes:
    out = pack_uint(len(idx))
    for i in idx:
        out += pack_uint(int(i))
    return out


def unpack_indices(buf: bytes, off: int) -> tuple[np.ndarray, int]:
    n, off = unpack_uint(buf, off)
    vals = [int.from_bytes(buf[off + 4 * i:off + 4 * i + 4], "big") for i in range(n)]
    return np.array(vals, dtype=np.int64), off + 4 * n


def pack_floats(vec) -> bytes:
    vec = np.asarray(vec, dtype=np.float64)
    return pack_uint(len(vec)) + struct.pack(f">{len(vec)}d", *vec.tolist())


def unpack_floats(buf: bytes, off: int) -> tuple[np.ndarray, int]:
    n, off = unpack_uint(buf, off)
    vals = struct.unpack(f">{n}d", buf[off:off + 8 * n])
    return np.array(vals, dtype=np.float64), off + 8 * n


def pack_encnum(x: encoding.EncryptedNumber) -> bytes:
    return x.ciphertext.to_bytes() + int(x.exponent).to_bytes(8, "big", signed=True)


def unpack_encnum(buf: bytes, off: int, pk: paillier.PublicKey,
                  base: int) -> tuple[encoding.EncryptedNumber, int]:
    value, off = paillier._int_from_bytes(buf, off)
    exponent = int.from_bytes(buf[off:off + 8], "big", signed=True)
    ct = paillier.Ciphertext(gmpy2.mpz(value), pk)
    return encoding.EncryptedNumber(ct, exponent, base), off + 8


def pack_encvec(vec) -> bytes:
    return pack_uint(len(vec)) + b"".join(pack_encnum(x) for x in vec)


def unpack_encvec(buf: bytes, off: int, pk: paillier.PublicKey,
                  base: int) -> tuple[list, int]:
    n, off = unpack_uint(buf, off)
    out = []
    for _ in range(n):
        x, off = unpack_encnum(buf, off, pk, base)
        out.append(x)
    return out, off
