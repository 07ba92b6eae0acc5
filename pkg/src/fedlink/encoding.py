"""Exact encoding of binary64 floats into the Paillier plaintext space.

A float q is represented as a pair (significand, exponent) with
q = s * base**e.  The significand is an integer in Z_m using a
two's-complement-style sign convention: values below m/2 are positive,
values above are negative, and the middle third of Z_m is reserved as an
overflow-indicating band.  The exponent stays public ("we pay" for that
with a bounded magnitude leak, quantified by `leakage_range`).

Addition aligns operands to the smaller exponent; multiplication by a
plaintext adds exponents.  Both are exact: no rounding happens inside the
encrypted path, only at the final decode back to binary64.

The base must be a power of two so that exponent alignment is a shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import paillier
from .paillier import Ciphertext, PrivateKey, PublicKey

DEFAULT_BASE = 16
_MANTISSA_BITS = 53  # binary64
_MIN_NORMAL = 2.0 ** -1022


class EncodingError(ValueError):
    """Input not encodable (non-finite or subnormal)."""


class OverflowBandError(ArithmeticError):
    """Significand fell into the reserved overflow band."""


def _log2_base(base: int) -> int:
    lb = base.bit_length() - 1
    if base < 2 or base != 1 << lb:
        raise ValueError(f"base must be a power of two, got {base}")
    return lb


def max_positive(modulus: int) -> int:
    """Largest significand treated as positive; the band above it (up to
    m - max_positive) signals overflow."""
    return int(modulus) // 3


@dataclass(frozen=True)
class EncodedNumber:
    """Plaintext (significand, exponent) pair relative to a public key."""

    significand: int
    exponent: int
    public_key: PublicKey
    base: int = DEFAULT_BASE

    def encrypt(self, r: int | None = None) -> "EncryptedNumber":
        return EncryptedNumber(self.public_key.encrypt(self.significand, r=r), self.exponent, self.base)

    def decrease_exponent_to(self, new_exponent: int) -> "EncodedNumber":
        if new_exponent > self.exponent:
            raise ValueError("can only decrease the exponent")
        factor = self.base ** (self.exponent - new_exponent)
        m = int(self.public_key.m)
        return EncodedNumber((self.significand * factor) % m, new_exponent, self.public_key, self.base)


@dataclass(frozen=True)
class EncryptedNumber:
    """Encrypted significand plus public (plaintext) exponent."""

    ciphertext: Ciphertext
    exponent: int
    base: int = DEFAULT_BASE

    @property
    def public_key(self) -> PublicKey:
        return self.ciphertext.public_key

    def decrease_exponent_to(self, new_exponent: int) -> "EncryptedNumber":
        if new_exponent > self.exponent:
            raise ValueError("can only decrease the exponent")
        factor = self.base ** (self.exponent - new_exponent)
        return EncryptedNumber(paillier.raw_mul_plain(self.ciphertext, factor), new_exponent, self.base)


def encode(q: float, public_key: PublicKey, base: int = DEFAULT_BASE) -> EncodedNumber:
    """Exact base-`base` exponential representation of a binary64 value.

    Zero maps to (0, 0).  NaN, infinities and subnormals are rejected.
    """
    lb = _log2_base(base)
    if not math.isfinite(q):
        raise EncodingError(f"cannot encode non-finite value {q!r}")
    if q == 0.0:
        return EncodedNumber(0, 0, public_key, base)
    if abs(q) < _MIN_NORMAL:
        raise EncodingError(f"subnormal values are not supported: {q!r}")
    mant, bin_exp = math.frexp(abs(q))          # abs(q) = mant * 2**bin_exp, mant in [0.5, 1)
    mantissa_int = int(mant * (1 << _MANTISSA_BITS))
    lsb_exp = bin_exp - _MANTISSA_BITS          # abs(q) = mantissa_int * 2**lsb_exp
    e = lsb_exp // lb                           # floor division: largest e keeping s integral
    s = mantissa_int << (lsb_exp - e * lb)
    m = int(public_key.m)
    if s > max_positive(m):
        raise EncodingError("value too large for the plaintext space")
    if q < 0:
        s = m - s
    return EncodedNumber(s, e, public_key, base)


def decode(x: EncodedNumber) -> float:
    """Exact inverse of `encode`; raises on the reserved overflow band."""
    m = int(x.public_key.m)
    s = x.significand
    if not (0 <= s < m):
        raise DecodeRangeError(f"significand {s} outside Z_m")
    pos_max = max_positive(m)
    if s <= pos_max:
        signed = s
    elif s >= m - pos_max:
        signed = s - m
    else:
        raise OverflowBandError("significand in the reserved overflow band")
    if signed == 0:
        return 0.0
    magnitude, sign = (signed, 1.0) if signed > 0 else (-signed, -1.0)
    lb = _log2_base(x.base)
    shift = x.exponent * lb
    if magnitude.bit_length() <= _MANTISSA_BITS:
        return sign * math.ldexp(float(magnitude), shift)
    # Large intermediate significand: go through Fraction for correct rounding.
    frac = Fraction(magnitude) * (Fraction(2) ** shift)
    return sign * float(frac)


class DecodeRangeError(ValueError):
    pass


def encrypt_value(q: float, public_key: PublicKey, base: int = DEFAULT_BASE,
                  r: int | None = None) -> EncryptedNumber:
    return encode(q, public_key, base).encrypt(r=r)


def decrypt_value(x: EncryptedNumber, private_key: PrivateKey, base: int | None = None) -> float:
    s = private_key.decrypt(x.ciphertext)
    return decode(EncodedNumber(s, x.exponent, x.public_key, base or x.base))


def _check_compatible(a, b) -> None:
    if a.public_key.m != b.public_key.m:
        raise paillier.KeyMismatchError("operands under different keys")
    if a.base != b.base:
        raise ValueError("operands with different encoding bases")


def add_encrypted(a: EncryptedNumber, b: EncryptedNumber) -> EncryptedNumber:
    """Exact encrypted sum; result exponent is min(e_a, e_b)."""
    _check_compatible(a, b)
    e = min(a.exponent, b.exponent)
    gap = max(a.exponent, b.exponent) - e
    if a.base ** gap >= int(a.public_key.m):
        raise OverflowBandError("exponent gap too large to align without overflow")
    a, b = a.decrease_exponent_to(e), b.decrease_exponent_to(e)
    return EncryptedNumber(paillier.add(a.ciphertext, b.ciphertext), e, a.base)


def add_encoded(a: EncryptedNumber, k: EncodedNumber) -> EncryptedNumber:
    """Encrypted + plaintext-encoded, exact."""
    _check_compatible(a, k)
    e = min(a.exponent, k.exponent)
    a, k = a.decrease_exponent_to(e), k.decrease_exponent_to(e)
    ct = paillier.add(a.ciphertext, a.public_key.encrypt(k.significand))
    return EncryptedNumber(ct, e, a.base)


def raw_mul_encoded(a: EncryptedNumber, k: EncodedNumber) -> EncryptedNumber:
    """Significands multiply, exponents add; no re-randomization."""
    _check_compatible(a, k)
    ct = paillier.raw_mul_plain(a.ciphertext, k.significand)
    return EncryptedNumber(ct, a.exponent + k.exponent, a.base)


def mul_plain_encrypted(a: EncryptedNumber, k: EncodedNumber) -> EncryptedNumber:
    """Encrypted * plaintext-encoded, re-randomized."""
    out = raw_mul_encoded(a, k)
    return EncryptedNumber(paillier.rerandomize(out.ciphertext), out.exponent, out.base)


def mul_plain_value(a: EncryptedNumber, k: float) -> EncryptedNumber:
    return mul_plain_encrypted(a, encode(k, a.public_key, a.base))


def rerandomize(a: EncryptedNumber) -> EncryptedNumber:
    return EncryptedNumber(paillier.rerandomize(a.ciphertext), a.exponent, a.base)


def dot_encrypted_values(enc_vec: list[EncryptedNumber], plain_vec, base: int | None = None) -> EncryptedNumber:
    """Inner product of an encrypted vector with plaintext floats.

    Products are accumulated exactly at a common minimal exponent and the
    resulting ciphertext is re-randomized once.
    """
    if len(enc_vec) != len(plain_vec):
        raise ValueError("dimension mismatch")
    if not enc_vec:
        raise ValueError("empty vectors")
    pk = enc_vec[0].public_key
    b = base or enc_vec[0].base
    products = [raw_mul_encoded(a, encode(float(k), pk, b)) for a, k in zip(enc_vec, plain_vec)]
    e = min(p.exponent for p in products)
    acc = products[0].decrease_exponent_to(e).ciphertext
    for p in products[1:]:
        acc = paillier.add(acc, p.decrease_exponent_to(e).ciphertext)
    return EncryptedNumber(paillier.rerandomize(acc), e, b)


def encrypt_mask_bits(mask, public_key: PublicKey, base: int = DEFAULT_BASE) -> list[EncryptedNumber]:
    """Elementwise encryption of a 0/1 vector with fresh randomness.

    Every bit is encoded at the exponent of a fresh encoding of 1.0; a
    zero bit must not get a different public exponent, or the exponent
    metadata would reveal the bit.
    """
    one = encode(1.0, public_key, base)
    out = []
    for bit in mask:
        bit = int(bit)
        if bit not in (0, 1):
            raise ValueError("mask entries must be 0 or 1")
        out.append(EncodedNumber(one.significand if bit else 0, one.exponent,
                                 public_key, base).encrypt())
    return out


def leakage_range(a: EncryptedNumber, factors: int = 1) -> tuple[float, float]:
    """Magnitude bracket [2^c, 2^c * base^factors) implied by the public exponent.

    A fresh encoding of a nonzero value always falls in the bracket with
    `factors` = 1; a product of two fresh encodings widens it to base^2 (one
    extra factor of `base` of uncertainty per multiplication).
    """
    lb = _log2_base(a.base)
    c = a.exponent * lb + factors * (_MANTISSA_BITS - 1)
    lo = math.ldexp(1.0, c) if abs(c) < 1 << 30 else math.exp(c * math.log(2.0))
    return lo, lo * float(a.base) ** factors
