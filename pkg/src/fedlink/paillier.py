"""Paillier additively homomorphic encryption.

Public-key scheme over arbitrary-precision integers.  The private key is a
pair of large primes (p, q), the public key their product m = pq.  Plaintexts
live in Z_m, ciphertexts in the multiplicative group mod m^2.  Encryption is
randomized: Enc(x) = g^x r^m mod m^2 with g = m + 1 and r drawn fresh and
uniformly from the invertible residues mod m.

Supported homomorphic operations:

* ``add(a, b)``            -- decrypts to (x + y) mod m
* ``mul_plain(a, k)``      -- decrypts to x*k mod m, re-randomized so that the
                              plaintext factor cannot be confirmed by redoing
                              the multiplication
* ``dot_encrypted(v, w)``  -- inner product of an encrypted vector with a
                              plaintext vector

Multiplying two ciphertexts together is not possible in this scheme.

Big-integer arithmetic is delegated to gmpy2.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpz

DEFAULT_KEY_BITS = 1024
MIN_SECURE_BITS = 1024
MIN_KEY_BITS = 64  # floor for insecure test keys

# Miller-Rabin rounds used on top of gmpy2's baillie-psw style check.
_PRIME_ROUNDS = 40
_PRIME_RETRIES = 10_000


class KeyMismatchError(ValueError):
    """Operands were produced under different public keys."""


class PlaintextRangeError(ValueError):
    """Plaintext outside Z_m."""


class DecodeError(ValueError):
    """Ciphertext not a valid group element for this key."""


def _random_prime(bits: int) -> mpz:
    """Random probable prime of exactly `bits` bits."""
    for _ in range(_PRIME_RETRIES):
        candidate = mpz(secrets.randbits(bits - 2)) | (mpz(1) << (bits - 1)) | (mpz(1) << (bits - 2)) | 1
        candidate = gmpy2.next_prime(candidate)
        if candidate.bit_length() == bits and gmpy2.is_prime(candidate, _PRIME_ROUNDS):
            return candidate
    raise RuntimeError(f"prime generation failed after {_PRIME_RETRIES} attempts")


def _int_to_bytes(x: int) -> bytes:
    x = int(x)
    raw = x.to_bytes((x.bit_length() + 7) // 8 or 1, "big")
    return len(raw).to_bytes(4, "big") + raw


def _int_from_bytes(buf: bytes, offset: int = 0) -> tuple[int, int]:
    """Read one length-prefixed big-endian unsigned integer; returns (value, next_offset)."""
    n = int.from_bytes(buf[offset:offset + 4], "big")
    start = offset + 4
    return int.from_bytes(buf[start:start + n], "big"), start + n


@dataclass(frozen=True)
class Ciphertext:
    """An element of Z_{m^2}^*, tagged with its public key."""

    value: mpz
    public_key: "PublicKey"

    def to_bytes(self) -> bytes:
        return _int_to_bytes(self.value)


@dataclass(frozen=True)
class PublicKey:
    """Paillier public key: modulus m (g is fixed to m + 1)."""

    m: mpz
    m_sq: mpz = field(init=False, repr=False, compare=False)
    insecure: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "m", mpz(self.m))
        object.__setattr__(self, "m_sq", self.m * self.m)

    @property
    def g(self) -> mpz:
        return self.m + 1

    @property
    def bits(self) -> int:
        return self.m.bit_length()

    def random_invertible(self) -> mpz:
        while True:
            r = mpz(secrets.randbelow(int(self.m - 1))) + 1
            if gmpy2.gcd(r, self.m) == 1:
                return r

    def raw_encrypt(self, x: int, r: int | None = None) -> mpz:
        """Ciphertext value g^x r^m mod m^2.

        `r` exists as a hook for deterministic tests only; leaving it None
        draws fresh randomness from the OS CSPRNG.
        """
        x = mpz(x)
        if not (0 <= x < self.m):
            raise PlaintextRangeError(f"plaintext {x} outside [0, m)")
        # g = m + 1  =>  g^x = 1 + x*m  (mod m^2)
        gx = (1 + x * self.m) % self.m_sq
        rm = gmpy2.powmod(mpz(r) if r is not None else self.random_invertible(), self.m, self.m_sq)
        return (gx * rm) % self.m_sq

    def encrypt(self, x: int, r: int | None = None) -> Ciphertext:
        return Ciphertext(self.raw_encrypt(x, r), self)

    def encrypt_zero(self) -> Ciphertext:
        return self.encrypt(0)

    def to_bytes(self) -> bytes:
        return _int_to_bytes(self.m)

    @classmethod
    def from_bytes(cls, buf: bytes, insecure: bool = False) -> "PublicKey":
        m, _ = _int_from_bytes(buf)
        return cls(mpz(m), insecure=insecure)


class PrivateKey:
    """Paillier private key with CRT-accelerated decryption."""

    def __init__(self, p: int, q: int, public_key: PublicKey):
        p, q = mpz(p), mpz(q)
        if p == q or not gmpy2.is_prime(p) or not gmpy2.is_prime(q):
            raise ValueError("private key requires two distinct primes")
        if p * q != public_key.m:
            raise KeyMismatchError("p*q does not match the public modulus")
        self.p, self.q = p, q
        self.public_key = public_key
        # Cached CRT data, read-only after construction.
        self._p_sq = p * p
        self._q_sq = q * q
        self._q_inv_p = gmpy2.invert(q, p)
        self._hp = gmpy2.invert(self._l_func(gmpy2.powmod(public_key.g, p - 1, self._p_sq), p), p)
        self._hq = gmpy2.invert(self._l_func(gmpy2.powmod(public_key.g, q - 1, self._q_sq), q), q)

    @staticmethod
    def _l_func(u: mpz, n: mpz) -> mpz:
        return (u - 1) // n

    def decrypt(self, ct: Ciphertext) -> int:
        if ct.public_key.m != self.public_key.m:
            raise KeyMismatchError("ciphertext under a different key")
        c = mpz(ct.value)
        if not (0 < c < self.public_key.m_sq) or gmpy2.gcd(c, self.public_key.m_sq) != 1:
            raise DecodeError("ciphertext outside the valid group")
        mp = (self._l_func(gmpy2.powmod(c, self.p - 1, self._p_sq), self.p) * self._hp) % self.p
        mq = (self._l_func(gmpy2.powmod(c, self.q - 1, self._q_sq), self.q) * self._hq) % self.q
        u = ((mp - mq) * self._q_inv_p) % self.p
        return int(mq + u * self.q)

    def to_bytes(self) -> bytes:
        return _int_to_bytes(self.p) + _int_to_bytes(self.q)

    @classmethod
    def from_bytes(cls, buf: bytes, public_key: PublicKey) -> "PrivateKey":
        p, off = _int_from_bytes(buf)
        q, _ = _int_from_bytes(buf, off)
        return cls(p, q, public_key)


def keygen(bits: int = DEFAULT_KEY_BITS, allow_insecure: bool = False) -> tuple[PublicKey, PrivateKey]:
    """Generate a Paillier keypair with a modulus of `bits` bits.

    Keys shorter than 1024 bits are refused unless `allow_insecure` is set;
    such keys are for exhaustive small-plaintext tests only and the public
    key is flagged accordingly.
    """
    if bits < MIN_KEY_BITS:
        raise ValueError(f"key size below hard floor of {MIN_KEY_BITS} bits")
    insecure = bits < MIN_SECURE_BITS
    if insecure and not allow_insecure:
        raise ValueError(
            f"{bits}-bit keys are INSECURE; pass allow_insecure=True for test use only"
        )
    while True:
        p = _random_prime(bits // 2)
        q = _random_prime(bits - bits // 2)
        if p != q and (p * q).bit_length() == bits:
            break
    pk = PublicKey(p * q, insecure=insecure)
    return pk, PrivateKey(p, q, pk)


def _check_same_key(a: Ciphertext, b: Ciphertext) -> None:
    if a.public_key.m != b.public_key.m:
        raise KeyMismatchError("ciphertexts under different keys")


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Enc(x) (+) Enc(y) -> Enc((x + y) mod m)."""
    _check_same_key(a, b)
    pk = a.public_key
    return Ciphertext((a.value * b.value) % pk.m_sq, pk)


def raw_mul_plain(a: Ciphertext, k: int) -> Ciphertext:
    """Enc(x) * k -> Enc(x*k mod m) WITHOUT re-randomization.

    Internal building block: cheap, but the factor k can be confirmed by
    whoever produced Enc(x).  Use `mul_plain` at protocol boundaries.
    Plaintexts in the upper half of Z_m act as negatives; those are handled
    via the inverse ciphertext so the exponent stays small.
    """
    pk = a.public_key
    k = mpz(k) % pk.m
    if k == 0:
        return Ciphertext(mpz(1), pk)
    if pk.m - k < k:  # "negative" factor: raise the inverse to m - k
        base = gmpy2.invert(a.value, pk.m_sq)
        k = pk.m - k
    else:
        base = a.value
    return Ciphertext(gmpy2.powmod(base, k, pk.m_sq), pk)


def rerandomize(a: Ciphertext) -> Ciphertext:
    """Multiply in a fresh Enc(0), changing the ciphertext but not the plaintext."""
    return add(a, a.public_key.encrypt_zero())


def mul_plain(a: Ciphertext, k: int) -> Ciphertext:
    """Enc(x) * k -> Enc(x*k mod m), obfuscated by an extra Enc(0)."""
    return rerandomize(raw_mul_plain(a, k))


def dot_encrypted(enc_vec: list[Ciphertext], plain_vec) -> Ciphertext:
    """Inner product <Enc(x), y> -> Enc(<x, y> mod m), re-randomized once."""
    if len(enc_vec) != len(plain_vec):
        raise ValueError(f"dimension mismatch: {len(enc_vec)} vs {len(plain_vec)}")
    if not enc_vec:
        raise ValueError("empty vectors")
    pk = enc_vec[0].public_key
    acc = mpz(1)
    for ct, k in zip(enc_vec, plain_vec):
        _check_same_key(ct, enc_vec[0])
        acc = (acc * raw_mul_plain(ct, k).value) % pk.m_sq
    return rerandomize(Ciphertext(acc, pk))


def matmul_plain_encrypted(plain_matrix, enc_matrix: list[list[Ciphertext]]) -> list[list[Ciphertext]]:
    """A . Enc(B), component-wise over rows of A and columns of Enc(B)."""
    n_inner = len(enc_matrix)
    if any(len(row) != len(plain_matrix[0]) for row in plain_matrix[1:]):
        raise ValueError("ragged plaintext matrix")
    if len(plain_matrix[0]) != n_inner:
        raise ValueError("inner dimension mismatch")
    n_cols = len(enc_matrix[0])
    return [
        [dot_encrypted([enc_matrix[i][j] for i in range(n_inner)], row) for j in range(n_cols)]
        for row in plain_matrix
    ]
