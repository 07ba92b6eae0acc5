"""Tests for the additively homomorphic cryptosystem.

Oracles used here:
* direct modular exponentiation (m+1)^x r^m mod m^2 with the deterministic
  randomness hook,
* exhaustive plaintext round-trips on a tiny test-only key,
* plain Python integer arithmetic for the homomorphic laws.
"""

import random

import gmpy2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedlink import paillier

# Module-scoped keys so the expensive generation happens once.


@pytest.fixture(scope="module")
def keypair():
    return paillier.keygen(1024)


@pytest.fixture(scope="module")
def tiny_keypair():
    return paillier.keygen(64, allow_insecure=True)


def test_keygen_modulus_size(keypair):
    pk, sk = keypair
    assert pk.bits == 1024
    assert pk.m == sk.p * sk.q
    assert sk.p != sk.q


def test_keygen_refuses_small_keys_by_default():
    with pytest.raises(ValueError):
        paillier.keygen(128)
    with pytest.raises(ValueError):
        paillier.keygen(32, allow_insecure=True)  # below the hard floor


def test_insecure_flag_set(tiny_keypair):
    pk, _ = tiny_keypair
    assert pk.insecure


def test_round_trip_random(keypair):
    pk, sk = keypair
    rng = random.Random(7)
    for _ in range(50):
        x = rng.randrange(int(pk.m))
        assert sk.decrypt(pk.encrypt(x)) == x


def test_round_trip_boundaries(keypair):
    pk, sk = keypair
    for x in (0, 1, int(pk.m) - 1):
        assert sk.decrypt(pk.encrypt(x)) == x


def test_encrypt_rejects_out_of_range(keypair):
    pk, _ = keypair
    with pytest.raises(paillier.PlaintextRangeError):
        pk.encrypt(-1)
    with pytest.raises(paillier.PlaintextRangeError):
        pk.encrypt(int(pk.m))


def test_randomized_encryption_distinct(keypair):
    pk, sk = keypair
    seen = {pk.encrypt(0).value for _ in range(100)}
    assert len(seen) == 100
    assert all(sk.decrypt(paillier.Ciphertext(v, pk)) == 0 for v in list(seen)[:5])


def test_deterministic_hook_matches_direct_exponentiation(keypair):
    # Oracle: ciphertext with forced r must equal g^x r^m mod m^2 computed
    # from scratch, with g = m + 1.
    pk, _ = keypair
    m, m_sq = int(pk.m), int(pk.m_sq)
    for x, r in [(5, 1), (0, 3), (12345, 67890), (m - 1, 2)]:
        expected = (pow(m + 1, x, m_sq) * pow(r, m, m_sq)) % m_sq
        assert int(pk.raw_encrypt(x, r=r)) == expected


def test_exhaustive_small_plaintexts(tiny_keypair):
    # Brute force over plaintexts 0..2^16 on the 64-bit test key.
    pk, sk = tiny_keypair
    for x in range(0, 1 << 16, 257):
        assert sk.decrypt(pk.encrypt(x)) == x
    for x in range(256):
        assert sk.decrypt(pk.encrypt(x)) == x


def test_add_homomorphism(keypair):
    pk, sk = keypair
    rng = random.Random(11)
    m = int(pk.m)
    for _ in range(50):
        x, y = rng.randrange(m), rng.randrange(m)
        ct = paillier.add(pk.encrypt(x), pk.encrypt(y))
        assert sk.decrypt(ct) == (x + y) % m


def test_add_wraparound(keypair):
    pk, sk = keypair
    m = int(pk.m)
    assert sk.decrypt(paillier.add(pk.encrypt(m - 1), pk.encrypt(1))) == 0


def test_add_zero_rerandomizes(keypair):
    pk, sk = keypair
    ct = pk.encrypt(42)
    ct2 = paillier.add(ct, pk.encrypt_zero())
    assert ct2.value != ct.value
    assert sk.decrypt(ct2) == 42


def test_add_key_mismatch(keypair, tiny_keypair):
    pk, _ = keypair
    pk2, _ = tiny_keypair
    with pytest.raises(paillier.KeyMismatchError):
        paillier.add(pk.encrypt(1), pk2.encrypt(1))


def test_mul_plain_scalar_law(keypair):
    pk, sk = keypair
    rng = random.Random(13)
    m = int(pk.m)
    for _ in range(30):
        x, k = rng.randrange(m), rng.randrange(m)
        assert sk.decrypt(paillier.mul_plain(pk.encrypt(x), k)) == (x * k) % m


def test_mul_plain_annihilator_and_identity(keypair):
    pk, sk = keypair
    ct = pk.encrypt(99)
    assert sk.decrypt(paillier.mul_plain(ct, 0)) == 0
    by_one = paillier.mul_plain(ct, 1)
    assert sk.decrypt(by_one) == 99
    assert by_one.value != ct.value  # re-randomization contract


def test_mul_plain_differs_from_naive_repeated_addition(keypair):
    # The obfuscated product must not equal the ciphertext produced by the
    # naive unrandomized path, even though both decrypt identically.
    pk, sk = keypair
    ct = pk.encrypt(7)
    naive = paillier.raw_mul_plain(ct, 3)
    obfuscated = paillier.mul_plain(ct, 3)
    assert naive.value != obfuscated.value
    assert sk.decrypt(naive) == sk.decrypt(obfuscated) == 21


def test_mul_plain_negative_style_factor(keypair):
    # Factors in the upper half of Z_m act as negatives and exercise the
    # inverse-ciphertext fast path.
    pk, sk = keypair
    m = int(pk.m)
    x = 1234
    k = m - 5  # acts as -5
    assert sk.decrypt(paillier.mul_plain(pk.encrypt(x), k)) == (x * k) % m == m - 5 * x


def test_dot_encrypted_small(keypair):
    pk, sk = keypair
    enc = [pk.encrypt(v) for v in (1, 2, 3)]
    assert sk.decrypt(paillier.dot_encrypted(enc, [1, 1, 1])) == 6
    assert sk.decrypt(paillier.dot_encrypted(enc, [0, 0, 0])) == 0


def test_dot_encrypted_random_oracle(keypair):
    pk, sk = keypair
    rng = random.Random(17)
    m = int(pk.m)
    v = [rng.randrange(1 << 40) for _ in range(8)]
    w = [rng.randrange(1 << 40) for _ in range(8)]
    expected = sum(a * b for a, b in zip(v, w)) % m
    assert sk.decrypt(paillier.dot_encrypted([pk.encrypt(x) for x in v], w)) == expected


def test_dot_encrypted_length_mismatch(keypair):
    pk, _ = keypair
    with pytest.raises(ValueError):
        paillier.dot_encrypted([pk.encrypt(1)], [1, 2])


def test_matmul_plain_encrypted(keypair):
    pk, sk = keypair
    rng = random.Random(19)
    m = int(pk.m)
    A = [[rng.randrange(100) for _ in range(3)] for _ in range(2)]
    B = [[rng.randrange(100) for _ in range(4)] for _ in range(3)]
    enc_B = [[pk.encrypt(v) for v in row] for row in B]
    out = paillier.matmul_plain_encrypted(A, enc_B)
    for i in range(2):
        for j in range(4):
            expected = sum(A[i][t] * B[t][j] for t in range(3)) % m
            assert sk.decrypt(out[i][j]) == expected


def test_serialization_round_trips(keypair):
    pk, sk = keypair
    assert paillier.PublicKey.from_bytes(pk.to_bytes()).m == pk.m
    sk2 = paillier.PrivateKey.from_bytes(sk.to_bytes(), pk)
    ct = pk.encrypt(321)
    assert sk2.decrypt(ct) == 321


def test_decrypt_rejects_invalid_group_element(keypair):
    pk, sk = keypair
    with pytest.raises(paillier.DecodeError):
        sk.decrypt(paillier.Ciphertext(gmpy2.mpz(0), pk))
    with pytest.raises(paillier.DecodeError):
        sk.decrypt(paillier.Ciphertext(pk.m_sq, pk))


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=(1 << 62) - 1), st.integers(min_value=0, max_value=(1 << 62) - 1))
def test_property_homomorphism(x, y):
    pk, sk = _PROP_KEY
    m = int(pk.m)
    assert sk.decrypt(paillier.add(pk.encrypt(x % m), pk.encrypt(y % m))) == (x + y) % m


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=(1 << 62) - 1), st.integers(min_value=-(1 << 30), max_value=1 << 30))
def test_property_scalar_law(x, k):
    pk, sk = _PROP_KEY
    m = int(pk.m)
    assert sk.decrypt(paillier.mul_plain(pk.encrypt(x % m), k)) == (x * k) % m


# One shared small-but-valid key for the hypothesis properties; generated at
# import time to keep per-example cost low.
_PROP_KEY = paillier.keygen(256, allow_insecure=True)
