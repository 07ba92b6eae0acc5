"""Exact float arithmetic under encryption.

Binary64 values are carried as (significand, exponent) pairs whose
significand is what actually gets encrypted; products and sums of
encrypted values are exact rationals until decode.  The exponent is
public metadata, and `leakage_range` shows precisely how much it tells
an observer.
"""

from fedlink import encoding, paillier


def main():
    pk, sk = paillier.keygen(1024)

    v = 0.1 + 0.2  # the classic 0.30000000000000004
    enc = encoding.encode(v, pk)
    print(f"encode({v!r}) -> significand of {enc.significand.bit_length()} bits, "
          f"exponent {enc.exponent}")
    print("round trip bit-exact:", encoding.decode(enc) == v)

    a = encoding.encrypt_value(1.5, pk)
    b = encoding.encrypt_value(-2.25, pk)
    total = encoding.add_encrypted(a, b)
    print("\nEnc(1.5) + Enc(-2.25) =", encoding.decrypt_value(total, sk))

    prod = encoding.mul_plain_value(a, 0.1)
    print("Enc(1.5) * 0.1        =", encoding.decrypt_value(prod, sk),
          " (exact rational 3/2 * decimal-0.1 under the hood)")

    xs = [0.3, -1.7, 2.5, 0.9]
    ws = [1.25, 0.5, -0.75, 2.0]
    dot = encoding.dot_encrypted_values(
        [encoding.encrypt_value(x, pk) for x in xs], ws)
    print(f"\nencrypted dot {xs}·{ws} =", encoding.decrypt_value(dot, sk))

    lo, hi = encoding.leakage_range(enc)
    print(f"\npublic exponent brackets |value| within [{lo:.3e}, {hi:.3e});")
    print("that interval is the entire information content of the metadata.")


if __name__ == "__main__":
    main()
