"""Additively homomorphic encryption in five minutes.

Generates a key pair, shows that ciphertexts add and scale without the
secret key, and that re-randomization changes bytes but not plaintext.
"""

from fedlink import paillier


def main():
    print("Generating a 1024-bit key pair (use >= 2048 bits in production)...")
    pk, sk = paillier.keygen(1024)
    print(f"  public modulus: {int(pk.m).bit_length()} bits")

    x, y, k = 1_234_567, 42, 17
    cx, cy = pk.encrypt(x), pk.encrypt(y)
    print(f"\nEnc({x}) ⊕ Enc({y}) decrypts to", sk.decrypt(paillier.add(cx, cy)))
    print(f"Enc({x}) · {k}        decrypts to", sk.decrypt(paillier.mul_plain(cx, k)))

    c1 = pk.encrypt(99)
    c2 = paillier.rerandomize(c1)
    print("\nRe-randomization: same plaintext, fresh ciphertext bytes:")
    print("  ciphertexts equal:", int(c1.value) == int(c2.value))
    print("  plaintexts equal: ", sk.decrypt(c1) == sk.decrypt(c2) == 99)

    enc_vec = [pk.encrypt(v) for v in (3, 1, 4, 1, 5)]
    weights = [2, 7, 1, 8, 2]
    dot = paillier.dot_encrypted(enc_vec, weights)
    print("\nEncrypted dot product [3,1,4,1,5]·[2,7,1,8,2] =", sk.decrypt(dot))


if __name__ == "__main__":
    main()
