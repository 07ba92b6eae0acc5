"""Bloom-filter linking codes and greedy private matching.

Each record's selected identifier fields are normalized, chopped into
padded n-grams, and every n-gram sets k bit positions of a fixed-length
bit vector via a keyed double-hashing schedule.  Two such codes are
compared with the Dice coefficient; a greedy pass over all cross pairs
above a similarity threshold yields an alignment of the two datasets:
two permutations plus a binary mask marking which aligned rows are
believed to be the same entity.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import encoding
from .encoding import EncryptedNumber
from .paillier import PublicKey

DEFAULT_FILTER_BITS = 1024
DEFAULT_HASHES = 20
DEFAULT_NGRAM = 2


@dataclass(frozen=True)
class ClkConfig:
    """Parameters of the linking-code construction."""

    l: int = DEFAULT_FILTER_BITS
    k: int = DEFAULT_HASHES
    n: int = DEFAULT_NGRAM
    fields: tuple[str, ...] = ()
    secret: bytes = b""

    def __post_init__(self):
        if self.l <= 0 or self.k < 1 or self.n < 1:
            raise ValueError("invalid linking-code parameters")


@dataclass(frozen=True)
class Clk:
    """Fixed-length bit vector with cached popcount."""

    bits: np.ndarray  # uint8 0/1 array of length l
    popcount: int = field(default=-1)

    def __post_init__(self):
        if self.popcount < 0:
            object.__setattr__(self, "popcount", int(self.bits.sum()))

    def __len__(self) -> int:
        return self.bits.shape[0]

    def to_bytes(self) -> bytes:
        """4-byte BE length in bits, then packed bytes MSB-first."""
        return len(self).to_bytes(4, "big") + np.packbits(self.bits).tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Clk":
        l = int.from_bytes(buf[:4], "big")
        packed = np.frombuffer(buf[4:4 + (l + 7) // 8], dtype=np.uint8)
        return cls(np.unpackbits(packed)[:l].astype(np.uint8))


def normalize_field(value: str) -> str:
    """Lowercase, trim, collapse internal whitespace."""
    return " ".join(str(value).split()).lower()


def ngrams(value: str, n: int) -> list[str]:
    """Padded n-grams; '_' marks the word boundary."""
    if not value:
        return []
    padded = "_" * (n - 1) + value + "_" * (n - 1)
    return [padded[i:i + n] for i in range(len(padded) - n + 1)]


def _bit_positions(gram: str, field_name: str, cfg: ClkConfig) -> list[int]:
    """Double-hashing schedule: positions (H1 + i*H2) mod l, i = 0..k-1.

    H1 and H2 are the two 8-byte halves of one keyed blake2b digest over
    the field name and the n-gram, so the same n-gram in different fields
    sets different positions.
    """
    digest = hashlib.blake2b(
        field_name.encode() + b"\x00" + gram.encode(),
        key=cfg.secret[:64], digest_size=16).digest()
    h1 = int.from_bytes(digest[:8], "big")
    h2 = int.from_bytes(digest[8:], "big")
    return [(h1 + i * h2) % cfg.l for i in range(cfg.k)]


def build_clk(record: dict, cfg: ClkConfig) -> Clk:
    """Deterministic linking code for one record under a shared config.

    Missing or empty fields contribute no n-grams; a fully empty record
    yields the all-zero vector.
    """
    bits = np.zeros(cfg.l, dtype=np.uint8)
    for name in cfg.fields:
        value = normalize_field(record.get(name, ""))
        for gram in ngrams(value, cfg.n):
            bits[_bit_positions(gram, name, cfg)] = 1
    return Clk(bits)


def dice(a: Clk, b: Clk) -> float:
    """2|a AND b| / (|a| + |b|); defined as 0 for two empty vectors."""
    if len(a) != len(b):
        raise ValueError("linking codes of different lengths")
    total = a.popcount + b.popcount
    if total == 0:
        return 0.0
    return 2.0 * int(np.bitwise_and(a.bits, b.bits).sum()) / total


def score_matrix(clks_a: list[Clk], clks_b: list[Clk]) -> np.ndarray:
    """All-pairs Dice scores as an n_a x n_b float64 matrix.

    The bit vectors are stacked and multiplied as one dense product, which
    keeps the quadratic comparison affordable at desk scale.
    """
    A = np.stack([c.bits for c in clks_a]).astype(np.float32)
    B = np.stack([c.bits for c in clks_b]).astype(np.float32)
    inter = A @ B.T
    pops_a = np.array([c.popcount for c in clks_a], dtype=np.float64)
    pops_b = np.array([c.popcount for c in clks_b], dtype=np.float64)
    denom = pops_a[:, None] + pops_b[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(denom > 0, 2.0 * inter.astype(np.float64) / denom, 0.0)
    return scores


@dataclass(frozen=True)
class Linkage:
    """Alignment of two datasets to a common length n.

    Position i pairs A's row sigma[i] with B's row tau[i]; mask[i] = 1
    when that pair was selected as a match, and scores[i] is the aligned
    pair's Dice score.
    """

    sigma: np.ndarray
    tau: np.ndarray
    mask: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        n = self.mask.shape[0]
        assert self.sigma.shape[0] == self.tau.shape[0] == self.scores.shape[0] == n
        assert len(set(self.sigma.tolist())) == n and len(set(self.tau.tolist())) == n


def greedy_pairs(scores: np.ndarray, threshold: float) -> list[tuple[int, int, float]]:
    """Greedy one-to-one selection of pairs with score >= threshold.

    Pairs are taken in descending score order; ties break on the smaller
    A index, then the smaller B index, for determinism.
    """
    ai, bi = np.nonzero(scores >= threshold)
    vals = scores[ai, bi]
    order = np.lexsort((bi, ai, -vals))
    used_a: set[int] = set()
    used_b: set[int] = set()
    out = []
    for idx in order:
        a, b = int(ai[idx]), int(bi[idx])
        if a in used_a or b in used_b:
            continue
        used_a.add(a)
        used_b.add(b)
        out.append((a, b, float(vals[idx])))
    return out


def match(clks_a: list[Clk], clks_b: list[Clk], threshold: float,
          seed: int | None = None) -> Linkage:
    """Score, greedily select, truncate and randomize into a Linkage.

    The longer dataset is truncated to the common length by dropping only
    unmatched rows (matches never exceed the shorter length, so matched
    rows always survive).  Aligned positions of matched pairs and the
    relative order of unmatched fill are shuffled with the seeded
    generator, so the output order reveals nothing about the score order.
    """
    if not clks_a or not clks_b:
        raise ValueError("empty input")
    if not (0.0 <= threshold <= 1.0):
        raise ValueError("threshold outside [0, 1]")
    scores = score_matrix(clks_a, clks_b)
    pairs = greedy_pairs(scores, threshold)
    n = min(len(clks_a), len(clks_b))
    rng = np.random.default_rng(seed)

    matched_a = [a for a, _, _ in pairs]
    matched_b = [b for _, b, _ in pairs]
    free_a = [i for i in range(len(clks_a)) if i not in set(matched_a)]
    free_b = [i for i in range(len(clks_b)) if i not in set(matched_b)]
    fill = n - len(pairs)
    # Truncation drops unmatched rows from the longer side only; the kept
    # unmatched fill is a random subset.
    keep_a = list(rng.permutation(free_a)[:fill].astype(int)) if free_a else []
    keep_b = list(rng.permutation(free_b)[:fill].astype(int)) if free_b else []

    positions = rng.permutation(n)
    sigma = np.empty(n, dtype=np.int64)
    tau = np.empty(n, dtype=np.int64)
    mask = np.zeros(n, dtype=np.int64)
    out_scores = np.zeros(n, dtype=np.float64)
    slots_matched = positions[:len(pairs)]
    slots_free = positions[len(pairs):]
    for slot, (a, b, s) in zip(slots_matched, pairs):
        sigma[slot], tau[slot], mask[slot], out_scores[slot] = a, b, 1, s
    for slot, a, b in zip(slots_free, keep_a, keep_b):
        sigma[slot], tau[slot] = a, b
        out_scores[slot] = scores[a, b]
    return Linkage(sigma, tau, mask, out_scores)


def encrypt_mask(mask, pk: PublicKey, base: int = encoding.DEFAULT_BASE) -> list[EncryptedNumber]:
    """Elementwise encryption of the 0/1 mask at one shared public exponent."""
    return encoding.encrypt_mask_bits(mask, pk, base)
