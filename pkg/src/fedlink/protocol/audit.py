"""Leakage auditing: batch-composition probabilities and transcript scans.

Two independent checks of what the protocol gives away:

1. Batch composition.  The Coordinator learns each decrypted batch
   gradient; an all-zero gradient reveals that the batch contained no
   matched rows.  With M matched rows among n, the matched count in a
   uniformly chosen batch of size s' is hypergeometric, so the chance of
   a batch with at most k matches is a closed-form probability the
   Coordinator can evaluate before agreeing to a batch size.

2. Transcript scan.  Every byte that crossed the transport is searched
   for serialized plaintext secrets (feature values, labels, mask).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import hypergeom


def batch_match_cdf(n: int, M: int, s_prime: int, k: int) -> float:
    """P[matched rows in a random size-s' batch <= k].

    n rows total, M of them matched.  Exact hypergeometric CDF.
    """
    if not (0 <= M <= n):
        raise ValueError("match count outside [0, n]")
    if not (0 < s_prime <= n):
        raise ValueError("batch size outside (0, n]")
    if k < 0:
        return 0.0
    return float(hypergeom.cdf(k, n, M, s_prime))


def low_match_batch_probability(n: int, M: int, s_prime: int) -> float:
    """P[a batch holds at most one matched row] — the quantity a cautious
    Coordinator compares against its ceiling before proceeding."""
    return batch_match_cdf(n, M, s_prime, 1)


@dataclass
class AuditReport:
    findings: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.findings


def _float_patterns(values) -> set[bytes]:
    pats = set()
    for v in np.asarray(values, dtype=np.float64).ravel():
        pats.add(struct.pack(">d", v))
        pats.add(struct.pack("<d", v))
    return pats


def scan_transcript(payloads, features=None, labels=None, mask=None,
                    allowed=()) -> AuditReport:
    """Search message payloads for plaintext secrets.

    `features` and `labels` are scanned as 8-byte IEEE doubles in both
    byte orders; `mask` both as a byte string of 0/1 values and as packed
    bits.  `allowed` lists byte patterns that are legitimately public
    (e.g. model coefficients) and are excluded from findings.
    """
    report = AuditReport()
    blob_list = list(payloads)
    secret_sets = []
    if features is not None:
        secret_sets.append(("feature value", _float_patterns(features)))
    if labels is not None:
        secret_sets.append(("label value", _float_patterns(labels)))
    if mask is not None:
        m = np.asarray(mask).astype(np.uint8)
        mask_pats = {m.tobytes(), np.packbits(m).tobytes()}
        mask_pats = {p for p in mask_pats if len(p) >= 4}
        secret_sets.append(("mask vector", mask_pats))
    allowed_pats = set(allowed)
    for idx, payload in enumerate(blob_list):
        for name, patterns in secret_sets:
            for pat in patterns:
                if pat in allowed_pats:
                    continue
                if pat in payload:
                    report.findings.append(
                        f"payload {idx}: {name} bytes {pat.hex()} found in clear")
    return report
