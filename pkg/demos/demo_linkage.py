"""Private record linkage on noisy identifiers.

Two organizations hold overlapping customer lists with typos.  Each
builds keyed bit-vector linking codes locally; only the codes are
compared, never the raw identifiers.  The demo shows similarity scores,
the greedy one-to-one alignment, and the error rate against ground
truth that the parties themselves never see.
"""

import hashlib

import numpy as np

from fedlink import clk
from fedlink.pipeline import corrupt_pi, generate_credit_bundle


def main():
    bundle = generate_credit_bundle(200, seed=7)
    secret = hashlib.blake2b(b"agreed out of band", digest_size=32).digest()
    cfg = clk.ClkConfig(fields=("first_name", "last_name", "birth_date",
                                "address"), secret=secret)

    # both sides corrupt independently: typos, missing fields
    pi_a = corrupt_pi(bundle.pi, typo_rate=0.05, missing_rate=0.02, seed=1)
    pi_b = corrupt_pi(bundle.pi, typo_rate=0.05, missing_rate=0.02, seed=2)
    order_b = np.random.default_rng(3).permutation(200)  # B's secret shuffle

    clks_a = [clk.build_clk(r, cfg) for r in pi_a]
    clks_b = [clk.build_clk(pi_b[i], cfg) for i in order_b]

    same = clk.dice(clks_a[0], clks_b[int(np.argmax(order_b == 0))])
    other = clk.dice(clks_a[0], clks_b[int(np.argmax(order_b == 1))])
    print(f"Dice(same entity, typos) = {same:.3f};  Dice(different) = {other:.3f}")

    linkage = clk.match(clks_a, clks_b, threshold=0.8, seed=0)
    matched = np.nonzero(linkage.mask)[0]
    truth_b = order_b[linkage.tau[matched]]
    wrong = int(np.sum(linkage.sigma[matched] != truth_b))
    print(f"\nmatched {len(matched)} of 200 pairs at threshold 0.8")
    print(f"wrong matches: {wrong} ({wrong / max(1, len(matched)):.1%}) "
          "- scored by the narrator, not by either party")
    print("aligned output order is shuffled, so positions leak nothing "
          "about match quality.")


if __name__ == "__main__":
    main()
