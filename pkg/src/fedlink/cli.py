"""Command-line front end.

Subcommands:

* ``keygen``        generate a key pair and write it as key=value text
* ``clk``           build linking codes for a CSV of identifier fields
* ``match``         align two linking-code files into a masked pairing
* ``train-plain``   plaintext surrogate training on an aligned CSV
* ``train-secure``  the same training through the three-party protocol
* ``theory``        drift / loss-gap bound checks on a dataset
* ``run``           the full end-to-end experiment

Options may come from a single ``key=value`` config file (``--config``);
explicit flags override config values.  Exit codes: 0 success, 1 usage
error, 2 protocol abort, 3 assumption-check failure in theory mode.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import clk as clkmod
from . import encoding, learn, paillier, pipeline
from .learn import TrainConfig
from .pipeline import RunConfig
from .protocol import SessionAborted, run_session
from .protocol.parties import ProtocolConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2
EXIT_ASSUMPTIONS = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise UsageError(message)


def load_config(path: str | None) -> dict:
    """Read a key=value text file; '#' starts a comment."""
    if not path:
        return {}
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {raw.strip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _get(args, config, key, cast, default):
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in config:
        raw = config[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes")
        return cast(raw)
    return default


def _train_config(args, config) -> TrainConfig:
    return TrainConfig(
        eta=_get(args, config, "eta", float, 0.05),
        gamma=_get(args, config, "gamma", float, 0.01),
        batch=_get(args, config, "batch", int, 32),
        holdout=_get(args, config, "holdout", int, 32),
        patience=_get(args, config, "patience", int, 5),
        min_delta=_get(args, config, "min-delta", float, 1e-6),
        max_epochs=_get(args, config, "max-epochs", int, 100),
        seed=_get(args, config, "seed", int, 0),
    )


def _add_train_flags(p):
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--holdout", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--min-delta", type=float, dest="min_delta")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--seed", type=int)


def _write(path: str | None, text: str):
    if path and path != "-":
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_trace_csv(path: str, detail: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_taylor",
                                                "holdout_taylor",
                                                "holdout_logistic"])
        writer.writeheader()
        writer.writerows(detail)


# --- subcommands ----------------------------------------------------------

def cmd_keygen(args, config):
    bits = _get(args, config, "bits", int, 1024)
    allow = bool(_get(args, config, "allow-insecure", bool, False))
    pk, sk = paillier.keygen(bits, allow_insecure=allow)
    text = f"modulus={pk.m}\nprime_p={sk.p}\nprime_q={sk.q}\n"
    _write(args.out, text)
    return EXIT_OK


def _read_records(path, fields):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise UsageError("empty CSV")
    missing = [f for f in fields if f not in rows[0]]
    if missing:
        raise UsageError(f"missing identifier columns: {missing}")
    return rows


def _clk_config(args, config) -> clkmod.ClkConfig:
    fields = _get(args, config, "fields", str, "")
    if not fields:
        raise UsageError("--fields is required (comma-separated)")
    secret = _get(args, config, "secret", str, "")
    return clkmod.ClkConfig(
        l=_get(args, config, "clk-bits", int, 1024),
        k=_get(args, config, "clk-hashes", int, 20),
        n=_get(args, config, "clk-ngram", int, 2),
        fields=tuple(f.strip() for f in fields.split(",")),
        secret=bytes.fromhex(secret) if secret else b"",
    )


def cmd_clk(args, config):
    ccfg = _clk_config(args, config)
    rows = _read_records(args.input, ccfg.fields)
    lines = [clkmod.build_clk(r, ccfg).to_bytes().hex() for r in rows]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def _read_clks(path):
    with open(path) as fh:
        return [clkmod.Clk.from_bytes(bytes.fromhex(line.strip()))
                for line in fh if line.strip()]


def cmd_match(args, config):
    clks_a = _read_clks(args.a)
    clks_b = _read_clks(args.b)
    threshold = _get(args, config, "dice-threshold", float, 0.8)
    seed = _get(args, config, "seed", int, 0)
    linkage = clkmod.match(clks_a, clks_b, threshold, seed=seed)
    lines = ["slot,a_index,b_index,mask,score"]
    lines += [f"{i},{linkage.sigma[i]},{linkage.tau[i]},{linkage.mask[i]},"
              f"{linkage.scores[i]:.6f}" for i in range(len(linkage.mask))]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def _load_aligned(args, config):
    label_col = _get(args, config, "label-col", str, "label")
    mask_col = _get(args, config, "mask-col", str, "")
    with open(args.input, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise UsageError("empty CSV")
    feat_names = [c for c in rows[0] if c not in (label_col, mask_col)]
    X = np.array([[float(r[c]) for c in feat_names] for r in rows])
    y = np.array([float(r[label_col]) for r in rows])
    if set(np.unique(y)) <= {0.0, 1.0}:
        y = 2.0 * y - 1.0
    mask = (np.array([float(r[mask_col]) for r in rows])
            if mask_col else np.ones(len(rows)))
    return X, y, mask, feat_names


def _emit_model(args, result, feat_names):
    lines = [f"epochs={result.epochs}"]
    lines += [f"theta_{name}={float(w)!r}" for name, w in
              zip(feat_names, result.model.theta)]
    _write(args.out, "\n".join(lines) + "\n")
    if getattr(args, "trace_out", None):
        _write_trace_csv(args.trace_out, result.detail)


def cmd_train_plain(args, config):
    X, y, mask, feat_names = _load_aligned(args, config)
    tcfg = _train_config(args, config)
    result = learn.train_sag(learn.Dataset(X, y), tcfg, mask=mask)
    _emit_model(args, result, feat_names)
    return EXIT_OK


def cmd_train_secure(args, config):
    X, y, mask, feat_names = _load_aligned(args, config)
    split_at = _get(args, config, "split-at", int, X.shape[1] // 2)
    if not (0 < split_at < X.shape[1]):
        raise UsageError("--split-at must leave both providers a column")
    tcfg = _train_config(args, config)
    key_bits = _get(args, config, "key-bits", int, 1024)
    pcfg = ProtocolConfig(train=tcfg, n=len(y), key_bits=key_bits,
                          allow_insecure_keys=key_bits < 1024)
    res = run_session(pcfg, X[:, :split_at], y, X[:, split_at:],
                      mask.astype(int))
    # assemble the same detail rows as plaintext training for the CSV
    detail = [{"epoch": i + 1, "train_taylor": float("nan"),
               "holdout_taylor": loss, "holdout_logistic": float("nan")}
              for i, loss in enumerate(res.trace)]
    res.detail = detail
    _emit_model(args, res, feat_names)
    return EXIT_OK


def _run_config(args, config) -> RunConfig:
    fa = _get(args, config, "features-a", str, "")
    fb = _get(args, config, "features-b", str, "")
    pi = _get(args, config, "pi-cols", str, ",".join(pipeline.PI_FIELDS))
    return RunConfig(
        dataset=_get(args, config, "dataset", str, None),
        n_rows=_get(args, config, "n-rows", int, 1000),
        n_features=_get(args, config, "n-features", int, 10),
        label_col=_get(args, config, "label-col", str, "label"),
        pi_cols=tuple(c.strip() for c in pi.split(",") if c.strip()),
        features_a=tuple(c.strip() for c in fa.split(",") if c.strip()),
        features_b=tuple(c.strip() for c in fb.split(",") if c.strip()),
        shared_fraction=_get(args, config, "shared-fraction", float, 1.0),
        typo_rate=_get(args, config, "typo-rate", float, 0.02),
        missing_rate=_get(args, config, "missing-rate", float, 0.0),
        clk_bits=_get(args, config, "clk-bits", int, 1024),
        clk_hashes=_get(args, config, "clk-hashes", int, 20),
        clk_ngram=_get(args, config, "clk-ngram", int, 2),
        dice_threshold=_get(args, config, "dice-threshold", float, 0.8),
        train=_train_config(args, config),
        key_bits=_get(args, config, "key-bits", int, 1024),
        mode=_get(args, config, "mode", str, "secure"),
        balance=_get(args, config, "balance", str, "subsample"),
        test_fraction=_get(args, config, "test-fraction", float, 0.2),
        seed=_get(args, config, "seed", int, 0),
    )


def cmd_theory(args, config):
    cfg = _run_config(args, config)
    out = pipeline.run_theory(
        cfg,
        T=_get(args, config, "transpositions", int, 3),
        alpha=_get(args, config, "alpha", float, 0.25),
        n_directions=_get(args, config, "directions", int, 10_000))
    lines = []
    for name in ("drift", "loss_gap"):
        rep = out[name]
        lines += [f"{name}_empirical={rep.empirical!r}",
                  f"{name}_bound={rep.bound!r}",
                  f"{name}_holds={int(rep.holds)}"]
        for key, value in rep.assumptions.values.items():
            lines.append(f"{name}_assumption_{key}={value!r}")
    lines.append(f"assumptions_hold={int(out['assumptions_hold'])}")
    lines.append(f"all_bounds_hold={int(out['all_bounds_hold'])}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK if out["assumptions_hold"] else EXIT_ASSUMPTIONS


def cmd_run(args, config):
    cfg = _run_config(args, config)
    if cfg.mode == "theory":
        return cmd_theory(args, config)
    report = pipeline.run(cfg)
    fmt = _get(args, config, "format", str, "text")
    text = report.to_kv() if fmt == "kv" else report.to_text()
    _write(args.out, text + "\n")
    return EXIT_OK


# --- argument wiring ------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="fedlink", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--out", default="-", help="output path (default stdout)")

    p = sub.add_parser("keygen", help="generate a key pair")
    common(p)
    p.add_argument("--bits", type=int)
    p.add_argument("--allow-insecure", action="store_const", const=True,
                   dest="allow_insecure")

    p = sub.add_parser("clk", help="build linking codes from a CSV")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--fields")
    p.add_argument("--secret")
    p.add_argument("--clk-bits", type=int, dest="clk_bits")
    p.add_argument("--clk-hashes", type=int, dest="clk_hashes")
    p.add_argument("--clk-ngram", type=int, dest="clk_ngram")

    p = sub.add_parser("match", help="align two linking-code files")
    common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--dice-threshold", type=float, dest="dice_threshold")
    p.add_argument("--seed", type=int)

    for name, func_flags in (("train-plain", False), ("train-secure", True)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} on an aligned CSV")
        common(p)
        p.add_argument("--input", required=True)
        p.add_argument("--label-col", dest="label_col")
        p.add_argument("--mask-col", dest="mask_col")
        p.add_argument("--trace-out", dest="trace_out",
                       help="per-epoch loss CSV")
        _add_train_flags(p)
        if func_flags:
            p.add_argument("--split-at", type=int, dest="split_at")
            p.add_argument("--key-bits", type=int, dest="key_bits")

    def run_flags(p):
        common(p)
        p.add_argument("--dataset")
        p.add_argument("--n-rows", type=int, dest="n_rows")
        p.add_argument("--n-features", type=int, dest="n_features")
        p.add_argument("--label-col", dest="label_col")
        p.add_argument("--pi-cols", dest="pi_cols")
        p.add_argument("--features-a", dest="features_a")
        p.add_argument("--features-b", dest="features_b")
        p.add_argument("--shared-fraction", type=float, dest="shared_fraction")
        p.add_argument("--typo-rate", type=float, dest="typo_rate")
        p.add_argument("--missing-rate", type=float, dest="missing_rate")
        p.add_argument("--clk-bits", type=int, dest="clk_bits")
        p.add_argument("--clk-hashes", type=int, dest="clk_hashes")
        p.add_argument("--clk-ngram", type=int, dest="clk_ngram")
        p.add_argument("--dice-threshold", type=float, dest="dice_threshold")
        p.add_argument("--key-bits", type=int, dest="key_bits")
        p.add_argument("--mode")
        p.add_argument("--balance")
        p.add_argument("--test-fraction", type=float, dest="test_fraction")
        _add_train_flags(p)

    p = sub.add_parser("theory", help="bound checks on a dataset")
    run_flags(p)
    p.add_argument("--transpositions", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--directions", type=int)

    p = sub.add_parser("run", help="full end-to-end experiment")
    run_flags(p)
    p.add_argument("--format", choices=["text", "kv"])
    p.add_argument("--transpositions", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--directions", type=int)

    return parser


_COMMANDS = {
    "keygen": cmd_keygen,
    "clk": cmd_clk,
    "match": cmd_match,
    "train-plain": cmd_train_plain,
    "train-secure": cmd_train_secure,
    "theory": cmd_theory,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config(getattr(args, "config", None))
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SessionAborted as exc:
        print(f"protocol abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
