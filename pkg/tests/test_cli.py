"""Tests for the command-line front end.

Each subcommand is exercised through main() with file outputs; results
are verified against the corresponding library calls.
"""

import csv
import hashlib

import numpy as np
import pytest

from fedlink import clk as clkmod
from fedlink import cli, learn, paillier
from fedlink.cli import EXIT_ASSUMPTIONS, EXIT_OK, EXIT_USAGE, load_config, main


def _pi_csv(tmp_path, name, rows):
    path = tmp_path / name
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return str(path)


def test_usage_errors_exit_1(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["bogus-command"]) == EXIT_USAGE
    assert main(["clk", "--input", "/nonexistent.csv", "--fields", "a"]) == EXIT_USAGE
    capsys.readouterr()


def test_config_file_parsing(tmp_path):
    path = tmp_path / "cfg"
    path.write_text("# comment\n  eta = 0.25 \nmode=plaintext\n\nbatch=8 # tail\n")
    cfg = load_config(str(path))
    assert cfg == {"eta": "0.25", "mode": "plaintext", "batch": "8"}
    bad = tmp_path / "bad"
    bad.write_text("just words\n")
    with pytest.raises(cli.UsageError):
        load_config(str(bad))


def test_keygen_outputs_valid_keypair(tmp_path):
    out = tmp_path / "key"
    assert main(["keygen", "--bits", "256", "--allow-insecure",
                 "--out", str(out)]) == EXIT_OK
    kv = dict(line.split("=", 1) for line in out.read_text().splitlines())
    m, p, q = int(kv["modulus"]), int(kv["prime_p"]), int(kv["prime_q"])
    assert p * q == m
    pk = paillier.PublicKey(m, insecure=True)
    sk = paillier.PrivateKey(p, q, pk)
    assert sk.decrypt(pk.encrypt(42)) == 42


def test_clk_and_match_round_trip(tmp_path):
    records = [
        {"first_name": "alice", "last_name": "jones"},
        {"first_name": "bob", "last_name": "smith"},
        {"first_name": "carol", "last_name": "lee"},
    ]
    path_a = _pi_csv(tmp_path, "a.csv", records)
    path_b = _pi_csv(tmp_path, "b.csv", list(reversed(records)))
    secret = hashlib.blake2b(b"s", digest_size=16).hexdigest()
    base = ["--fields", "first_name,last_name", "--secret", secret]
    clks_a, clks_b = tmp_path / "a.clk", tmp_path / "b.clk"
    assert main(["clk", "--input", path_a, "--out", str(clks_a)] + base) == EXIT_OK
    assert main(["clk", "--input", path_b, "--out", str(clks_b)] + base) == EXIT_OK

    # hex lines decode to the library's linking codes
    ccfg = clkmod.ClkConfig(fields=("first_name", "last_name"),
                            secret=bytes.fromhex(secret))
    expected = clkmod.build_clk(records[0], ccfg)
    first = clkmod.Clk.from_bytes(bytes.fromhex(clks_a.read_text().splitlines()[0]))
    assert np.array_equal(first.bits, expected.bits)

    out = tmp_path / "pairs.csv"
    assert main(["match", "--a", str(clks_a), "--b", str(clks_b),
                 "--dice-threshold", "1.0", "--seed", "3",
                 "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3
    matched = {(int(r["a_index"]), int(r["b_index"]))
               for r in rows if r["mask"] == "1"}
    assert matched == {(0, 2), (1, 1), (2, 0)}


def _aligned_csv(tmp_path, n=40, d=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = np.sign(rng.normal(size=n))
    y[y == 0] = 1.0
    rows = []
    for i in range(n):
        row = {f"x{j}": repr(float(X[i, j])) for j in range(d)}
        row["label"] = str(int(y[i]))
        row["mask"] = "1"
        rows.append(row)
    path = _pi_csv(tmp_path, "aligned.csv", rows)
    return path, X, y


def test_train_plain_matches_library(tmp_path):
    path, X, y = _aligned_csv(tmp_path)
    out = tmp_path / "model"
    trace = tmp_path / "trace.csv"
    argv = ["train-plain", "--input", path, "--label-col", "label",
            "--mask-col", "mask", "--holdout", "8", "--max-epochs", "5",
            "--patience", "100", "--out", str(out), "--trace-out", str(trace)]
    assert main(argv) == EXIT_OK
    kv = dict(line.split("=", 1) for line in out.read_text().splitlines())
    cfg = learn.TrainConfig(eta=0.05, gamma=0.01, batch=32, holdout=8,
                            patience=100, max_epochs=5)
    ref = learn.train_sag(learn.Dataset(X, y), cfg, mask=np.ones(len(y)))
    assert int(kv["epochs"]) == ref.epochs
    for j in range(X.shape[1]):
        assert float(kv[f"theta_x{j}"]) == ref.model.theta[j]
    rows = list(csv.DictReader(trace.open()))
    assert [r["epoch"] for r in rows] == [str(i + 1) for i in range(ref.epochs)]
    assert set(rows[0]) == {"epoch", "train_taylor", "holdout_taylor",
                            "holdout_logistic"}
    for row, loss in zip(rows, ref.trace):
        assert float(row["holdout_taylor"]) == pytest.approx(loss)


def test_train_secure_matches_train_plain(tmp_path):
    path, X, y = _aligned_csv(tmp_path, n=30, d=4, seed=1)
    out_p, out_s = tmp_path / "plain", tmp_path / "secure"
    shared = ["--input", path, "--label-col", "label", "--mask-col", "mask",
              "--holdout", "6", "--max-epochs", "2", "--batch", "10"]
    assert main(["train-plain"] + shared + ["--out", str(out_p)]) == EXIT_OK
    assert main(["train-secure"] + shared +
                ["--split-at", "2", "--key-bits", "256",
                 "--out", str(out_s)]) == EXIT_OK
    kv_p = dict(line.split("=", 1) for line in out_p.read_text().splitlines())
    kv_s = dict(line.split("=", 1) for line in out_s.read_text().splitlines())
    assert kv_p["epochs"] == kv_s["epochs"]
    for key in kv_p:
        if key.startswith("theta_"):
            assert float(kv_s[key]) == pytest.approx(float(kv_p[key]), abs=1e-9)


def test_run_plaintext_with_config_file(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        "mode=plaintext\nn-rows=200\nn-features=6\nshared-fraction=1.0\n"
        "typo-rate=0.0\ndice-threshold=0.9\nholdout=8\nmax-epochs=5\n"
        "seed=11\nformat=kv\n")
    out = tmp_path / "report"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
    kv = dict(line.split("=", 1) for line in out.read_text().splitlines())
    assert float(kv["matching_error"]) == 0.0
    assert kv["aligned_rows"] == kv["matched_pairs"]
    # flag overrides beat config values
    out2 = tmp_path / "report2"
    assert main(["run", "--config", str(cfg_path), "--format", "text",
                 "--out", str(out2)]) == EXIT_OK
    assert "matching error rate" in out2.read_text()


def test_theory_exit_codes(tmp_path):
    out = tmp_path / "theory"
    argv = ["theory", "--mode", "theory", "--n-rows", "60", "--n-features", "6",
            "--directions", "200", "--transpositions", "2", "--out", str(out)]
    assert main(argv) == EXIT_OK
    kv = dict(line.split("=", 1) for line in out.read_text().splitlines())
    assert kv["assumptions_hold"] == "1"
    assert kv["drift_holds"] == "1" and kv["loss_gap_holds"] == "1"
    # alpha close to 1 makes the transposition budget unattainable
    argv_bad = argv[:-2] + ["--alpha", "0.999", "--out", str(tmp_path / "t2")]
    assert main(argv_bad) == EXIT_ASSUMPTIONS


def test_console_script_entry_point():
    import importlib.metadata as md
    eps = md.entry_points(group="console_scripts")
    ours = [e for e in eps if e.name == "fedlink"]
    assert ours and ours[0].value == "fedlink.cli:main"
