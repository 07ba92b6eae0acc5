"""End-to-end experiment orchestration.

Takes a dataset with personal identifiers (PI), splits it vertically
across two providers with controlled entity overlap and independently
corrupted PI, links the two views privately, trains either through the
secure three-party protocol or the plaintext oracle, and compares
against a baseline trained on the perfectly linked data.  Ground-truth
entity ids are kept by the harness for error scoring only and never
enter a provider view or a protocol message.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import clk, learn, theory
from .learn import TrainConfig
from .protocol import low_match_batch_probability, run_session, scan_transcript
from .protocol.parties import ProtocolConfig

PI_FIELDS = ("first_name", "last_name", "birth_date", "address")

_FIRST_NAMES = [
    "james", "mary", "john", "patricia", "robert", "jennifer", "michael",
    "linda", "william", "elizabeth", "david", "barbara", "richard", "susan",
    "joseph", "jessica", "thomas", "sarah", "charles", "karen", "chen", "wei",
    "amina", "fatima", "juan", "maria", "ivan", "olga", "kenji", "yuki",
]
_LAST_NAMES = [
    "smith", "johnson", "williams", "brown", "jones", "garcia", "miller",
    "davis", "rodriguez", "martinez", "hernandez", "lopez", "gonzalez",
    "wilson", "anderson", "thomas", "taylor", "moore", "jackson", "martin",
    "nguyen", "kim", "chen", "singh", "kumar", "ali", "ahmed", "ivanov",
]
_STREETS = [
    "oak", "maple", "cedar", "pine", "elm", "walnut", "chestnut", "spruce",
    "birch", "willow", "ash", "poplar", "sycamore", "magnolia", "juniper",
]
_STREET_TYPES = ["st", "ave", "rd", "ln", "dr", "ct", "blvd", "way"]


# --- data containers ------------------------------------------------------

@dataclass
class DataBundle:
    """A dataset with ground-truth entity ids, PI, features and labels."""

    entity_ids: np.ndarray
    pi: list[dict]
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]

    def __post_init__(self):
        n = len(self.entity_ids)
        if not (len(self.pi) == self.X.shape[0] == self.y.shape[0] == n):
            raise ValueError("inconsistent bundle lengths")

    def take(self, rows) -> "DataBundle":
        rows = np.asarray(rows)
        return DataBundle(self.entity_ids[rows], [self.pi[i] for i in rows],
                          self.X[rows], self.y[rows], self.feature_names)


@dataclass
class ProviderView:
    """One provider's private table: PI plus a feature block, labels only
    on provider A.  `entity_ids` are retained by the harness for scoring
    and must never be shown to the other parties."""

    pi: list[dict]
    X: np.ndarray
    y: np.ndarray | None
    entity_ids: np.ndarray
    feature_names: list[str]


# --- synthetic credit-scoring generator -----------------------------------

def generate_credit_bundle(n: int, d: int = 10, seed: int = 0,
                           positive_rate: float = 0.07) -> DataBundle:
    """Synthetic consumer-credit dataset: numeric features, PI fields
    (name, date of birth, address), and a rare default label whose rate
    mirrors a 93/7 class imbalance."""
    if n < 10:
        raise ValueError("need at least 10 rows")
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    score = X @ w / np.linalg.norm(w) + 0.8 * rng.normal(size=n)
    cut = np.quantile(score, 1.0 - positive_rate)
    y = np.where(score > cut, 1.0, -1.0)
    pi = []
    for _ in range(n):
        year = int(rng.integers(1950, 2006))
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 29))
        pi.append({
            "first_name": str(rng.choice(_FIRST_NAMES)),
            "last_name": str(rng.choice(_LAST_NAMES)),
            "birth_date": f"{year:04d}-{month:02d}-{day:02d}",
            "address": (f"{int(rng.integers(1, 9999))} "
                        f"{rng.choice(_STREETS)} {rng.choice(_STREET_TYPES)}"),
        })
    names = [f"feat_{j}" for j in range(d)]
    return DataBundle(np.arange(n), pi, X, y, names)


def load_csv_bundle(path: str, label_col: str, pi_cols: list[str]) -> DataBundle:
    """Adapter for user-supplied CSVs: every non-PI, non-label column is a
    numeric feature; labels must be in {-1, 1} or {0, 1}."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("empty dataset")
    feat_names = [c for c in rows[0] if c != label_col and c not in pi_cols]
    X = np.array([[float(r[c]) for c in feat_names] for r in rows])
    y = np.array([float(r[label_col]) for r in rows])
    if set(np.unique(y)) <= {0.0, 1.0}:
        y = 2.0 * y - 1.0
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("labels must be binary")
    pi = [{c: r.get(c, "") for c in pi_cols} for r in rows]
    return DataBundle(np.arange(len(rows)), pi, X, y, feat_names)


# --- PI corruption --------------------------------------------------------

_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789 "


def _typo(value: str, rng) -> str:
    if not value:
        return value
    i = int(rng.integers(len(value)))
    kind = rng.integers(3)
    if kind == 0:  # substitute
        repl = _ALPHABET[int(rng.integers(len(_ALPHABET)))]
        return value[:i] + repl + value[i + 1:]
    if kind == 1:  # transpose with the next character
        if len(value) == 1:
            return value
        i = min(i, len(value) - 2)
        return value[:i] + value[i + 1] + value[i] + value[i + 2:]
    return value[:i] + value[i + 1:]  # delete


def corrupt_pi(records: list[dict], typo_rate: float, missing_rate: float,
               seed: int) -> list[dict]:
    """Per-field independent corruption: empty the field with probability
    missing_rate, otherwise apply one random character edit (substitute,
    transpose, or delete, uniformly) with probability typo_rate."""
    if not (0.0 <= typo_rate <= 1.0 and 0.0 <= missing_rate <= 1.0):
        raise ValueError("rates outside [0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    for rec in records:
        new = {}
        for name, value in rec.items():
            if rng.uniform() < missing_rate:
                new[name] = ""
            elif rng.uniform() < typo_rate:
                new[name] = _typo(str(value), rng)
            else:
                new[name] = str(value)
        out.append(new)
    return out


# --- vertical split -------------------------------------------------------

def vertical_split(bundle: DataBundle, features_a: list[str],
                   features_b: list[str], shared_fraction: float,
                   seed: int) -> tuple[ProviderView, ProviderView]:
    """Split columns between providers and control entity overlap.

    floor(f * n) entities appear in both views; the remaining entities
    are divided into two disjoint halves, one per view, so at f = 0 the
    views share nothing.  Each view's rows are then independently
    shuffled with secret permutations.
    """
    if not (0.0 <= shared_fraction <= 1.0):
        raise ValueError("shared fraction outside [0, 1]")
    names = bundle.feature_names
    if sorted(features_a + features_b) != sorted(names) or \
            set(features_a) & set(features_b):
        raise ValueError("feature split must cover all feature columns exactly once")
    n = len(bundle.entity_ids)
    common = int(shared_fraction * n)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shared = order[:common]
    rest = order[common:]
    only_a = rest[:len(rest) // 2]
    only_b = rest[len(rest) // 2:]

    rows_a = np.concatenate([shared, only_a]).astype(int)
    rows_b = np.concatenate([shared, only_b]).astype(int)
    rows_a = rows_a[rng.permutation(len(rows_a))]
    rows_b = rows_b[rng.permutation(len(rows_b))]

    cols_a = [names.index(c) for c in features_a]
    cols_b = [names.index(c) for c in features_b]
    view_a = ProviderView(pi=[bundle.pi[i] for i in rows_a],
                          X=bundle.X[np.ix_(rows_a, cols_a)],
                          y=bundle.y[rows_a],
                          entity_ids=bundle.entity_ids[rows_a],
                          feature_names=list(features_a))
    view_b = ProviderView(pi=[bundle.pi[i] for i in rows_b],
                          X=bundle.X[np.ix_(rows_b, cols_b)],
                          y=None,
                          entity_ids=bundle.entity_ids[rows_b],
                          feature_names=list(features_b))
    return view_a, view_b


# --- configuration and report ---------------------------------------------

@dataclass
class RunConfig:
    dataset: str | None = None        # CSV path; None -> synthetic generator
    n_rows: int = 1000                # synthetic generator size
    n_features: int = 10
    label_col: str = "label"
    pi_cols: tuple[str, ...] = PI_FIELDS
    features_a: tuple[str, ...] = ()  # empty -> first half of feature columns
    features_b: tuple[str, ...] = ()
    shared_fraction: float = 1.0
    typo_rate: float = 0.02
    missing_rate: float = 0.0
    clk_bits: int = 1024
    clk_hashes: int = 20
    clk_ngram: int = 2
    dice_threshold: float = 0.8
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        eta=0.05, gamma=0.01, batch=32, holdout=32, patience=5, max_epochs=50))
    key_bits: int = 1024
    mode: str = "secure"              # secure | plaintext | theory
    balance: str = "subsample"        # subsample | oversample | none
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("secure", "plaintext", "theory"):
            raise ValueError("unknown mode")
        if self.balance not in ("subsample", "oversample", "none"):
            raise ValueError("unknown balancing strategy")
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test fraction outside (0, 1)")


@dataclass
class RunReport:
    matching_error: float
    matched_pairs: int
    aligned_rows: int
    secure_metrics: dict
    baseline_metrics: dict
    deltas: dict
    timings: dict
    leakage_probability: float
    transcript_clean: bool | None
    epochs: int
    baseline_epochs: int

    def to_text(self) -> str:
        lines = [
            f"aligned rows: {self.aligned_rows}  matched pairs: {self.matched_pairs}",
            f"matching error rate: {self.matching_error:.4f}",
            f"secure   acc={self.secure_metrics['accuracy']:.2f} "
            f"auc={self.secure_metrics['auc']:.2f} f1={self.secure_metrics['f1']:.2f} "
            f"(epochs {self.epochs})",
            f"baseline acc={self.baseline_metrics['accuracy']:.2f} "
            f"auc={self.baseline_metrics['auc']:.2f} f1={self.baseline_metrics['f1']:.2f} "
            f"(epochs {self.baseline_epochs})",
            "deltas   " + " ".join(f"{k}={v:+.2f}" for k, v in self.deltas.items()),
            f"P[batch has <=1 matched row] = {self.leakage_probability:.3g}",
        ]
        if self.transcript_clean is not None:
            lines.append(f"transcript clean: {self.transcript_clean}")
        lines += [f"time {k}: {v:.3f}s" for k, v in self.timings.items()]
        return "\n".join(lines)

    def to_kv(self) -> str:
        pairs = {
            "matching_error": self.matching_error,
            "matched_pairs": self.matched_pairs,
            "aligned_rows": self.aligned_rows,
            "epochs": self.epochs,
            "baseline_epochs": self.baseline_epochs,
            "leakage_probability": self.leakage_probability,
        }
        for prefix, d in (("secure", self.secure_metrics),
                          ("baseline", self.baseline_metrics),
                          ("delta", self.deltas)):
            pairs.update({f"{prefix}_{k}": v for k, v in d.items()})
        if self.transcript_clean is not None:
            pairs["transcript_clean"] = int(self.transcript_clean)
        pairs.update({f"time_{k}": round(v, 6) for k, v in self.timings.items()})
        return "\n".join(f"{k}={v}" for k, v in pairs.items())


# --- orchestration helpers ------------------------------------------------

def split_test(bundle: DataBundle, fraction: float, seed: int):
    """Label-stratified test split; the test rows keep the natural class
    imbalance and are never touched by balancing."""
    rng = np.random.default_rng(seed)
    test_rows = []
    for cls in (-1.0, 1.0):
        rows = np.nonzero(bundle.y == cls)[0]
        k = int(round(fraction * len(rows)))
        test_rows.extend(rng.permutation(rows)[:k].tolist())
    test_rows = np.sort(np.array(test_rows, dtype=int))
    train_rows = np.setdiff1d(np.arange(len(bundle.y)), test_rows)
    return bundle.take(train_rows), bundle.take(test_rows)


def balance_classes(bundle: DataBundle, strategy: str, seed: int) -> DataBundle:
    """Equalize class counts: subsample the majority or oversample the
    minority; 'none' returns the input unchanged."""
    if strategy == "none":
        return bundle
    rng = np.random.default_rng(seed)
    pos = np.nonzero(bundle.y > 0)[0]
    neg = np.nonzero(bundle.y < 0)[0]
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    if strategy == "subsample":
        kept = rng.permutation(majority)[:len(minority)]
        rows = np.sort(np.concatenate([minority, kept]))
    else:  # oversample
        extra = rng.choice(minority, size=len(majority) - len(minority), replace=True)
        rows = np.sort(np.concatenate([majority, minority, extra]))
    return bundle.take(rows)


def _clk_config(cfg: RunConfig) -> clk.ClkConfig:
    secret = hashlib.blake2b(f"linkage-{cfg.seed}".encode(), digest_size=32).digest()
    return clk.ClkConfig(l=cfg.clk_bits, k=cfg.clk_hashes, n=cfg.clk_ngram,
                         fields=tuple(cfg.pi_cols), secret=secret)


def link_views(view_a: ProviderView, view_b: ProviderView, cfg: RunConfig):
    """Build linking codes on the (corrupted) PI of both views and match.

    Returns the linkage plus the matching error rate scored against the
    harness-held ground-truth entity ids.
    """
    ccfg = _clk_config(cfg)
    clks_a = [clk.build_clk(r, ccfg) for r in view_a.pi]
    clks_b = [clk.build_clk(r, ccfg) for r in view_b.pi]
    linkage = clk.match(clks_a, clks_b, cfg.dice_threshold, seed=cfg.seed)
    matched = np.nonzero(linkage.mask)[0]
    if len(matched):
        wrong = np.sum(view_a.entity_ids[linkage.sigma[matched]]
                       != view_b.entity_ids[linkage.tau[matched]])
        error = float(wrong) / len(matched)
    else:
        error = 0.0
    return linkage, error


def _fit_plain(X: np.ndarray, y: np.ndarray, mask, train: TrainConfig):
    data = learn.Dataset(X, y)
    m = None if mask is None else np.asarray(mask, dtype=float)
    return learn.train_sag(data, train, mask=m)


def _metrics(model, X_test, y_test) -> dict:
    return learn.evaluate(model, learn.Dataset(X_test, y_test))


@dataclass
class PreparedRun:
    """Everything run() needs after ingestion, splitting and linking."""

    view_a: ProviderView
    view_b: ProviderView
    X_A: np.ndarray
    y_aligned: np.ndarray
    X_B: np.ndarray
    mask: np.ndarray
    matching_error: float
    train: TrainConfig
    X_test: np.ndarray
    y_test: np.ndarray
    timings: dict


def prepare_linked_training(cfg: RunConfig) -> PreparedRun:
    """Ingest, split off the test rows, balance, split vertically,
    corrupt PI per view, and link.  Deterministic given cfg."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    if cfg.dataset:
        bundle = load_csv_bundle(cfg.dataset, cfg.label_col, list(cfg.pi_cols))
    else:
        bundle = generate_credit_bundle(cfg.n_rows, cfg.n_features, cfg.seed)
    features_a = list(cfg.features_a) or bundle.feature_names[:len(bundle.feature_names) // 2]
    features_b = list(cfg.features_b) or [c for c in bundle.feature_names
                                          if c not in features_a]
    train_bundle, test_bundle = split_test(bundle, cfg.test_fraction, cfg.seed + 1)
    train_bundle = balance_classes(train_bundle, cfg.balance, cfg.seed + 2)
    timings["prepare"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    view_a, view_b = vertical_split(train_bundle, features_a, features_b,
                                    cfg.shared_fraction, cfg.seed + 3)
    view_a = replace(view_a, pi=corrupt_pi(view_a.pi, cfg.typo_rate,
                                           cfg.missing_rate, cfg.seed + 4))
    view_b = replace(view_b, pi=corrupt_pi(view_b.pi, cfg.typo_rate,
                                           cfg.missing_rate, cfg.seed + 5))
    linkage, matching_error = link_views(view_a, view_b, cfg)
    timings["match"] = time.perf_counter() - t0

    mask = linkage.mask.astype(int)
    n = len(mask)
    train = cfg.train
    if train.holdout >= n:
        train = replace(train, holdout=max(2, n // 5))
    cols = [bundle.feature_names.index(c) for c in features_a + features_b]
    return PreparedRun(view_a=view_a, view_b=view_b,
                       X_A=view_a.X[linkage.sigma],
                       y_aligned=view_a.y[linkage.sigma],
                       X_B=view_b.X[linkage.tau], mask=mask,
                       matching_error=matching_error, train=train,
                       X_test=test_bundle.X[:, cols], y_test=test_bundle.y,
                       timings=timings)


def run(cfg: RunConfig) -> RunReport:
    """Execute the full experiment described by cfg.

    Both the linked pipeline and the perfectly-linked baseline are
    trained with the same configuration and evaluated on the identical
    held-out test rows; deltas are pipeline minus baseline.
    """
    if cfg.mode == "theory":
        raise ValueError("theory mode is handled by run_theory")
    prep = prepare_linked_training(cfg)
    view_a, view_b = prep.view_a, prep.view_b
    X_A, y_aligned, X_B = prep.X_A, prep.y_aligned, prep.X_B
    mask, train = prep.mask, prep.train
    n = len(mask)
    timings = dict(prep.timings)

    t0 = time.perf_counter()
    transcript_clean = None
    if cfg.mode == "secure":
        pcfg = ProtocolConfig(train=train, n=n, key_bits=cfg.key_bits,
                              allow_insecure_keys=cfg.key_bits < 1024)
        res = run_session(pcfg, X_A, y_aligned, X_B, mask)
        secure_model, secure_epochs = res.model, res.epochs
        audit = scan_transcript(
            res.recorder.payloads(),
            features=np.hstack([X_A, X_B]), labels=y_aligned, mask=mask)
        entity_audit = scan_transcript(
            res.recorder.payloads(),
            features=np.concatenate([view_a.entity_ids, view_b.entity_ids]).astype(float))
        transcript_clean = audit.clean and entity_audit.clean
    else:
        res = _fit_plain(np.hstack([X_A, X_B]), y_aligned, mask, train)
        secure_model, secure_epochs = res.model, res.epochs
    timings["train"] = time.perf_counter() - t0

    # Perfectly-linked baseline: ground-truth alignment of the common
    # entities, trained with the same configuration.
    t0 = time.perf_counter()
    common, ia, ib = np.intersect1d(view_a.entity_ids, view_b.entity_ids,
                                    return_indices=True)
    Xb_full = np.hstack([view_a.X[ia], view_b.X[ib]])
    yb_full = view_a.y[ia]
    btrain = train if train.holdout < len(common) else replace(
        train, holdout=max(2, len(common) // 5))
    base = _fit_plain(Xb_full, yb_full, None, btrain)
    timings["baseline"] = time.perf_counter() - t0

    secure_metrics = _metrics(secure_model, prep.X_test, prep.y_test)
    baseline_metrics = _metrics(base.model, prep.X_test, prep.y_test)
    deltas = {k: secure_metrics[k] - baseline_metrics[k] for k in secure_metrics}

    leak = low_match_batch_probability(n - train.holdout, int(mask.sum()
                                       - mask[learn.split_holdout(n, train.holdout, train.seed)[0]].sum()),
                                       min(train.batch, n - train.holdout))
    return RunReport(matching_error=prep.matching_error,
                     matched_pairs=int(mask.sum()), aligned_rows=n,
                     secure_metrics=secure_metrics,
                     baseline_metrics=baseline_metrics, deltas=deltas,
                     timings=timings, leakage_probability=leak,
                     transcript_clean=transcript_clean,
                     epochs=secure_epochs, baseline_epochs=base.epochs)


def run_theory(cfg: RunConfig, T: int = 3, alpha: float = 0.25,
               n_directions: int = 10_000) -> dict:
    """Theory mode: build a calibrated instance from the configured
    dataset (unit-norm rows, near-duplicate swap pairs), then evaluate
    the drift and loss-gap bounds with their assumption checks."""
    if cfg.dataset:
        bundle = load_csv_bundle(cfg.dataset, cfg.label_col, list(cfg.pi_cols))
    else:
        bundle = generate_credit_bundle(cfg.n_rows, cfg.n_features, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    X = np.array(bundle.X)
    y = np.array(bundle.y)
    n, d = X.shape
    pairs = []
    used: set[int] = set()
    while len(pairs) < min(T, n // 2):
        u, v = (int(z) for z in rng.integers(n, size=2))
        if u == v or u in used or v in used:
            continue
        X[v] = X[u] + 0.02 * rng.normal(size=d)
        y[v] = y[u]
        used.update((u, v))
        pairs.append((u, v))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    fact = theory.PermutationFactorization.from_pairs(n, pairs, y)
    d_anchor = d // 2
    gamma = max(cfg.train.gamma, 1.0)
    drift = theory.check_drift_bound(X, y, d_anchor, fact, gamma, None, alpha,
                                     n_directions=n_directions, seed=cfg.seed)
    gap = theory.check_loss_gap(X, y, d_anchor, fact, gamma, None, alpha,
                                acc=drift.values["accuracy"],
                                n_directions=n_directions, seed=cfg.seed)
    return {"drift": drift, "loss_gap": gap,
            "assumptions_hold": drift.assumptions.all_hold,
            "all_bounds_hold": drift.holds and gap.holds}
