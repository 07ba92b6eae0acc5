"""Logistic and quadratic-surrogate training machinery.

The logistic loss is approximated by its second-order expansion around
zero margin, log 2 - z/2 + z^2/8 with z = y * theta.x.  That surrogate is
a convex quadratic, so it has a closed-form ridge minimizer, and its
gradient is an affine function of theta, which is what makes encrypted
evaluation possible elsewhere in this package.

Everything here is plaintext numpy.  The masked variants (a 0/1 weight
per row, normalized by the row count rather than the mask popcount) are
the reference computations the secure three-party protocol must
reproduce bit-for-bit up to encryption arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

LOG2 = float(np.log(2.0))


@dataclass
class Dataset:
    """Feature matrix (rows = examples) with labels in {-1, +1}."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError("X must be n x d with matching label vector")
        if self.X.shape[0] == 0 or self.X.shape[1] == 0:
            raise ValueError("empty dataset")
        if not np.all(np.abs(self.y) == 1.0):
            raise ValueError("labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass
class Model:
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("non-finite weights")

    def scores(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.theta


@dataclass
class TrainConfig:
    """Hyper-parameters shared by plaintext and secure training."""

    eta: float = 0.05
    gamma: float = 1e-2
    Gamma: np.ndarray | None = None  # defaults to identity
    batch: int = 32
    holdout: int = 0
    patience: int = 5
    min_delta: float = 1e-6
    max_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0 or self.gamma < 0 or self.batch < 1:
            raise ValueError("invalid training configuration")

    def ridge_matrix(self, d: int) -> np.ndarray:
        if self.Gamma is None:
            return np.eye(d)
        G = np.asarray(self.Gamma, dtype=np.float64)
        if G.shape != (d, d) or not np.allclose(G, G.T):
            raise ValueError("ridge matrix must be symmetric d x d")
        return G


class TrainingDivergedError(RuntimeError):
    def __init__(self, trace):
        super().__init__("training diverged (non-finite loss)")
        self.trace = trace


def logistic_loss(model: Model, data: Dataset) -> float:
    """(1/n) sum log(1 + exp(-y theta.x)), numerically stable."""
    z = data.y * model.scores(data.X)
    return float(np.mean(np.logaddexp(0.0, -z)))


def taylor_loss(model: Model, data: Dataset, gamma: float = 0.0,
                Gamma: np.ndarray | None = None, mask: np.ndarray | None = None) -> float:
    """Quadratic surrogate loss plus optional ridge penalty.

    With a mask, rows where the mask is 0 contribute nothing but the
    normalization stays 1/n: this is the convention of the aligned-rows
    setting, where unmatched rows are dead weight of known count.
    """
    z = data.y * model.scores(data.X)
    per_row = LOG2 - 0.5 * z + 0.125 * z * z
    if mask is not None:
        per_row = np.asarray(mask, dtype=np.float64) * per_row
    loss = float(np.mean(per_row))
    if gamma:
        G = np.eye(data.d) if Gamma is None else Gamma
        loss += gamma * float(model.theta @ G @ model.theta)
    return loss


def holdout_taylor_loss(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
                        mask: np.ndarray | None = None) -> float:
    """Masked surrogate loss on a hold-out block, constant term dropped.

    (1/8h) sum_i m_i (theta.x_i)^2 - (1/2) theta.mu  with
    mu = (1/h) sum_i m_i y_i x_i and h the block's row count.  This is the
    exact quantity the secure loss exchange decrypts, so early stopping
    driven by it is identical in both code paths.
    """
    X = np.asarray(X, dtype=np.float64)
    h = X.shape[0]
    if h == 0:
        raise ValueError("empty hold-out block")
    m = np.ones(h) if mask is None else np.asarray(mask, dtype=np.float64)
    s = X @ theta
    mu = (m * y) @ X / h
    return float((m * s * s).sum() / (8.0 * h) - 0.5 * theta @ mu)


def taylor_gradient(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
                    mask: np.ndarray | None = None) -> np.ndarray:
    """(1/s') sum_i m_i (theta.x_i / 4 - y_i / 2) x_i over a batch.

    The ridge contribution is applied separately by the optimizer step.
    """
    X = np.asarray(X, dtype=np.float64)
    s_prime = X.shape[0]
    if s_prime == 0:
        raise ValueError("empty batch")
    w = 0.25 * (X @ theta) - 0.5 * np.asarray(y, dtype=np.float64)
    if mask is not None:
        w = np.asarray(mask, dtype=np.float64) * w
    return X.T @ w / s_prime


def closed_form_minimizer(data: Dataset, gamma: float, Gamma: np.ndarray | None = None,
                          mask: np.ndarray | None = None) -> Model:
    """Exact minimizer of the ridge surrogate loss.

    theta* = 2 (sum_i m_i x_i x_i^T + 8 n gamma Gamma)^{-1} sum_i m_i y_i x_i.
    """
    X, y, n = data.X, data.y, data.n
    m = np.ones(n) if mask is None else np.asarray(mask, dtype=np.float64)
    G = np.eye(data.d) if Gamma is None else np.asarray(Gamma, dtype=np.float64)
    A = (X * m[:, None]).T @ X + 8.0 * n * gamma * G
    mu = (m * y) @ X
    return Model(2.0 * np.linalg.solve(A, mu))


def split_holdout(n: int, h: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (holdout, training) row index arrays, both sorted.

    Shared by plaintext and secure training so the two paths see the same
    partition for a given seed.
    """
    if not (0 <= h < n):
        raise ValueError("hold-out size must be in [0, n)")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:h]), np.sort(perm[h:])


def batch_slices(n_train: int, batch: int) -> list[slice]:
    """Sequential fixed-size batches; the last one may be short."""
    return [slice(i, min(i + batch, n_train)) for i in range(0, n_train, batch)]


@dataclass
class TrainResult:
    model: Model
    trace: list[float] = field(default_factory=list)
    epochs: int = 0
    # one row per epoch: epoch, train_taylor, holdout_taylor,
    # holdout_logistic (NaN when there is no hold-out block)
    detail: list[dict] = field(default_factory=list)


def train_sag(data: Dataset, cfg: TrainConfig, mask: np.ndarray | None = None) -> TrainResult:
    """Stochastic average gradient over sequential mini-batches.

    Rows are assumed pre-shuffled (by the linkage permutations upstream),
    so batches are contiguous slices.  A per-batch gradient memory starts
    at zero; each step replaces one batch's entry and descends along the
    memory average plus the ridge term 2 gamma Gamma theta.  After every
    epoch the hold-out surrogate loss is recorded and training stops once
    it has not improved by `min_delta` for `patience` epochs.
    """
    n, d = data.n, data.d
    G = cfg.ridge_matrix(d)
    m_all = np.ones(n) if mask is None else np.asarray(mask, dtype=np.float64)
    H, T = split_holdout(n, cfg.holdout, cfg.seed)
    X_tr, y_tr, m_tr = data.X[T], data.y[T], m_all[T]
    X_h, y_h, m_h = data.X[H], data.y[H], m_all[H]
    slices = batch_slices(len(T), cfg.batch)

    theta = np.zeros(d)
    memory = np.zeros((len(slices), d))
    trace: list[float] = []
    detail: list[dict] = []
    best = np.inf
    stall = 0
    epochs_run = 0
    for epoch in range(cfg.max_epochs):
        for j, sl in enumerate(slices):
            memory[j] = taylor_gradient(theta, X_tr[sl], y_tr[sl], m_tr[sl])
            avg = memory.mean(axis=0)
            theta = theta - cfg.eta * (avg + 2.0 * cfg.gamma * (G @ theta))
        epochs_run = epoch + 1
        if cfg.holdout:
            loss = holdout_taylor_loss(theta, X_h, y_h, m_h)
        else:
            loss = taylor_loss(Model(theta), data, cfg.gamma, G, mask=m_all)
        if not np.isfinite(loss):
            raise TrainingDivergedError(trace)
        trace.append(loss)
        model = Model(theta)
        row = {
            "epoch": epochs_run,
            "train_taylor": taylor_loss(model, Dataset(X_tr, y_tr), cfg.gamma,
                                        G, mask=m_tr),
            "holdout_taylor": loss if cfg.holdout else float("nan"),
            "holdout_logistic": float("nan"),
        }
        if cfg.holdout:
            kept = m_h > 0
            if kept.any():
                row["holdout_logistic"] = logistic_loss(
                    model, Dataset(X_h[kept], y_h[kept]))
        detail.append(row)
        if loss < best - cfg.min_delta:
            best = loss
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    return TrainResult(Model(theta), trace, epochs_run, detail)


def standardize(X_train: np.ndarray, *others: np.ndarray):
    """Column-wise zero-mean unit-variance using training statistics only.

    Returns the transformed training matrix followed by the transformed
    extra matrices (test sets and the like).
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    std[std == 0] = 1.0
    out = [(X_train - mean) / std]
    out.extend((np.asarray(o, dtype=np.float64) - mean) / std for o in others)
    return out[0] if not others else tuple(out)


def auc_score(scores: np.ndarray, y: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum statistic, midrank ties."""
    y = np.asarray(y, dtype=np.float64)
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined on a single-class set")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(model: Model, data: Dataset) -> dict[str, float]:
    """Accuracy, AUC and positive-class F1, all in percentage points."""
    s = model.scores(data.X)
    pred = np.where(s >= 0, 1.0, -1.0)
    acc = float(np.mean(pred == data.y))
    tp = float(np.sum((pred > 0) & (data.y > 0)))
    fp = float(np.sum((pred > 0) & (data.y < 0)))
    fn = float(np.sum((pred < 0) & (data.y > 0)))
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    return {
        "accuracy": 100.0 * acc,
        "auc": 100.0 * auc_score(s, data.y),
        "f1": 100.0 * f1,
    }
