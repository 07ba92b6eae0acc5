"""Validation harness for the effect of row mis-alignment on ridge training.

Setting: the feature matrix splits column-wise into an anchor block
(always correctly aligned) and a shuffle block whose rows may have been
permuted by the entity-resolution step.  The permutation is given as an
ordered product of elementary transpositions.  This module computes

* the exact drift recurrence: how the closed-form ridge minimizer of the
  quadratic logistic surrogate changes after each transposition, via a
  rank-two Sherman-Morrison/Woodbury update, checked against direct
  solves;
* empirical (epsilon, tau)-accuracy estimates of the permutation by
  direction sampling;
* numeric evaluation of the relative-drift bound, the margin-immunity
  condition, the true-data loss-gap bound, and the generalization
  penalty terms, together with their stated assumptions.

All matrices here are row-observation (n x d) as elsewhere in the
package; formulas from the column convention are transposed accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import learn


# --- permutations ---------------------------------------------------------

@dataclass
class PermutationFactorization:
    """Ordered elementary transpositions acting on the shuffle block rows."""

    n: int
    transpositions: list[tuple[int, int]]
    class_mismatch: list[bool]

    def __post_init__(self):
        for u, v in self.transpositions:
            if not (0 <= u < self.n and 0 <= v < self.n and u != v):
                raise ValueError("invalid transposition")
        if len(self.class_mismatch) != len(self.transpositions):
            raise ValueError("one mismatch flag per transposition")

    @property
    def T(self) -> int:
        return len(self.transpositions)

    @property
    def T_plus(self) -> int:
        return sum(self.class_mismatch)

    @property
    def rho(self) -> float:
        return self.T_plus / self.T if self.T else 0.0

    def permutation(self, upto: int | None = None) -> np.ndarray:
        """pi with pi[i] = original row whose shuffle part now sits at row i."""
        pi = np.arange(self.n)
        for u, v in self.transpositions[:self.T if upto is None else upto]:
            pi[[u, v]] = pi[[v, u]]
        return pi

    @classmethod
    def from_pairs(cls, n, pairs, y) -> "PermutationFactorization":
        y = np.asarray(y)
        flags = [bool(y[u] != y[v]) for u, v in pairs]
        return cls(n, [tuple(map(int, p)) for p in pairs], flags)


def random_permutation(y: np.ndarray, T: int, rho_target: float,
                       seed: int) -> PermutationFactorization:
    """T random transpositions with round(rho*T) class mismatches."""
    y = np.asarray(y)
    n = len(y)
    if T > n:
        raise ValueError("more transpositions than rows")
    rng = np.random.default_rng(seed)
    n_cross = int(round(rho_target * T))
    pos = np.nonzero(y > 0)[0]
    neg = np.nonzero(y < 0)[0]
    if n_cross > 0 and (len(pos) == 0 or len(neg) == 0):
        raise ValueError("cross-class transpositions need both classes")
    if T - n_cross > 0 and len(pos) < 2 and len(neg) < 2:
        raise ValueError("within-class transpositions need a class of size 2")
    pairs = []
    for _ in range(n_cross):
        pairs.append((int(rng.choice(pos)), int(rng.choice(neg))))
    for _ in range(T - n_cross):
        cls_rows = pos if (len(pos) >= 2 and (len(neg) < 2 or rng.random() < 0.5)) else neg
        u, v = rng.choice(cls_rows, size=2, replace=False)
        pairs.append((int(u), int(v)))
    rng.shuffle(pairs)
    return PermutationFactorization.from_pairs(n, pairs, y)


def apply_permutation(X: np.ndarray, d_anchor: int,
                      fact: PermutationFactorization, upto: int | None = None) -> np.ndarray:
    """Copy of X with the shuffle block's rows permuted by the first
    `upto` transpositions (all of them by default)."""
    out = np.array(X, dtype=np.float64)
    pi = fact.permutation(upto)
    out[:, d_anchor:] = X[pi, d_anchor:]
    return out


# --- exact drift recurrence -----------------------------------------------

@dataclass
class RecurrenceReport:
    thetas: np.ndarray          # (T+1) x d, by recurrence
    thetas_direct: np.ndarray   # (T+1) x d, by direct solves
    max_step_error: float
    rank2_error: float          # worst gram-matrix reconstruction error
    c_coeffs: np.ndarray        # T x 3, (c0, c1, c2) per step
    mus: np.ndarray             # (T+1) x d mean operators (unnormalized)
    condition_numbers: np.ndarray


class InvertibilityError(ArithmeticError):
    def __init__(self, t, c0, c1, c2):
        super().__init__(f"degenerate update at step {t}: c0={c0}, c1={c1}, c2={c2}")
        self.t = t


def _pad(vec: np.ndarray, lo: int, d: int) -> np.ndarray:
    out = np.zeros(d)
    out[lo:lo + len(vec)] = vec
    return out


def drift_recurrence(X: np.ndarray, y: np.ndarray, d_anchor: int,
                     fact: PermutationFactorization, gamma: float,
                     Gamma: np.ndarray | None = None) -> RecurrenceReport:
    """Track the ridge surrogate minimizer across the transposition chain.

    Each transposition (u, v) changes the gram matrix by the rank-two
    term -(a b^T + b a^T) with a the anchor-part difference of rows u, v
    (zero-padded) and b the current shuffle-part difference (zero-padded),
    so the inverse updates by Woodbury:

        V_t = V_{t-1} + V_{t-1} U_t V_{t-1},
        U_t = [c2 a a^T + (1-c1)(a b^T + b a^T) + c0 b b^T] / ((1-c1)^2 - c0 c2),

    with c0 = a^T V_{t-1} a, c1 = a^T V_{t-1} b, c2 = b^T V_{t-1} b.  The
    minimizer then obeys the exact recurrence

        theta*_t = (I + V_{t-1} U_t) theta*_{t-1} + 2 V_t (mu_t - mu_{t-1}).

    Every step is checked against a direct solve on the permuted data.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if gamma <= 0:
        raise ValueError("ridge scale must be positive")
    G = np.eye(d) if Gamma is None else np.asarray(Gamma, dtype=np.float64)
    b_ridge = 8.0 * n * gamma

    def direct(Xt):
        A = Xt.T @ Xt + b_ridge * G
        mu = y @ Xt
        return 2.0 * np.linalg.solve(A, mu), mu, np.linalg.cond(A)

    T = fact.T
    thetas = np.zeros((T + 1, d))
    thetas_direct = np.zeros((T + 1, d))
    mus = np.zeros((T + 1, d))
    conds = np.zeros(T + 1)
    c_coeffs = np.zeros((T, 3))

    X_cur = np.array(X)
    V = np.linalg.inv(X_cur.T @ X_cur + b_ridge * G)
    theta, mu, cond = direct(X_cur)
    thetas[0] = thetas_direct[0] = theta
    mus[0] = mu
    conds[0] = cond
    theta_rec = theta
    rank2_err = 0.0
    gram = X_cur.T @ X_cur

    for t, (u, v) in enumerate(fact.transpositions, start=1):
        a = _pad(X[u, :d_anchor] - X[v, :d_anchor], 0, d)
        b = _pad(X_cur[u, d_anchor:] - X_cur[v, d_anchor:], d_anchor, d)
        c0 = float(a @ V @ a)
        c1 = float(a @ V @ b)
        c2 = float(b @ V @ b)
        c_coeffs[t - 1] = (c0, c1, c2)
        den = (1.0 - c1) ** 2 - c0 * c2
        if abs(den) < 1e-14 or abs(1.0 - c1) < 1e-14:
            raise InvertibilityError(t, c0, c1, c2)
        U = (c2 * np.outer(a, a) + (1.0 - c1) * (np.outer(a, b) + np.outer(b, a))
             + c0 * np.outer(b, b)) / den
        V_next = V + V @ U @ V

        # apply the swap to the shuffle block
        X_next = np.array(X_cur)
        X_next[[u, v], d_anchor:] = X_cur[[v, u], d_anchor:]
        gram_update = gram - np.outer(a, b) - np.outer(b, a)
        rank2_err = max(rank2_err, float(np.max(np.abs(gram_update - X_next.T @ X_next))))
        gram = gram_update

        # analytic mean-operator update: swapping the shuffle parts of
        # rows u, v changes mu by (y_u - y_v)(s_v - s_u); identically
        # zero for within-class transpositions
        eps = -(y[u] - y[v]) * b
        mu_next = mus[t - 1] + eps
        theta_rec = (theta_rec + V @ U @ theta_rec) + 2.0 * V_next @ eps

        theta_dir, mu_dir, cond = direct(X_next)
        thetas[t] = theta_rec
        thetas_direct[t] = theta_dir
        mus[t] = mu_next
        conds[t] = cond
        X_cur, V = X_next, V_next

    max_err = float(np.max(np.abs(thetas - thetas_direct))) if T else 0.0
    return RecurrenceReport(thetas, thetas_direct, max_err, rank2_err,
                            c_coeffs, mus, conds)


# --- accuracy estimation --------------------------------------------------

@dataclass
class AccuracyEstimate:
    epsilon: float
    tau: float
    X_star: float
    n_directions: int

    @property
    def xi(self) -> float:
        return self.epsilon + self.tau / self.X_star


def direction_sample(X: np.ndarray, n_random: int, seed: int) -> np.ndarray:
    """Unit directions: uniform random plus the data's singular directions."""
    d = X.shape[1]
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(n_random, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    _, _, Vt = np.linalg.svd(X, full_matrices=False)
    return np.vstack([W, Vt])


def estimate_accuracy(X: np.ndarray, y: np.ndarray, d_anchor: int,
                      fact: PermutationFactorization,
                      n_directions: int = 10_000, seed: int = 0,
                      eps_grid: np.ndarray | None = None) -> AccuracyEstimate:
    """Smallest (epsilon, tau) not refuted by a direction sample.

    Two families of constraints per step t and direction w:
    the cumulative row error |(xhat_ti - x_i)_shuffle . w_shuffle|
    against epsilon |x_i . w| + tau, and the per-pair block differences
    |(x_u - x_v)_F . w_F| against epsilon max(|x_u.w|, |x_v.w|) + tau.
    For each epsilon on a grid the minimal feasible tau is linear to
    find; the pair minimizing xi = epsilon + tau/X* is returned.

    A finite sample can only refute candidate pairs, so the estimate is
    a lower envelope, not a certificate.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    W = direction_sample(X, n_directions, seed)
    X_star = float(np.max(np.linalg.norm(X, axis=1)))

    lhs_parts = []
    rhs_parts = []
    XW = np.abs(X @ W.T)  # n x n_dirs, |x_i . w|
    for t in range(1, fact.T + 1):
        X_hat = apply_permutation(X, d_anchor, fact, upto=t)
        diff_sh = (X_hat - X)[:, d_anchor:]
        changed = np.nonzero(np.any(diff_sh != 0, axis=1))[0]
        if len(changed):
            lhs_parts.append(np.abs(diff_sh[changed] @ W[:, d_anchor:].T).ravel())
            rhs_parts.append(XW[changed].ravel())
        u, v = fact.transpositions[t - 1]
        pair_max = np.maximum(XW[u], XW[v])  # n_dirs
        for block in (slice(0, d_anchor), slice(d_anchor, d)):
            diff = X[u, block] - X[v, block]
            lhs_parts.append(np.abs(W[:, block] @ diff))
            rhs_parts.append(pair_max)
    if not lhs_parts:
        return AccuracyEstimate(0.0, 0.0, X_star, len(W))
    lhs = np.concatenate(lhs_parts)
    rhs = np.concatenate(rhs_parts)

    grid = np.linspace(0.0, 1.0, 101) if eps_grid is None else np.asarray(eps_grid)
    best = None
    for eps in grid:
        tau = max(0.0, float(np.max(lhs - eps * rhs)))
        xi = eps + tau / X_star
        if best is None or xi < best[2]:
            best = (float(eps), tau, xi)
    return AccuracyEstimate(best[0], best[1], X_star, len(W))


# --- bound terms and theorem checks ---------------------------------------

@dataclass
class BoundTerms:
    delta_m: float      # |theta*_0| X_*
    delta_rho: float    # sqrt(xi) rho / 4
    delta_mu: float     # |sum y_i x_i| / (n X_*)
    C_n: float          # (xi/n)^alpha
    alpha: float
    xi: float


def bound_terms(X: np.ndarray, y: np.ndarray, theta0: np.ndarray,
                acc: AccuracyEstimate, rho: float, alpha: float) -> BoundTerms:
    n = X.shape[0]
    xi = acc.xi
    return BoundTerms(
        delta_m=float(np.linalg.norm(theta0)) * acc.X_star,
        delta_rho=float(np.sqrt(xi)) * rho / 4.0,
        delta_mu=float(np.linalg.norm(y @ X)) / (n * acc.X_star),
        C_n=(xi / n) ** alpha if xi > 0 else 0.0,
        alpha=alpha,
        xi=xi,
    )


@dataclass
class AssumptionReport:
    accuracy_not_refuted: bool
    alpha_bounded: bool
    calibrated_variance: bool
    calibrated_size: bool
    values: dict = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return (self.accuracy_not_refuted and self.alpha_bounded
                and self.calibrated_variance and self.calibrated_size)


def check_assumptions(X: np.ndarray, y: np.ndarray, fact: PermutationFactorization,
                      gamma: float, Gamma: np.ndarray | None,
                      acc: AccuracyEstimate, alpha: float,
                      n_directions: int = 10_000, seed: int = 0) -> AssumptionReport:
    """Evaluate the three assumption families numerically.

    The variance infimum over unit directions is approximated on the
    sampled directions; using the sampled infimum makes the calibration
    check conservative (a true infimum could only be smaller).
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    G = np.eye(d) if Gamma is None else np.asarray(Gamma, dtype=np.float64)
    W = direction_sample(X, n_directions, seed)
    stretches = np.abs(X @ W.T)  # n x dirs
    var_inf = float(np.min(np.var(stretches, axis=0)))
    lam_min = float(np.linalg.eigvalsh(G)[0])
    denom = (1.0 - acc.epsilon) ** 2 / 8.0 * var_inf + gamma * lam_min
    calib_lhs = acc.X_star ** 2 / denom if denom > 0 else np.inf
    size_ok = n >= 4.0 * acc.xi
    T_cap = (n / acc.xi) ** ((1.0 - alpha) / 2.0) if acc.xi > 0 else np.inf
    report = AssumptionReport(
        accuracy_not_refuted=True,  # acc was built from the sample itself
        alpha_bounded=fact.T <= T_cap,
        calibrated_variance=calib_lhs <= 1.0,
        calibrated_size=bool(size_ok),
        values={
            "calibration_lhs": calib_lhs,
            "variance_infimum": var_inf,
            "T": fact.T,
            "T_cap": T_cap,
            "n": n,
            "xi": acc.xi,
            "direction_sample": len(W),
        },
    )
    return report


@dataclass
class TheoremReport:
    empirical: float
    bound: float
    assumptions: AssumptionReport
    holds: bool
    values: dict = field(default_factory=dict)


def check_drift_bound(X, y, d_anchor, fact, gamma, Gamma, alpha,
                      acc: AccuracyEstimate | None = None,
                      n_directions: int = 10_000, seed: int = 0) -> TheoremReport:
    """Relative drift of the minimizer vs the two stated bounds.

    bound_raw = (xi/n) T^2 (1 + sqrt(xi) rho / (4 |theta*_0| X_*)),
    bound_alpha = (xi/n)^alpha (1 + delta_rho/delta_m); the reported
    bound is bound_raw, with bound_alpha additionally recorded.
    """
    rec = drift_recurrence(X, y, d_anchor, fact, gamma, Gamma)
    theta0, thetaT = rec.thetas_direct[0], rec.thetas_direct[-1]
    norm0 = float(np.linalg.norm(theta0))
    acc = acc or estimate_accuracy(X, y, d_anchor, fact, n_directions, seed)
    assumptions = check_assumptions(X, y, fact, gamma, Gamma, acc, alpha,
                                    n_directions, seed)
    terms = bound_terms(X, y, theta0, acc, fact.rho, alpha)
    if norm0 == 0.0:
        return TheoremReport(0.0, np.inf, assumptions, True,
                             {"note": "zero minimizer excluded by the statement"})
    ratio = float(np.linalg.norm(thetaT - theta0)) / norm0
    xi, n = acc.xi, X.shape[0]
    bound_raw = (xi / n) * fact.T ** 2 * (1.0 + np.sqrt(xi) * fact.rho / (4.0 * norm0 * acc.X_star))
    bound_alpha = terms.C_n * (1.0 + terms.delta_rho / terms.delta_m) if terms.delta_m else np.inf
    return TheoremReport(ratio, float(bound_raw), assumptions,
                         bool(ratio <= bound_raw),
                         {"bound_alpha": float(bound_alpha), "terms": terms,
                          "accuracy": acc, "recurrence_error": rec.max_step_error})


def check_immunity(X, y, d_anchor, fact, gamma, Gamma, kappa,
                   alpha, acc: AccuracyEstimate | None = None,
                   n_directions: int = 10_000, seed: int = 0) -> TheoremReport:
    """Margin immunity: every example with true-minimizer margin above
    kappa must keep a positive margin under the drifted minimizer when
    the sample-size condition n > xi ((delta_m + delta_rho)/kappa)^(1/alpha)
    holds."""
    if kappa <= 0:
        raise ValueError("margin threshold must be positive")
    rec = drift_recurrence(X, y, d_anchor, fact, gamma, Gamma)
    theta0, thetaT = rec.thetas_direct[0], rec.thetas_direct[-1]
    acc = acc or estimate_accuracy(X, y, d_anchor, fact, n_directions, seed)
    assumptions = check_assumptions(X, y, fact, gamma, Gamma, acc, alpha,
                                    n_directions, seed)
    terms = bound_terms(X, y, theta0, acc, fact.rho, alpha)
    n = X.shape[0]
    threshold = acc.xi * ((terms.delta_m + terms.delta_rho) / kappa) ** (1.0 / alpha)
    condition = n > threshold
    margins0 = y * (X @ theta0)
    marginsT = y * (X @ thetaT)
    qualifying = margins0 > kappa
    flips = int(np.sum(qualifying & (marginsT <= 0)))
    holds = (not condition) or flips == 0
    return TheoremReport(float(flips), float(threshold), assumptions, bool(holds),
                         {"condition_met": bool(condition),
                          "qualifying_examples": int(qualifying.sum()),
                          "terms": terms})


def check_loss_gap(X, y, d_anchor, fact, gamma, Gamma, alpha,
                   acc: AccuracyEstimate | None = None,
                   n_directions: int = 10_000, seed: int = 0) -> TheoremReport:
    """Surrogate-loss gap on the TRUE data between the drifted and true
    minimizers, vs delta_bar (delta_mu + 6 delta_bar) C(n)."""
    rec = drift_recurrence(X, y, d_anchor, fact, gamma, Gamma)
    theta0, thetaT = rec.thetas_direct[0], rec.thetas_direct[-1]
    data = learn.Dataset(X, y)
    G = np.eye(X.shape[1]) if Gamma is None else Gamma
    gap = (learn.taylor_loss(learn.Model(thetaT), data, gamma, G)
           - learn.taylor_loss(learn.Model(theta0), data, gamma, G))
    acc = acc or estimate_accuracy(X, y, d_anchor, fact, n_directions, seed)
    assumptions = check_assumptions(X, y, fact, gamma, Gamma, acc, alpha,
                                    n_directions, seed)
    terms = bound_terms(X, y, theta0, acc, fact.rho, alpha)
    delta_bar = (terms.delta_m + terms.delta_rho) / 2.0
    bound = delta_bar * (terms.delta_mu + 6.0 * delta_bar) * terms.C_n
    return TheoremReport(float(gap), float(bound), assumptions,
                         bool(gap <= bound + 1e-15),
                         {"terms": terms, "delta_bar": delta_bar})


def lipschitz_bound(X: np.ndarray, gamma: float, Gamma: np.ndarray | None,
                    theta_star_bound: float) -> float:
    """Bound on the gradient norm of the ridge surrogate loss over the
    ball |theta| <= theta_star_bound given the data's max row norm."""
    X_star = float(np.max(np.linalg.norm(X, axis=1)))
    G = np.eye(X.shape[1]) if Gamma is None else np.asarray(Gamma)
    op = float(np.linalg.norm(G, 2))
    return (0.25 * theta_star_bound * X_star + 0.5) * X_star + 2.0 * gamma * op * theta_star_bound


def generalization_terms(X, y, d_anchor, fact, gamma, Gamma, alpha,
                         delta: float = 0.05,
                         theta_star_bound: float | None = None,
                         acc: AccuracyEstimate | None = None,
                         n_directions: int = 10_000, seed: int = 0) -> dict:
    """Numeric right-hand-side terms of the generalization bound.

    Returns the true-minimizer surrogate loss, the Rademacher-style
    2 L X_* theta_* / sqrt(n) term, the confidence term, and the
    mis-alignment penalty U(n) = delta_bar (delta_mu + 6 delta_bar +
    4L/sqrt(n)) C(n).  No distributional claim is made.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    rec = drift_recurrence(X, y, d_anchor, fact, gamma, Gamma)
    theta0 = rec.thetas_direct[0]
    theta_cap = theta_star_bound or float(np.linalg.norm(theta0))
    L = lipschitz_bound(X, gamma, Gamma, theta_cap)
    acc = acc or estimate_accuracy(X, y, d_anchor, fact, n_directions, seed)
    terms = bound_terms(X, y, theta0, acc, fact.rho, alpha)
    delta_bar = (terms.delta_m + terms.delta_rho) / 2.0
    U_n = delta_bar * (terms.delta_mu + 6.0 * delta_bar + 4.0 * L / np.sqrt(n)) * terms.C_n
    data = learn.Dataset(X, y)
    G = np.eye(X.shape[1]) if Gamma is None else Gamma
    return {
        "loss_true_minimizer": learn.taylor_loss(learn.Model(theta0), data, gamma, G),
        "complexity_term": 2.0 * L * acc.X_star * theta_cap / np.sqrt(n),
        "confidence_term": float(np.sqrt(np.log(2.0 / delta) / (2.0 * n))),
        "U_n": float(U_n),
        "L": L,
        "terms": terms,
    }
