"""Verification backends and metrics.

The trainable chain follows the classic recipe: subtract the global
training mean, project with LDA (generalized eigenvectors of the
between/within scatter pair), length-normalize to sqrt(dim), then score
with a two-covariance PLDA fitted by EM. Cosine scoring on raw embeddings
is provided as the simple alternative.

Estimators follow the scikit-learn fit/transform conventions so they can
sit inside standard pipelines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import (
    ConfigError,
    DegenerateInputError,
    MetricError,
    NumericError,
    ShapeError,
)

logger = logging.getLogger(__name__)


def _as_matrix(x, name="X") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-d (n_samples, dim), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name} contains NaN/Inf")
    return x


def _as_vector(v, name="vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericError(f"{name} contains NaN/Inf")
    return v


def cosine_score(a, b) -> float:
    """Cosine similarity in [-1, 1]; zero vectors are rejected."""
    a, b = _as_vector(a, "a"), _as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine of a zero vector is undefined")
    # The identity cases are exact by definition; don't let rounding in
    # norm*norm push them off +-1.
    if np.array_equal(a, b):
        return 1.0
    if np.array_equal(a, -b):
        return -1.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def length_norm(v) -> np.ndarray:
    """Rescale to norm sqrt(dim) (rows of a matrix are scaled independently)."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 1:
        n = np.linalg.norm(arr)
        if n == 0.0:
            raise DegenerateInputError("cannot length-normalize a zero vector")
        return arr * (np.sqrt(arr.size) / n)
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot length-normalize a zero row")
    return arr * (np.sqrt(arr.shape[1]) / norms)[:, None]


def _scatter_matrices(x: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """(between, within) scatter, both normalized by the sample count."""
    n, d = x.shape
    mean = x.mean(axis=0)
    within = np.zeros((d, d))
    between = np.zeros((d, d))
    for lab in np.unique(labels):
        grp = x[np.asarray(labels) == lab]
        mu = grp.mean(axis=0)
        centered = grp - mu
        within += centered.T @ centered
        diff = mu - mean
        between += len(grp) * np.outer(diff, diff)
    return between / n, within / n


class LdaProjection(BaseEstimator, TransformerMixin):
    """LDA via generalized eigendecomposition of the scatter pair.

    Solves between @ v = eigval * within @ v and keeps the top ``n_dims``
    eigenvectors as a (n_dims, d) projection. A singular within-class
    scatter gets a trace-scaled ridge (1e-6) with a warning; if it is
    still singular the fit fails with NumericError.
    """

    def __init__(self, n_dims=None):
        self.n_dims = n_dims

    def fit(self, X, y):
        x = _as_matrix(X)
        labels = np.asarray(y)
        if labels.shape[0] != x.shape[0]:
            raise ShapeError("labels length must match rows of X")
        classes = np.unique(labels)
        if classes.size < 2:
            raise ConfigError("LDA needs at least 2 classes")
        n_dims = self.n_dims
        if n_dims is None:
            n_dims = default_lda_dim(x.shape[1], classes.size)
        if not 1 <= n_dims <= x.shape[1]:
            raise ConfigError(f"lda dim {n_dims} out of range 1..{x.shape[1]}")
        between, within = _scatter_matrices(x, labels)
        self.condition_number_ = float(np.linalg.cond(within))
        logger.info("within-class scatter condition number %.3g", self.condition_number_)
        try:
            eigvals, eigvecs = scipy.linalg.eigh(between, within)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            ridge = 1e-6 * np.trace(within) / within.shape[0]
            logger.warning(
                "within-class scatter singular; applying ridge %.3g", ridge
            )
            within = within + ridge * np.eye(within.shape[0])
            try:
                eigvals, eigvecs = scipy.linalg.eigh(between, within)
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
                raise NumericError(
                    "within-class scatter singular even after regularization"
                ) from exc
        order = np.argsort(eigvals)[::-1][:n_dims]
        basis = eigvecs[:, order].T  # (n_dims, d)
        # Deterministic sign: largest-magnitude coefficient positive.
        for row in basis:
            if row[np.argmax(np.abs(row))] < 0:
                row *= -1.0
        self.projection_ = basis
        self.eigenvalues_ = eigvals[order]
        return self

    def transform(self, X):
        if not hasattr(self, "projection_"):
            raise NotFittedError("LdaProjection is not fitted")
        return _as_matrix(X) @ self.projection_.T


def default_lda_dim(dim: int, n_classes: int) -> int:
    # Small embedding spaces keep a small projection; production-scale
    # embeddings cap at 200.
    cap = 16 if dim < 200 else 200
    return max(1, min(dim, n_classes - 1, cap))


class TwoCovPlda(BaseEstimator):
    """Two-covariance PLDA fitted by EM.

    Model: speaker mean y ~ N(mu, between); observation x | y ~ N(y, within).
    The verification score is the log-likelihood ratio of the same-speaker
    hypothesis against the independent-speakers hypothesis. Scoring uses
    the simultaneous diagonalization of (between, within), which reduces
    the ratio to a sum of scalar terms.

    ``loglik_history_`` records the observed-data log-likelihood after each
    EM iteration; EM guarantees it never decreases.
    """

    def __init__(self, n_iters=10):
        self.n_iters = n_iters

    def fit(self, X, y):
        x = _as_matrix(X)
        labels = np.asarray(y)
        if labels.shape[0] != x.shape[0]:
            raise ShapeError("labels length must match rows of X")
        classes = np.unique(labels)
        if classes.size < 2:
            raise ConfigError("PLDA needs at least 2 speakers")
        d = x.shape[1]
        groups = [x[labels == c] for c in classes]
        if any(len(g) < 2 for g in groups):
            logger.warning("some PLDA training speakers have a single utterance")

        mu = x.mean(axis=0)
        class_means = np.stack([g.mean(axis=0) for g in groups])
        between = np.cov(class_means.T, bias=True).reshape(d, d)
        within = np.zeros((d, d))
        for g in groups:
            c = g - g.mean(axis=0)
            within += c.T @ c
        within /= x.shape[0]
        ridge = 1e-6 * max(np.trace(within) / d, 1e-12)
        within += ridge * np.eye(d)
        between += ridge * np.eye(d)

        history = []
        for _ in range(self.n_iters):
            mu, between, within = self._em_step(groups, mu, between, within)
            history.append(self._loglik(groups, mu, between, within))
        self.mu_ = mu
        self.between_ = between
        self.within_ = within
        self.loglik_history_ = np.array(history)
        self.within_condition_number_ = float(np.linalg.cond(within))
        logger.info(
            "PLDA within condition number %.3g", self.within_condition_number_
        )
        self._prepare_scoring()
        return self

    @staticmethod
    def _em_step(groups, mu, between, within):
        d = mu.size
        b_inv = np.linalg.inv(between)
        w_inv = np.linalg.inv(within)
        n_total = sum(len(g) for g in groups)
        post_means = []
        post_covs = []
        for g in groups:
            n = len(g)
            prec = b_inv + n * w_inv
            cov = np.linalg.inv(prec)
            m = cov @ (b_inv @ mu + w_inv @ g.sum(axis=0))
            post_means.append(m)
            post_covs.append(cov)
        post_means = np.stack(post_means)
        new_mu = post_means.mean(axis=0)
        new_between = np.zeros((d, d))
        for m, cov in zip(post_means, post_covs):
            diff = m - new_mu
            new_between += cov + np.outer(diff, diff)
        new_between /= len(groups)
        new_within = np.zeros((d, d))
        for g, m, cov in zip(groups, post_means, post_covs):
            resid = g - m
            new_within += resid.T @ resid + len(g) * cov
        new_within /= n_total
        new_between = 0.5 * (new_between + new_between.T)
        new_within = 0.5 * (new_within + new_within.T)
        return new_mu, new_between, new_within

    @staticmethod
    def _loglik(groups, mu, between, within) -> float:
        """Observed-data log-likelihood (the quantity EM never decreases).

        For a speaker with n observations, the per-speaker marginal splits
        into the mean term N(xbar; mu, between + within/n) and the
        within-speaker deviations under N(0, within).
        """
        d = mu.size
        sign, logdet_w = np.linalg.slogdet(within)
        if sign <= 0:
            raise NumericError("within covariance not positive definite")
        w_inv = np.linalg.inv(within)
        total = 0.0
        for g in groups:
            n = len(g)
            xbar = g.mean(axis=0)
            mean_cov = between + within / n
            sign_m, logdet_m = np.linalg.slogdet(mean_cov)
            if sign_m <= 0:
                raise NumericError("between + within/n not positive definite")
            diff = xbar - mu
            quad_mean = diff @ np.linalg.solve(mean_cov, diff)
            resid = g - xbar
            quad_dev = float(np.einsum("ij,jk,ik->", resid, w_inv, resid))
            # det(within + n*between) = n^d * det(between + within/n)
            total += -0.5 * (
                n * d * np.log(2 * np.pi)
                + logdet_m
                + d * np.log(n)
                + (n - 1) * logdet_w
                + quad_mean
                + quad_dev
            )
        return float(total)

    def _prepare_scoring(self):
        # Simultaneous diagonalization: basis^T within basis = I,
        # basis^T between basis = diag(psi).
        eigvals, eigvecs = scipy.linalg.eigh(self.between_, self.within_)
        self._psi = np.maximum(eigvals, 0.0)
        self._basis = eigvecs  # columns: x-space -> diagonal space via basis.T

    def _project(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.mu_) @ self._basis

    def llr(self, enroll, test):
        """Log-likelihood ratio for row-paired enroll/test vectors."""
        if not hasattr(self, "mu_"):
            raise NotFittedError("TwoCovPlda is not fitted")
        a = self._project(np.asarray(enroll, dtype=np.float64))
        b = self._project(np.asarray(test, dtype=np.float64))
        if a.shape[1] != self.mu_.size or b.shape[1] != self.mu_.size:
            raise ShapeError("PLDA dimension mismatch")
        psi = self._psi
        # Per dimension with within=1, between=psi:
        #   same:  cov [[psi+1, psi], [psi, psi+1]], det = 2 psi + 1
        #   diff:  independent N(0, psi+1)
        denom_same = 2.0 * psi + 1.0
        denom_diff = psi + 1.0
        sq_sum = a**2 + b**2
        cross = a * b
        quad_same = ((psi + 1.0) * sq_sum - 2.0 * psi * cross) / denom_same
        quad_diff = sq_sum / denom_diff
        logdet_same = np.log(denom_same)
        logdet_diff = 2.0 * np.log(denom_diff)
        per_dim = -0.5 * (quad_same - quad_diff) - 0.5 * (logdet_same - logdet_diff)
        scores = per_dim.sum(axis=1)
        return scores if scores.size > 1 else float(scores[0])


class VerificationBackend(BaseEstimator):
    """Mean subtraction -> LDA -> length normalization -> two-cov PLDA."""

    def __init__(self, lda_dim=None, plda_iters=10):
        self.lda_dim = lda_dim
        self.plda_iters = plda_iters

    def fit(self, X, y):
        x = _as_matrix(X)
        labels = np.asarray(y)
        classes, counts = np.unique(labels, return_counts=True)
        if classes.size < 2:
            raise ConfigError("backend training needs at least 2 speakers")
        if np.any(counts < 2):
            logger.warning("backend training: some speakers have one embedding")
        self.mean_ = x.mean(axis=0)
        self.lda_ = LdaProjection(self.lda_dim).fit(x - self.mean_, labels)
        projected = length_norm(self.lda_.transform(x - self.mean_))
        self.plda_ = TwoCovPlda(self.plda_iters).fit(projected, labels)
        return self

    def transform(self, X):
        """Apply the mean/LDA/length-norm chain to raw embeddings."""
        if not hasattr(self, "mean_"):
            raise NotFittedError("VerificationBackend is not fitted")
        return length_norm(self.lda_.transform(_as_matrix(X) - self.mean_))

    def llr(self, enroll, test):
        a = np.atleast_2d(np.asarray(enroll, dtype=np.float64))
        b = np.atleast_2d(np.asarray(test, dtype=np.float64))
        return self.plda_.llr(self.transform(a), self.transform(b))

    def score_pairs(self, enroll_rows, test_rows, kind="plda"):
        """Scores for row-paired embeddings; ``kind`` is plda or cosine."""
        e = _as_matrix(enroll_rows, "enroll")
        t = _as_matrix(test_rows, "test")
        if e.shape != t.shape:
            raise ShapeError("enroll/test row counts must match")
        if kind == "plda":
            out = self.llr(e, t)
            return np.atleast_1d(out)
        if kind == "cosine":
            return np.array([cosine_score(a, b) for a, b in zip(e, t)])
        raise ConfigError(f"unknown backend kind {kind!r}")


def train_backend(embeddings, labels, lda_dim=None, plda_iters=10) -> VerificationBackend:
    """Fit the full verification chain on labeled embeddings."""
    return VerificationBackend(lda_dim=lda_dim, plda_iters=plda_iters).fit(
        embeddings, labels
    )


def plda_score(backend: VerificationBackend, enroll, test):
    """LLR for raw embeddings; the backend applies its chain internally."""
    return backend.llr(_as_vector(enroll, "enroll"), _as_vector(test, "test"))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float


def _check_scores(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ShapeError("scores and labels must be matching 1-d arrays")
    if not np.all(np.isfinite(scores)):
        raise NumericError("scores contain NaN/Inf")
    if not labels.any() or labels.all():
        raise MetricError("need at least one target and one nontarget trial")
    return scores, labels


def roc_points(scores, labels):
    """(false-accept, false-reject, threshold) at every operating point.

    Operating points are "accept iff score >= threshold" evaluated at
    thresholds below, between (midpoints), and above the distinct scores,
    ordered from accept-everything to reject-everything.
    """
    scores, labels = _check_scores(scores, labels)
    tgt = np.sort(scores[labels])
    non = np.sort(scores[~labels])
    uniq = np.unique(scores)
    thresholds = np.concatenate(
        [[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1] + 1.0]]
    )
    # fa: fraction of nontargets >= thr; fr: fraction of targets < thr.
    fa = 1.0 - np.searchsorted(non, thresholds, side="left") / non.size
    fr = np.searchsorted(tgt, thresholds, side="left") / tgt.size
    return fa, fr, thresholds


def eer_from_points(fa, fr, thresholds) -> EerResult:
    """Equal error rate with linear interpolation between operating points."""
    diff = fa - fr
    idx = int(np.argmax(diff <= 0.0))
    if idx == 0:
        return EerResult(float(fa[0]), float(thresholds[0]))
    d0, d1 = diff[idx - 1], diff[idx]
    if d0 == d1:
        t = 0.0
    else:
        t = d0 / (d0 - d1)
    eer = fa[idx - 1] + t * (fa[idx] - fa[idx - 1])
    thr = thresholds[idx - 1] + t * (thresholds[idx] - thresholds[idx - 1])
    return EerResult(float(eer), float(thr))


def compute_eer(scores, labels) -> EerResult:
    """EER of a score set; labels are True for target trials."""
    fa, fr, thresholds = roc_points(scores, labels)
    return eer_from_points(fa, fr, thresholds)


def compute_min_dcf(scores, labels, p_target: float) -> float:
    """Minimum normalized detection cost with unit miss/false-alarm costs.

    min over thresholds of (p_miss * p_target + p_fa * (1 - p_target)),
    normalized by min(p_target, 1 - p_target).
    """
    if not 0.0 < p_target < 1.0:
        raise ConfigError(f"p_target must be in (0, 1), got {p_target}")
    fa, fr, _ = roc_points(scores, labels)
    cost = fr * p_target + fa * (1.0 - p_target)
    return float(cost.min() / min(p_target, 1.0 - p_target))
