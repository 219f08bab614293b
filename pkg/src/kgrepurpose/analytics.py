"""Evaluation statistics: recall, Spearman correlation, ROC-AUC and PCA."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DegenerateError, ValidationError


def canonical_name(name: str) -> str:
    return " ".join(str(name).split()).casefold()


def recall(retrieved, gold) -> float:
    gold_c = {canonical_name(g) for g in gold}
    if not gold_c:
        raise ValidationError("gold set is empty")
    got = {canonical_name(r) for r in retrieved}
    return len(got & gold_c) / len(gold_c)


def spearman(x, y) -> dict:
    """Rank correlation with a two-sided t-approximation p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D and of equal length")
    n = x.size
    if n < 3:
        raise ValidationError("spearman needs at least 3 observations")
    rx = stats.rankdata(x) - (n + 1) / 2.0
    ry = stats.rankdata(y) - (n + 1) / 2.0
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise DegenerateError("zero rank variance; correlation undefined")
    r = float(rx @ ry) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) >= 1.0 - 1e-15:
        return {"r": r, "p": 0.0, "n": n}
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = float(2 * stats.t.sf(abs(t), n - 2))
    return {"r": r, "p": min(p, 1.0), "n": n}


def roc_auc(scores, labels, higher_is_positive: bool = True) -> float:
    """Mann-Whitney AUC; ties between a positive and a negative count 1/2.

    ``higher_is_positive=False`` scores the rule "lower value predicts the
    positive class" by negating the scores.
    """
    s = np.asarray(scores, dtype=float)
    lab = np.asarray(labels, dtype=bool)
    if s.shape != lab.shape or s.ndim != 1:
        raise ValidationError("scores and labels must be 1-D and of equal length")
    if not higher_is_positive:
        s = -s
    n_pos = int(lab.sum())
    n_neg = lab.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("both classes must be present")
    ranks = stats.rankdata(s)
    u = ranks[lab].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below ``tol`` times
    the matrix norm (absolute ``tol`` for a zero matrix). Returns
    ``(eigenvalues, eigenvectors)`` with vectors as columns, unsorted.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValidationError("matrix must be square and symmetric")
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1.0)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.tril(a, -1) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J applied to rows/cols p, q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def pca(m, n_components: int) -> dict:
    """PCA of a rows x columns score matrix on the column covariance.

    Components are sorted by eigenvalue (descending) and signed so that
    each one's largest-magnitude coordinate is positive.
    """
    model = JacobiPCA(n_components=n_components).fit(m)
    return {
        "components": model.components_,
        "explained_variance": model.explained_variance_,
        "explained_variance_ratio": model.explained_variance_ratio_,
        "projections": model.transform(m),
        "eigenvalues": model.eigenvalues_,
    }


class JacobiPCA(BaseEstimator, TransformerMixin):
    def __init__(self, n_components=2, tol=1e-12):
        self.n_components = n_components
        self.tol = tol

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[0] < 2:
            raise DegenerateError("PCA needs at least two rows")
        if not 1 <= self.n_components <= X.shape[1]:
            raise ValidationError("n_components must be between 1 and the number of columns")
        self.mean_ = X.mean(axis=0)
        cov = np.cov(X - self.mean_, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
        total = float(np.trace(cov))
        if not total > 0:
            raise DegenerateError("all columns have zero variance")
        vals, vecs = jacobi_eigh(cov, self.tol)
        order = np.argsort(-vals, kind="stable")
        vals = vals[order]
        vecs = vecs[:, order]
        for j in range(vecs.shape[1]):
            k = int(np.argmax(np.abs(vecs[:, j])))
            if vecs[k, j] < 0:
                vecs[:, j] = -vecs[:, j]
        self.eigenvalues_ = vals
        self.components_ = vecs[:, : self.n_components].T
        self.explained_variance_ = vals[: self.n_components]
        self.explained_variance_ratio_ = self.explained_variance_ / total
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        return (X - self.mean_) @ self.components_.T
