"""Enrichment-based stratification of expression cohorts and the survival
statistics built on it."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    DataError,
    DegenerateError,
    FitError,
    NotFoundError,
    ParseError,
    ValidationError,
)
from .signature import DrugSignature

logger = logging.getLogger(__name__)

MIN_GROUP_SIZE = 10
MIN_EVENTS = 3
BETA_CAP = 20.0


@dataclass
class ExpressionMatrix:
    genes: list[str]
    samples: list[str]
    values: np.ndarray  # genes x samples

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.genes), len(self.samples)):
            raise ValidationError(
                f"values shape {self.values.shape} != ({len(self.genes)}, {len(self.samples)})"
            )
        if len(set(self.genes)) != len(self.genes):
            raise ValidationError("duplicate gene symbols")
        if len(set(self.samples)) != len(self.samples):
            raise ValidationError("duplicate sample ids")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("expression values must be finite")

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "ExpressionMatrix":
        return cls([str(g) for g in df.index], [str(s) for s in df.columns], df.to_numpy(dtype=float))

    @classmethod
    def read_tsv(cls, path) -> "ExpressionMatrix":
        path = Path(path)
        if not path.exists():
            raise NotFoundError(f"expression file not found: {path}")
        try:
            df = pd.read_csv(path, sep="\t", index_col=0)
        except (ValueError, pd.errors.ParserError) as exc:
            raise ParseError(f"cannot read expression TSV {path}: {exc}") from None
        return cls.from_frame(df)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.genes, columns=self.samples)


@dataclass(frozen=True)
class SurvivalRecord:
    sample: str
    time: float
    event: bool

    def __post_init__(self):
        if not self.time > 0:
            raise ValidationError(f"survival time must be positive for {self.sample!r}")


def read_survival(path) -> dict[str, SurvivalRecord]:
    """Survival TSV with header ``sample, time_days, event``."""
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"survival file not found: {path}")
    df = pd.read_csv(path, sep="\t", dtype={"sample": str})
    missing = {"sample", "time_days", "event"} - set(df.columns)
    if missing:
        raise ParseError(f"survival TSV missing columns {sorted(missing)}", 1)
    out = {}
    for i, row in enumerate(df.itertuples(index=False), start=2):
        ev = int(row.event)
        if ev not in (0, 1):
            raise ParseError(f"event must be 0 or 1, got {row.event!r}", i)
        try:
            out[str(row.sample)] = SurvivalRecord(str(row.sample), float(row.time_days), bool(ev))
        except ValidationError as exc:
            raise ParseError(str(exc), i) from None
    return out


def _member_mask(m: ExpressionMatrix, gene_set) -> np.ndarray:
    gs = set(gene_set)
    if not gs:
        raise ValidationError("gene set is empty")
    mask = np.array([g in gs for g in m.genes])
    if not mask.any():
        raise ValidationError("gene set shares no genes with the expression matrix")
    if mask.all():
        raise DegenerateError("gene set covers every gene; the non-member walk is undefined")
    return mask


def ssgsea(m: ExpressionMatrix, gene_set, tau: float = 0.25) -> np.ndarray:
    """Single-sample enrichment score for every sample.

    Genes are walked from highest to lowest expression. Member genes step
    the weighted ECDF by ``rank**tau`` where ``rank`` is the ascending
    average rank (the top gene has rank N); non-members step the plain
    ECDF. The score is the sum over positions of the ECDF difference.
    """
    mask = _member_mask(m, gene_set)
    n = len(m.genes)
    n_out = n - int(mask.sum())
    es = np.empty(len(m.samples))
    for j in range(len(m.samples)):
        v = m.values[:, j]
        ranks = stats.rankdata(v, method="average")
        order = np.argsort(-v, kind="stable")
        hit = mask[order]
        w = np.where(hit, ranks[order] ** tau, 0.0)
        p_in = np.cumsum(w) / w.sum()
        p_out = np.cumsum(~hit) / n_out
        es[j] = np.sum(p_in - p_out)
    return es


def nes(es_values) -> np.ndarray:
    """Cross-sample z-score of enrichment scores (sample standard deviation)."""
    es = np.asarray(es_values, dtype=float)
    if es.size < 2:
        raise ValidationError("NES needs at least two samples")
    sd = es.std(ddof=1)
    if not sd > 0:
        raise DegenerateError("enrichment scores have zero variance")
    return (es - es.mean()) / sd


@dataclass
class StratifiedCohort:
    high: tuple[str, ...]
    low: tuple[str, ...]
    excluded: tuple[str, ...] = ()


def tertile_stratify(samples, values) -> StratifiedCohort:
    """Top and bottom ``floor(N/3)`` samples by value (descending, ties by id)."""
    samples = list(samples)
    values = np.asarray(values, dtype=float)
    if len(samples) != len(values):
        raise ValidationError("samples and values differ in length")
    n = len(samples)
    if n < 3:
        raise ValidationError("tertile split needs at least 3 samples")
    order = sorted(range(n), key=lambda i: (-values[i], samples[i]))
    k = n // 3
    ranked = [samples[i] for i in order]
    return StratifiedCohort(tuple(ranked[:k]), tuple(ranked[n - k:]), tuple(ranked[k:n - k]))


def _records(c: StratifiedCohort, surv) -> list[SurvivalRecord]:
    out = []
    for s in c.high + c.low:
        try:
            out.append(surv[s])
        except KeyError:
            raise DataError(f"no survival record for sample {s!r}") from None
    return out


def check_eligibility(c: StratifiedCohort, surv) -> bool:
    recs = _records(c, surv)
    events = sum(1 for r in recs if r.event)
    return len(c.high) >= MIN_GROUP_SIZE and len(c.low) >= MIN_GROUP_SIZE and events >= MIN_EVENTS


def eligibility_reason(c: StratifiedCohort, surv) -> str | None:
    recs = _records(c, surv)
    events = sum(1 for r in recs if r.event)
    if len(c.high) < MIN_GROUP_SIZE or len(c.low) < MIN_GROUP_SIZE:
        return f"group sizes {len(c.high)}/{len(c.low)} below {MIN_GROUP_SIZE}"
    if events < MIN_EVENTS:
        return f"{events} observed events below {MIN_EVENTS}"
    return None


@dataclass
class CoxFit:
    beta: float
    hr: float
    se: float
    p: float
    n_events: int
    converged: bool = True
    iterations: int = 0

    def to_dict(self) -> dict:
        return {"beta": self.beta, "hr": self.hr, "se": self.se, "p": self.p,
                "n_events": self.n_events, "converged": self.converged}


def _event_table(time, event, x):
    """Per distinct event time: events with x=1, total events, and
    at-risk counts for x=0 and x=1."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    x = np.asarray(x, dtype=int)
    ts = np.unique(time[event])
    s1 = np.array([np.sum(event & (time == t) & (x == 1)) for t in ts], dtype=float)
    d = np.array([np.sum(event & (time == t)) for t in ts], dtype=float)
    n1 = np.array([np.sum((time >= t) & (x == 1)) for t in ts], dtype=float)
    n0 = np.array([np.sum((time >= t) & (x == 0)) for t in ts], dtype=float)
    return s1, d, n0, n1


def _loglik(beta, s1, d, n0, n1):
    with np.errstate(divide="ignore"):
        lse = np.logaddexp(np.log(n0), np.log(n1) + beta)
    return float(np.sum(beta * s1 - d * lse))


def _score_info(beta, s1, d, n0, n1):
    # share of risk-set weight in group 1; both branches are exact at beta = 0
    if beta >= 0:
        p1 = n1 / (n1 + n0 * math.exp(-beta))
    else:
        e = math.exp(beta)
        p1 = n1 * e / (n0 + n1 * e)
    return float(np.sum(s1 - d * p1)), float(np.sum(d * p1 * (1.0 - p1)))


def fit_cox_binary(time, event, x, tol: float = 1e-8, max_iter: int = 50) -> CoxFit:
    """Univariable Cox model for a 0/1 covariate, Breslow ties, Newton
    iterations with step halving.

    When the partial likelihood is monotone (the score keeps one sign as
    beta goes to +/-inf) the estimate is reported at +/-``BETA_CAP`` with
    ``converged=False``.
    """
    x = np.asarray(x)
    if not np.all(np.isin(x, (0, 1))):
        raise ValidationError("covariate must be binary 0/1")
    event = np.asarray(event, dtype=bool)
    n_events = int(event.sum())
    if n_events == 0:
        raise FitError("no observed events")
    if x.min() == x.max():
        raise FitError("both covariate groups must be non-empty")
    s1, d, n0, n1 = _event_table(time, event, x)

    # score limits at beta -> +inf / -inf; the log-likelihood is concave
    up_lim = float(np.sum(s1 - d * (n1 > 0)))
    down_lim = float(np.sum(s1 - d * (n0 == 0)))
    if up_lim >= 0 or down_lim <= 0:
        beta = BETA_CAP if up_lim >= 0 else -BETA_CAP
        _, info = _score_info(beta, s1, d, n0, n1)
        se = 1.0 / math.sqrt(info) if info > 0 else math.inf
        p = float(2 * stats.norm.sf(abs(beta / se))) if math.isfinite(se) else 1.0
        logger.warning("monotone partial likelihood; beta capped at %+.0f", beta)
        return CoxFit(beta, math.exp(beta), se, p, n_events, converged=False)

    beta = 0.0
    ll = _loglik(beta, s1, d, n0, n1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u, info = _score_info(beta, s1, d, n0, n1)
        step = u / info
        new = beta + step
        new_ll = _loglik(new, s1, d, n0, n1)
        halvings = 0
        while new_ll < ll and halvings < 30:
            step /= 2.0
            new = beta + step
            new_ll = _loglik(new, s1, d, n0, n1)
            halvings += 1
        beta, ll = new, new_ll
        if abs(step) < tol:
            converged = True
            break
    if converged:
        # one polishing step; cheap and tightens antisymmetry under label swap
        u, info = _score_info(beta, s1, d, n0, n1)
        beta += u / info
    _, info = _score_info(beta, s1, d, n0, n1)
    se = 1.0 / math.sqrt(info)
    p = float(2 * stats.norm.sf(abs(beta / se)))
    return CoxFit(beta, math.exp(beta), se, min(max(p, 0.0), 1.0), n_events, converged, it)


def cox_univariable(c: StratifiedCohort, surv) -> CoxFit:
    """Cox fit for the indicator ``1{sample in high group}``."""
    recs = _records(c, surv)
    x = [1] * len(c.high) + [0] * len(c.low)
    return fit_cox_binary([r.time for r in recs], [r.event for r in recs], x)


def km_curve(samples, surv) -> list[tuple[float, float]]:
    """Product-limit estimate as ``(time, S)`` steps starting at ``(0, 1)``."""
    recs = []
    for s in samples:
        try:
            recs.append(surv[s])
        except KeyError:
            raise DataError(f"no survival record for sample {s!r}") from None
    if not recs:
        raise ValidationError("Kaplan-Meier needs at least one sample")
    return km_steps([r.time for r in recs], [r.event for r in recs])


def km_steps(time, event) -> list[tuple[float, float]]:
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    surv = 1.0
    out = [(0.0, 1.0)]
    for t in np.unique(time[event]):
        at_risk = int(np.sum(time >= t))
        deaths = int(np.sum((time == t) & event))
        surv *= 1.0 - deaths / at_risk
        out.append((float(t), surv))
    return out


@dataclass
class PairHazard:
    es_up: np.ndarray | None
    es_down: np.ndarray | None
    es: np.ndarray
    nes: np.ndarray
    cohort: StratifiedCohort
    fit: CoxFit | None = None
    ineligible_reason: str | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def eligible(self) -> bool:
        return self.fit is not None


def hazard_for_pair(m: ExpressionMatrix, signature: DrugSignature, surv, tau: float = 0.25) -> PairHazard:
    """ssGSEA on both signature sets, combined ES = up - down, NES, tertile
    split, eligibility gate, then Cox. A set with no genes in the matrix is
    dropped with a warning; both missing is an error."""
    warnings = []
    genes = set(m.genes)
    es_up = es_down = None
    up = [g for g in signature.up_genes if g in genes]
    down = [g for g in signature.down_genes if g in genes]
    if up:
        es_up = ssgsea(m, up, tau)
    elif signature.up_genes:
        warnings.append("up-regulated set has no genes in the expression matrix")
    if down:
        es_down = ssgsea(m, down, tau)
    elif signature.down_genes:
        warnings.append("down-regulated set has no genes in the expression matrix")
    if es_up is None and es_down is None:
        raise ValidationError(f"signature for {signature.drug!r} has no genes in the expression matrix")
    if es_up is None:
        combined = -es_down
    elif es_down is None:
        combined = es_up.copy()
    else:
        combined = es_up - es_down
    for w in warnings:
        logger.info("%s: %s", signature.drug, w)
    z = nes(combined)
    cohort = tertile_stratify(m.samples, z)
    result = PairHazard(es_up, es_down, combined, z, cohort, warnings=warnings)
    reason = eligibility_reason(cohort, surv)
    if reason is not None:
        result.ineligible_reason = reason
        return result
    result.fit = cox_univariable(cohort, surv)
    return result


class SsgseaTransformer(BaseEstimator, TransformerMixin):
    """Samples x genes expression frame -> samples x gene-set enrichment.

    ``gene_sets`` maps a set name to its member genes.
    """

    def __init__(self, gene_sets=None, tau=0.25):
        self.gene_sets = gene_sets
        self.tau = tau

    def fit(self, X, y=None):
        if not isinstance(X, pd.DataFrame):
            raise ValidationError("SsgseaTransformer expects a DataFrame with gene columns")
        if not self.gene_sets:
            raise ValidationError("gene_sets must be a non-empty mapping")
        self.feature_names_in_ = np.asarray([str(c) for c in X.columns], dtype=object)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_names_in_")
        m = ExpressionMatrix.from_frame(X.T)
        cols = {name: ssgsea(m, genes, self.tau) for name, genes in self.gene_sets.items()}
        return pd.DataFrame(cols, index=X.index)


class KaplanMeier(BaseEstimator):
    def fit(self, time, event):
        steps = km_steps(time, event)
        self.timeline_ = np.array([t for t, _ in steps])
        self.survival_ = np.array([s for _, s in steps])
        return self

    def predict(self, t):
        """Right-continuous step function evaluated at ``t``."""
        check_is_fitted(self, "survival_")
        idx = np.searchsorted(self.timeline_, np.asarray(t, dtype=float), side="right") - 1
        return self.survival_[np.clip(idx, 0, None)]


class CoxUnivariable(BaseEstimator):
    """Binary-covariate Cox model; ``fit(x, time, event)``."""

    def __init__(self, tol=1e-8, max_iter=50):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, x, time, event):
        fit = fit_cox_binary(time, event, x, self.tol, self.max_iter)
        self.fit_ = fit
        self.coef_ = fit.beta
        self.hazard_ratio_ = fit.hr
        self.se_ = fit.se
        self.p_value_ = fit.p
        return self

    def predict(self, x):
        """Relative risk ``exp(beta * x)``."""
        check_is_fitted(self, "fit_")
        return np.exp(self.coef_ * np.asarray(x, dtype=float))
