"""Hierarchy-aware (modulus + phase) knowledge-graph embeddings with an
optional literature-weighted training objective.

Score of a triple::

    s(h, r, t) = -||h_mod * r_mod - t_mod||_2
                 - lam * ||sin((h_phase + r_phase - t_phase) / 2)||_1

Training minimises a weighted binary cross-entropy over (positive,
negative) pairs with a margin ``gamma`` added inside the sigmoid::

    L = sum_i w_i [softplus(-(gamma + s_pos_i)) + softplus(gamma + s_neg_i)] / sum_i w_i

Gradients are analytic; see ``loss_and_grad``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    DegenerateError,
    ExhaustionError,
    NotFoundError,
    NumericError,
    ParseError,
    ValidationError,
)
from .graph import Graph, Triple

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "kgrepurpose-hake"
CHECKPOINT_VERSION = 1
MAX_NEGATIVE_RETRIES = 100


@dataclass
class HakeParams:
    dim: int
    entities: list[str]
    relations: list[str]
    ent_mod: np.ndarray
    ent_phase: np.ndarray
    rel_mod: np.ndarray
    rel_phase: np.ndarray
    lam: float = 0.5
    gamma: float = 12.0
    ent_index: dict[str, int] = field(init=False, repr=False)
    rel_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dim must be positive")
        if self.lam < 0:
            raise ValidationError("lambda must be nonnegative")
        for name in ("ent_mod", "ent_phase", "rel_mod", "rel_phase"):
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
            n = len(self.entities) if name.startswith("ent") else len(self.relations)
            if arr.shape != (n, self.dim):
                raise ValidationError(f"{name} has shape {arr.shape}, expected {(n, self.dim)}")
        self.ent_index = {e: i for i, e in enumerate(self.entities)}
        self.rel_index = {r: i for i, r in enumerate(self.relations)}

    def copy(self) -> "HakeParams":
        return HakeParams(
            self.dim,
            list(self.entities),
            list(self.relations),
            self.ent_mod.copy(),
            self.ent_phase.copy(),
            self.rel_mod.copy(),
            self.rel_phase.copy(),
            self.lam,
            self.gamma,
        )

    def eidx(self, e: str) -> int:
        try:
            return self.ent_index[e]
        except KeyError:
            raise NotFoundError(f"no embedding for entity {e!r}") from None

    def ridx(self, r: str) -> int:
        try:
            return self.rel_index[r]
        except KeyError:
            raise NotFoundError(f"no embedding for relation {r!r}") from None


@dataclass
class TripleWeights:
    """Learnable per-triple confidence ``w`` in [0, 1] and the literature
    prior ``w0 = 1 + ln(1 + article_count)``."""

    keys: list[tuple[str, str, str]]
    w: np.ndarray
    w0: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.w0 = np.asarray(self.w0, dtype=float)
        self.index = {k: i for i, k in enumerate(self.keys)}

    def __getitem__(self, key) -> float:
        if isinstance(key, Triple):
            key = key.key
        try:
            return float(self.w[self.index[tuple(key)]])
        except KeyError:
            raise NotFoundError(f"no weight for triple {key}") from None

    def copy(self) -> "TripleWeights":
        return TripleWeights(list(self.keys), self.w.copy(), self.w0.copy())


@dataclass
class TrainConfig:
    dim: int = 64
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 0.05
    negatives_per_positive: int = 4
    seed: int = 0
    weighted: bool = False
    lam: float = 0.5
    gamma: float = 12.0
    # None means "same as learning_rate"; 0 freezes the triple weights
    weight_learning_rate: float | None = None

    def validate(self) -> "TrainConfig":
        if self.dim < 1 or self.batch_size < 1 or self.negatives_per_positive < 1:
            raise ValidationError("dim, batch_size and negatives_per_positive must be positive")
        if self.epochs < 0:
            raise ValidationError("epochs must be nonnegative")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.lam < 0:
            raise ValidationError("lam must be nonnegative")
        if self.weight_learning_rate is not None and self.weight_learning_rate < 0:
            raise ValidationError("weight_learning_rate must be nonnegative")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown training options: {sorted(extra)}")
        return cls(**data).validate()


def init_params(g: Graph, dim: int, lam: float, gamma: float, rng: np.random.Generator) -> HakeParams:
    """Uniform(-0.5, 0.5) moduli and uniform(-pi, pi) phases."""
    ents = sorted(g.entities)
    rels = g.relations
    return HakeParams(
        dim,
        ents,
        rels,
        rng.uniform(-0.5, 0.5, (len(ents), dim)),
        rng.uniform(-math.pi, math.pi, (len(ents), dim)),
        rng.uniform(-0.5, 0.5, (len(rels), dim)),
        rng.uniform(-math.pi, math.pi, (len(rels), dim)),
        lam,
        gamma,
    )


def _score_parts(p: HakeParams, hi, ri, ti):
    a = p.ent_mod[hi] * p.rel_mod[ri] - p.ent_mod[ti]
    na = np.linalg.norm(a, axis=-1)
    half = (p.ent_phase[hi] + p.rel_phase[ri] - p.ent_phase[ti]) / 2.0
    sn = np.sin(half)
    s = -na - p.lam * np.abs(sn).sum(axis=-1)
    return s, a, na, half, sn


def score_indices(p: HakeParams, hi, ri, ti) -> np.ndarray:
    return _score_parts(p, np.asarray(hi), np.asarray(ri), np.asarray(ti))[0]


def score_triple(p: HakeParams, h: str, r: str, t: str) -> float:
    s = score_indices(p, p.eidx(h), p.ridx(r), p.eidx(t))
    return float(s)


def score_grad(p: HakeParams, hi, ri, ti):
    """Scores and their partial derivatives w.r.t. the six embedding rows.

    Returns ``s`` of shape (B,) and a dict of (B, dim) arrays keyed
    ``hm, rm, tm, hp, rp, tp``. At a vanishing modulus residual or an exact
    zero of the sine term the zero subgradient is used.
    """
    s, a, na, half, sn = _score_parts(p, hi, ri, ti)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(na[:, None] > 0, a / na[:, None], 0.0)
    ph = -0.5 * p.lam * np.sign(sn) * np.cos(half)
    grads = {
        "hm": -u * p.rel_mod[ri],
        "rm": -u * p.ent_mod[hi],
        "tm": u,
        "hp": ph,
        "rp": ph,
        "tp": -ph,
    }
    return s, grads


def init_weights(g: Graph) -> TripleWeights:
    if len(g.triples) == 0:
        raise ValidationError("cannot initialise weights for an empty graph")
    keys = [t.key for t in g.triples]
    w0 = np.array([1.0 + math.log1p(t.article_count) for t in g.triples])
    return TripleWeights(keys, w0 / w0.max(), w0)


def uniform_weights(g: Graph) -> TripleWeights:
    keys = [t.key for t in g.triples]
    ones = np.ones(len(keys))
    return TripleWeights(keys, ones, ones.copy())


class _KindPools:
    def __init__(self, g: Graph):
        self.pools: dict[str, list[str]] = {}
        for eid in sorted(g.entities):
            self.pools.setdefault(g.entities[eid].kind, []).append(eid)
        self.kind = {eid: e.kind for eid, e in g.entities.items()}

    def pool(self, eid: str) -> list[str]:
        return self.pools[self.kind[eid]]


def sample_negative(g: Graph, pos: Triple, rng: np.random.Generator, pools: _KindPools | None = None) -> Triple:
    """Corrupt the head or tail of ``pos`` (fair coin, re-flipped on every
    attempt) with a same-kind entity drawn uniformly, rejecting corruptions
    already present in ``g``."""
    pools = pools or _KindPools(g)
    for _ in range(MAX_NEGATIVE_RETRIES):
        if rng.integers(2) == 0:
            cands = pools.pool(pos.head)
            cand = (cands[rng.integers(len(cands))], pos.relation, pos.tail)
        else:
            cands = pools.pool(pos.tail)
            cand = (pos.head, pos.relation, cands[rng.integers(len(cands))])
        if cand not in g:
            return Triple(*cand)
    raise ExhaustionError(
        f"no negative found for {pos.key} after {MAX_NEGATIVE_RETRIES} attempts"
    )


def _pair_indices(p: HakeParams, pairs):
    pos = np.array([[p.eidx(a.head), p.ridx(a.relation), p.eidx(a.tail)] for a, _ in pairs], dtype=int)
    neg = np.array([[p.eidx(b.head), p.ridx(b.relation), p.eidx(b.tail)] for _, b in pairs], dtype=int)
    return pos.reshape(-1, 3), neg.reshape(-1, 3)


def loss_and_grad(p: HakeParams, pos_idx: np.ndarray, neg_idx: np.ndarray, w: np.ndarray, need_grad=True):
    """Weighted BCE loss over aligned positive/negative index rows.

    ``w`` holds one weight per pair. Returns ``(loss, grads, grad_w)`` where
    ``grads`` maps the six embedding-row keys (prefixed ``pos_``/``neg_``)
    to (B, dim) arrays and ``grad_w`` is dL/dw per pair.
    """
    w = np.asarray(w, dtype=float)
    total = float(w.sum())
    if not total > 0:
        raise DegenerateError("sum of pair weights is zero")
    sp, gp = score_grad(p, pos_idx[:, 0], pos_idx[:, 1], pos_idx[:, 2])
    sn, gn = score_grad(p, neg_idx[:, 0], neg_idx[:, 1], neg_idx[:, 2])
    if not (np.all(np.isfinite(sp)) and np.all(np.isfinite(sn))):
        raise NumericError("non-finite triple score")
    zp = p.gamma + sp
    zn = p.gamma + sn
    per_pair = np.logaddexp(0.0, -zp) + np.logaddexp(0.0, zn)
    loss = float(w @ per_pair / total)
    if not need_grad:
        return loss, None, None
    # d softplus(-z)/dz = -sigmoid(-z); d softplus(z)/dz = sigmoid(z)
    dzp = -_sigmoid(-zp) * w / total
    dzn = _sigmoid(zn) * w / total
    grads = {}
    for k, v in gp.items():
        grads["pos_" + k] = v * dzp[:, None]
    for k, v in gn.items():
        grads["neg_" + k] = v * dzn[:, None]
    grad_w = (per_pair - loss) / total
    return loss, grads, grad_w


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def loss_batch(p: HakeParams, tw: TripleWeights | None, pairs, weighted: bool = True) -> float:
    """Weighted BCE over (positive, negative) Triple pairs. Each pair carries
    the weight of its positive triple; ``weighted=False`` uses weight 1."""
    if not pairs:
        raise DegenerateError("empty batch")
    pos_idx, neg_idx = _pair_indices(p, pairs)
    if weighted and tw is not None:
        w = np.array([tw[a] for a, _ in pairs])
    else:
        w = np.ones(len(pairs))
    return loss_and_grad(p, pos_idx, neg_idx, w, need_grad=False)[0]


def apply_gradients(p: HakeParams, pos_idx, neg_idx, grads, lr: float) -> None:
    for prefix, idx in (("pos_", pos_idx), ("neg_", neg_idx)):
        np.add.at(p.ent_mod, idx[:, 0], -lr * grads[prefix + "hm"])
        np.add.at(p.rel_mod, idx[:, 1], -lr * grads[prefix + "rm"])
        np.add.at(p.ent_mod, idx[:, 2], -lr * grads[prefix + "tm"])
        np.add.at(p.ent_phase, idx[:, 0], -lr * grads[prefix + "hp"])
        np.add.at(p.rel_phase, idx[:, 1], -lr * grads[prefix + "rp"])
        np.add.at(p.ent_phase, idx[:, 2], -lr * grads[prefix + "tp"])


@dataclass
class TrainResult:
    params: HakeParams
    weights: TripleWeights
    epoch_loss: list[float]


def train(g: Graph, cfg: TrainConfig, triples: list[Triple] | None = None) -> TrainResult:
    """Mini-batch SGD on the weighted BCE loss.

    ``triples`` restricts the positives (e.g. a training split); negatives
    are always filtered against the full graph ``g``. With
    ``cfg.weighted`` the per-triple weights are updated alongside the
    embeddings and projected back onto [0, 1] after every step.
    """
    cfg.validate()
    if len(g.triples) == 0:
        raise ValidationError("cannot train on an empty graph")
    rng = np.random.default_rng(cfg.seed)
    p = init_params(g, cfg.dim, cfg.lam, cfg.gamma, rng)
    tw = init_weights(g) if cfg.weighted else uniform_weights(g)
    train_triples = list(g.triples) if triples is None else list(triples)
    tindex = np.array([tw.index[t.key] for t in train_triples], dtype=int)
    pools = _KindPools(g)
    wlr = cfg.learning_rate if cfg.weight_learning_rate is None else cfg.weight_learning_rate
    npp = cfg.negatives_per_positive
    history: list[float] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_triples))
        tot, n = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            pos_rows, neg_rows, wk = [], [], []
            for b in batch:
                t = train_triples[b]
                row = [p.ent_index[t.head], p.rel_index[t.relation], p.ent_index[t.tail]]
                for _ in range(npp):
                    neg = sample_negative(g, t, rng, pools)
                    pos_rows.append(row)
                    neg_rows.append([p.ent_index[neg.head], row[1], p.ent_index[neg.tail]])
                    wk.append(tindex[b])
            pos_idx = np.array(pos_rows, dtype=int)
            neg_idx = np.array(neg_rows, dtype=int)
            wk = np.array(wk, dtype=int)
            try:
                loss, grads, grad_w = loss_and_grad(p, pos_idx, neg_idx, tw.w[wk])
            except DegenerateError:
                logger.warning("epoch %d: skipping batch whose weights are all zero", epoch)
                continue
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            apply_gradients(p, pos_idx, neg_idx, grads, cfg.learning_rate)
            if cfg.weighted and wlr > 0:
                gw = np.zeros(len(tw.w))
                np.add.at(gw, wk, grad_w)
                tw.w -= wlr * gw
                np.clip(tw.w, 0.0, 1.0, out=tw.w)
            tot += loss * len(pos_idx)
            n += len(pos_idx)
        history.append(tot / n if n else float("nan"))
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            logger.debug("epoch %d loss %.6f", epoch, history[-1])
    return TrainResult(p, tw, history)


def rank_drugs(p: HakeParams, g: Graph, disease: str, relation: str = "indication", k: int = 100):
    """Top-``k`` drug entities by ``s(disease, relation, drug)``, ties by id."""
    if k < 1:
        raise ValidationError("K must be >= 1")
    hi = p.eidx(disease)
    ri = p.ridx(relation)
    drugs = [d for d in g.entities_of_kind("drug") if d in p.ent_index]
    if not drugs:
        return []
    ti = np.array([p.ent_index[d] for d in drugs])
    scores = score_indices(p, np.full(len(ti), hi), np.full(len(ti), ri), ti)
    ranked = sorted(zip(drugs, scores.tolist()), key=lambda x: (-x[1], x[0]))
    return ranked[:k]


def heldout_rank_test(p: HakeParams, g: Graph, heldout: list[Triple], train_keys: set, relation_kind: str = "drug"):
    """Filtered tail ranks of held-out triples and the exact one-sided
    p-value of their mean rank under uniformly random ranking.

    For each held-out ``(h, r, t)`` the candidates are all entities of
    ``t``'s kind except known training tails of ``(h, r, ·)``. Under the
    null each rank is uniform on ``1..n_candidates``; the p-value is
    ``P(sum of null ranks <= observed sum)`` from the exact convolution.
    """
    ranks, sizes = [], []
    for t in heldout:
        kind = g.entities[t.tail].kind
        cands = [
            c for c in g.entities_of_kind(kind)
            if c == t.tail or (t.head, t.relation, c) not in train_keys
        ]
        ti = np.array([p.eidx(c) for c in cands])
        s = score_indices(p, np.full(len(ti), p.eidx(t.head)), np.full(len(ti), p.ridx(t.relation)), ti)
        mine = s[cands.index(t.tail)]
        # pessimistic tie handling
        ranks.append(int(np.sum(s > mine) + np.sum(s == mine)))
        sizes.append(len(cands))
    dist = np.array([1.0])
    for n in sizes:
        dist = np.convolve(dist, np.full(n, 1.0 / n))
    # dist[j] = P(sum of ranks = j + len(sizes))
    observed = sum(ranks)
    pval = float(dist[: observed - len(sizes) + 1].sum())
    expected = float(sum((n + 1) / 2 for n in sizes))
    return {"ranks": ranks, "sizes": sizes, "mean_rank": observed / len(ranks),
            "expected_mean_rank": expected / len(ranks), "p_value": min(pval, 1.0)}


def save_checkpoint(path, params: HakeParams, weights: TripleWeights | None = None, meta: dict | None = None) -> None:
    data = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dim": params.dim,
        "lambda": params.lam,
        "gamma": params.gamma,
        "entities": params.entities,
        "relations": params.relations,
        "ent_mod": params.ent_mod.tolist(),
        "ent_phase": params.ent_phase.tolist(),
        "rel_mod": params.rel_mod.tolist(),
        "rel_phase": params.rel_phase.tolist(),
        "meta": meta or {},
    }
    if weights is not None:
        data["weights"] = {
            "keys": [list(k) for k in weights.keys],
            "w": weights.w.tolist(),
            "w0": weights.w0.tolist(),
        }
    Path(path).write_text(json.dumps(data) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[HakeParams, TripleWeights | None, dict]:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"checkpoint not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint is not valid JSON: {exc}") from None
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"{path} is not a HAKE checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {data.get('version')!r}")
    dim = int(data["dim"])

    def table(key, n):
        arr = np.asarray(data[key], dtype=float)
        return arr.reshape(n, dim)

    ents, rels = data["entities"], data["relations"]
    params = HakeParams(
        dim, ents, rels,
        table("ent_mod", len(ents)), table("ent_phase", len(ents)),
        table("rel_mod", len(rels)), table("rel_phase", len(rels)),
        float(data["lambda"]), float(data["gamma"]),
    )
    weights = None
    if "weights" in data:
        wd = data["weights"]
        weights = TripleWeights([tuple(k) for k in wd["keys"]], wd["w"], wd["w0"])
    return params, weights, data.get("meta", {})


class HakeEmbedding(BaseEstimator):
    """Estimator wrapper around :func:`train`.

    ``fit`` takes a :class:`Graph`; fitted attributes are ``params_``,
    ``weights_`` and ``loss_history_``.
    """

    def __init__(self, dim=64, epochs=200, batch_size=128, learning_rate=0.05,
                 negatives_per_positive=4, seed=0, weighted=False, lam=0.5,
                 gamma=12.0, weight_learning_rate=None):
        self.dim = dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.negatives_per_positive = negatives_per_positive
        self.seed = seed
        self.weighted = weighted
        self.lam = lam
        self.gamma = gamma
        self.weight_learning_rate = weight_learning_rate

    def _config(self) -> TrainConfig:
        return TrainConfig(**self.get_params()).validate()

    def fit(self, graph: Graph, y=None, triples=None):
        if not isinstance(graph, Graph):
            raise ValidationError("HakeEmbedding.fit expects a Graph")
        result = train(graph, self._config(), triples=triples)
        self.params_ = result.params
        self.weights_ = result.weights
        self.loss_history_ = result.epoch_loss
        self.graph_ = graph
        return self

    def decision_function(self, triples) -> np.ndarray:
        """Raw scores for an iterable of ``(head, relation, tail)``."""
        check_is_fitted(self, "params_")
        p = self.params_
        rows = [(p.eidx(h), p.ridx(r), p.eidx(t)) for h, r, t, *_ in triples]
        if not rows:
            return np.empty(0)
        idx = np.array(rows)
        return score_indices(p, idx[:, 0], idx[:, 1], idx[:, 2])

    def rank(self, disease: str, relation: str = "indication", k: int = 100):
        check_is_fitted(self, "params_")
        return rank_drugs(self.params_, self.graph_, disease, relation, k)

    def save(self, path, meta=None) -> None:
        check_is_fitted(self, "params_")
        meta = dict(meta or {})
        meta.setdefault("config", asdict(self._config()))
        save_checkpoint(path, self.params_, self.weights_, meta)
