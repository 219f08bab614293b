from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

import oracles
from kgrepurpose.datasets import toy_graph
from kgrepurpose.exceptions import ExhaustionError, NotFoundError, ValidationError
from kgrepurpose.graph import Entity, Graph, Triple
from kgrepurpose.hake import (
    HakeEmbedding,
    HakeParams,
    TrainConfig,
    init_params,
    init_weights,
    load_checkpoint,
    loss_batch,
    rank_drugs,
    sample_negative,
    save_checkpoint,
    score_triple,
    train,
)


def one_dim(hm, rm, tm, hp, rp, tp, lam):
    return HakeParams(
        1, ["h", "t"], ["r"],
        [[hm], [tm]], [[hp], [tp]], [[rm]], [[rp]], lam=lam,
    )


def test_score_zero_when_both_terms_vanish():
    p = one_dim(2.0, 1.5, 3.0, 0.3, 2 * math.pi - 0.3, 0.0, 1.0)
    assert score_triple(p, "h", "r", "t") == pytest.approx(0.0, abs=1e-12)


def test_score_modulus_example():
    p = one_dim(2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 1.0)
    assert score_triple(p, "h", "r", "t") == pytest.approx(-2.0, abs=1e-12)


def test_score_phase_example():
    p = one_dim(1.0, 1.0, 1.0, math.pi, 0.0, 0.0, 2.0)
    assert score_triple(p, "h", "r", "t") == pytest.approx(-2.0, abs=1e-12)


def test_score_unknown_entity():
    p = one_dim(1, 1, 1, 0, 0, 0, 1)
    with pytest.raises(NotFoundError):
        score_triple(p, "nope", "r", "t")


floats = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(floats, min_size=6, max_size=6), st.floats(0, 4))
def test_score_nonpositive_and_matches_oracle(v, lam):
    p = one_dim(*v, lam)
    s = score_triple(p, "h", "r", "t")
    assert s <= 0
    assert s == pytest.approx(oracles.hake_score([v[0]], [v[1]], [v[2]], [v[3]], [v[4]], [v[5]], lam), abs=1e-12)


def graph_with_counts(counts):
    ents = [Entity(f"E{i}", f"e{i}", "gene") for i in range(len(counts) + 1)]
    triples = [Triple("E0", "r", f"E{i + 1}", c) for i, c in enumerate(counts)]
    return Graph(ents, triples)


def test_init_weights_examples():
    tw = init_weights(graph_with_counts([0, 0, 0]))
    assert np.all(tw.w0 == 1.0) and np.all(tw.w == 1.0)
    tw = init_weights(graph_with_counts([0, math.e - 1]))
    np.testing.assert_allclose(tw.w0, [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(tw.w, [0.5, 1.0], atol=1e-12)
    assert init_weights(graph_with_counts([41])).w.tolist() == [1.0]


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=20))
def test_init_weights_in_unit_interval(counts):
    w = init_weights(graph_with_counts(counts)).w
    assert w.min() > 0 and w.max() == 1.0


def test_sample_negative_only_option():
    g = Graph([Entity("A", "a", "gene"), Entity("B", "b", "drug")], [Triple("A", "r", "B")])
    # head pool is {A} (the positive itself), tail pool is {B}: impossible
    with pytest.raises(ExhaustionError):
        sample_negative(g, g.triples[0], np.random.default_rng(0))
    g = Graph([Entity("A", "a", "gene"), Entity("B", "b", "gene")], [Triple("A", "r", "B"), Triple("B", "r", "B")])
    rng = np.random.default_rng(1)
    seen = {sample_negative(g, g.triples[0], rng).key for _ in range(50)}
    assert seen == {("A", "r", "A")}


def test_sample_negative_exhaustion():
    ents = [Entity("A", "a", "gene"), Entity("B", "b", "gene")]
    triples = [Triple(h, "r", t) for h in "AB" for t in "AB"]
    g = Graph(ents, triples)
    with pytest.raises(ExhaustionError):
        sample_negative(g, g.triples[1], np.random.default_rng(0))


def test_sample_negative_uniform():
    ents = [Entity(f"D{i}", f"d{i}", "drug") for i in range(3)]
    ents += [Entity(f"X{i}", f"x{i}", "disease") for i in range(3)]
    g = Graph(ents, [Triple("D0", "r", "X0")])
    rng = np.random.default_rng(7)
    draws = Counter(sample_negative(g, g.triples[0], rng).key for _ in range(10_000))
    assert len(draws) == 4
    freq = np.array(list(draws.values())) / 10_000
    assert np.all(np.abs(freq - 0.25) < 0.02)
    assert chisquare(list(draws.values())).pvalue > 0.001


def tiny_params(gamma=0.0):
    # every score is exactly -gamma so that gamma + s = 0
    p = HakeParams(
        2, ["A", "B", "C"], ["r"],
        np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((1, 2)), np.zeros((1, 2)), gamma=gamma,
    )
    return p


def test_loss_at_zero_logit_is_two_ln_two():
    p = tiny_params()
    pair = (Triple("A", "r", "B"), Triple("A", "r", "C"))
    assert loss_batch(p, None, [pair]) == pytest.approx(2 * math.log(2), abs=1e-12)


def test_loss_weighted_mean_normalisation(rng):
    g, _, _ = toy_graph()
    p = init_params(g, 4, 0.5, 3.0, rng)
    tw = init_weights(g)
    a, b = g.triples[0], g.triples[1]
    neg_a, neg_b = sample_negative(g, a, rng), sample_negative(g, b, rng)
    one = loss_batch(p, tw, [(a, neg_a)])
    assert loss_batch(p, tw, [(a, neg_a), (a, neg_a)]) == pytest.approx(one, rel=1e-12)
    both = loss_batch(p, tw, [(a, neg_a), (b, neg_b)])
    tw.w *= 0.5
    assert loss_batch(p, tw, [(a, neg_a), (b, neg_b)]) == pytest.approx(both, rel=1e-12)


def test_loss_matches_termwise_oracle(rng):
    g, _, _ = toy_graph()
    p = init_params(g, 3, 0.7, 2.0, rng)
    tw = init_weights(g)
    tw.w = rng.uniform(0.1, 1.0, len(tw.w))
    pairs = [(t, sample_negative(g, t, rng)) for t in g.triples[:8]]
    tables = (
        {e: p.ent_mod[i] for e, i in p.ent_index.items()},
        {e: p.ent_phase[i] for e, i in p.ent_index.items()},
        {r: p.rel_mod[i] for r, i in p.rel_index.items()},
        {r: p.rel_phase[i] for r, i in p.rel_index.items()},
    )
    em, ep, rm, rp = tables
    want = oracles.bce_loss(
        (em, ep, rm, rp), [a.key for a, _ in pairs], [b.key for _, b in pairs],
        [tw[a] for a, _ in pairs], p.lam, p.gamma,
    )
    assert loss_batch(p, tw, pairs) == pytest.approx(want, rel=1e-10)


def small_cfg(**kw):
    base = dict(dim=8, epochs=5, batch_size=8, learning_rate=0.1, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def test_zero_epochs_returns_initialisation():
    g, _, _ = toy_graph()
    res = train(g, small_cfg(epochs=0))
    init = init_params(g, 8, 0.5, 12.0, np.random.default_rng(3))
    np.testing.assert_array_equal(res.params.ent_mod, init.ent_mod)
    np.testing.assert_array_equal(res.params.rel_phase, init.rel_phase)
    assert res.epoch_loss == []


def test_unweighted_training_keeps_unit_weights():
    g, _, _ = toy_graph()
    res = train(g, small_cfg(weighted=False))
    assert np.all(res.weights.w == 1.0)


def test_weighted_training_keeps_weights_in_unit_interval():
    g, _, _ = toy_graph()
    res = train(g, small_cfg(weighted=True, learning_rate=0.5))
    assert res.weights.w.min() >= 0.0 and res.weights.w.max() <= 1.0


def test_uniform_weight_equivalence_with_frozen_weights():
    # all counts zero: weighted mode starts from unit weights; with the
    # weight step frozen the trajectories coincide exactly
    g, _, _ = toy_graph()
    zero = Graph(g.entities.values(), [Triple(t.head, t.relation, t.tail, 0) for t in g.triples])
    a = train(zero, small_cfg(weighted=False))
    b = train(zero, small_cfg(weighted=True, weight_learning_rate=0.0))
    np.testing.assert_array_equal(a.params.ent_mod, b.params.ent_mod)
    np.testing.assert_array_equal(a.params.rel_phase, b.params.rel_phase)
    assert a.epoch_loss == b.epoch_loss


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(dim=0).validate()
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"dims": 3})


def drug_graph(n_drugs):
    ents = [Entity("X", "x", "disease")] + [Entity(f"D{i}", f"d{i}", "drug") for i in range(n_drugs)]
    return Graph(ents, [Triple("X", "indication", "D0")])


def test_rank_single_drug():
    g = drug_graph(1)
    p = init_params(g, 4, 0.5, 12, np.random.default_rng(0))
    assert [d for d, _ in rank_drugs(p, g, "X", k=100)] == ["D0"]


def test_rank_top_k_bruteforce(rng):
    g = drug_graph(5)
    p = init_params(g, 4, 0.5, 12, rng)
    brute = sorted(((score_triple(p, "X", "indication", d), d) for d in g.entities_of_kind("drug")), reverse=True)
    got = rank_drugs(p, g, "X", k=3)
    assert [d for d, _ in got] == [d for _, d in brute[:3]]


def test_rank_ties_are_id_ordered(rng):
    g = drug_graph(4)
    p = init_params(g, 4, 0.5, 12, rng)
    for arr in (p.ent_mod, p.ent_phase):
        arr[p.eidx("D3")] = arr[p.eidx("D1")]
    order = [d for d, _ in rank_drugs(p, g, "X", k=4)]
    i = order.index("D1")
    assert order[i + 1] == "D3"


def test_rank_invariant_to_gamma(rng):
    g = drug_graph(6)
    p = init_params(g, 4, 0.5, 12, rng)
    before = rank_drugs(p, g, "X", k=6)
    p.gamma = 200.0
    assert rank_drugs(p, g, "X", k=6) == before


def test_rank_rejects_bad_k(rng):
    g = drug_graph(2)
    with pytest.raises(ValidationError):
        rank_drugs(init_params(g, 2, 0.5, 12, rng), g, "X", k=0)


def test_checkpoint_round_trip(tmp_path):
    g, _, _ = toy_graph()
    res = train(g, small_cfg(weighted=True, epochs=2))
    save_checkpoint(tmp_path / "c.json", res.params, res.weights, {"seed": 3})
    p, w, meta = load_checkpoint(tmp_path / "c.json")
    np.testing.assert_array_equal(p.ent_phase, res.params.ent_phase)
    np.testing.assert_array_equal(w.w, res.weights.w)
    assert meta == {"seed": 3} and p.gamma == res.params.gamma


def test_estimator_interface(tmp_path):
    g, _, _ = toy_graph()
    est = HakeEmbedding(dim=4, epochs=2, batch_size=8, seed=1)
    assert est.get_params()["dim"] == 4
    est.fit(g)
    t = g.triples[0]
    s = est.decision_function([t.key])
    assert s.shape == (1,) and s[0] == pytest.approx(score_triple(est.params_, *t.key))
    est.save(tmp_path / "m.json")
    assert load_checkpoint(tmp_path / "m.json")[2]["config"]["dim"] == 4
