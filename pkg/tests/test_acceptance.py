"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
in the terminal summary. Run alone with ``pytest tests/test_acceptance.py``
or ``python3 tests/test_acceptance.py``."""

from __future__ import annotations

import csv
import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import criterion
from kgrepurpose import analytics
from kgrepurpose.cli import main as cli_main
from kgrepurpose.datasets import toy_graph
from kgrepurpose.evidence import EvidenceFlags, rule_score, trial_result_status
from kgrepurpose.graph import Entity, Graph, Triple
from kgrepurpose.hake import (
    HakeParams,
    TrainConfig,
    heldout_rank_test,
    init_weights,
    loss_and_grad,
    score_triple,
    train,
)
from kgrepurpose.paths import PathScoringConfig, geometric_mean, k_shortest_paths, normalize_edge_score
from kgrepurpose.providers import TrialMeta
from kgrepurpose.signature import PerturbationRecord, SignatureConfig, build_signature, dose_weight, ic50_weight
from kgrepurpose.survival import ExpressionMatrix, fit_cox_binary, ssgsea


# ------------------------------------------------------------------ 1

def _random_instance(rng):
    dim = int(rng.integers(2, 9))
    n_ent, n_rel, batch = 6, 2, 5
    p = HakeParams(
        dim, [f"e{i}" for i in range(n_ent)], [f"r{i}" for i in range(n_rel)],
        rng.uniform(-1, 1, (n_ent, dim)), rng.uniform(-math.pi, math.pi, (n_ent, dim)),
        rng.uniform(-1, 1, (n_rel, dim)), rng.uniform(-math.pi, math.pi, (n_rel, dim)),
        lam=float(rng.uniform(0.1, 1.0)), gamma=float(rng.uniform(0.0, 6.0)),
    )
    pos = np.column_stack([rng.integers(0, n_ent, batch), rng.integers(0, n_rel, batch), rng.integers(0, n_ent, batch)])
    neg = pos.copy()
    neg[:, 2] = rng.integers(0, n_ent, batch)
    w = rng.uniform(0.1, 1.0, batch)
    return p, pos, neg, w


def _relerr(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


@criterion(1, "gradient check: embeddings and triple weights vs central differences")
def test_criterion_01_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        p, pos, neg, w = _random_instance(rng)
        loss, grads, grad_w = loss_and_grad(p, pos, neg, w)
        tables = (p.ent_mod, p.ent_phase, p.rel_mod, p.rel_phase)
        assert loss == pytest.approx(oracles.bce_loss(tables, pos, neg, w, p.lam, p.gamma), rel=1e-12)

        analytic = {k: np.zeros_like(v) for k, v in zip(("em", "ep", "rm", "rp"), tables)}
        for prefix, idx in (("pos_", pos), ("neg_", neg)):
            for key, table, col in (("hm", "em", 0), ("rm", "rm", 1), ("tm", "em", 2),
                                    ("hp", "ep", 0), ("rp", "rp", 1), ("tp", "ep", 2)):
                np.add.at(analytic[table], idx[:, col], grads[prefix + key])

        def f():
            return oracles.bce_loss(tables, pos, neg, w, p.lam, p.gamma)

        for name, table in zip(("em", "ep", "rm", "rp"), tables):
            worst = max(worst, _relerr(analytic[name], oracles.central_difference(f, table)))
        worst = max(worst, _relerr(grad_w, oracles.central_difference(f, w)))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-4, worst
    assert elapsed < 10
    return f"max rel err {worst:.2e}"


# ------------------------------------------------------------------ 2

@criterion(2, "training progress on the 20-entity toy graph")
def test_criterion_02_training_progress():
    t0 = time.perf_counter()
    g, train_triples, held = toy_graph()
    assert len(g.entities) == 20
    cfg = TrainConfig(dim=32, epochs=200, batch_size=8, learning_rate=0.3, negatives_per_positive=8,
                      seed=0, gamma=12.0)
    res = train(g, cfg, train_triples)
    first = res.epoch_loss[:10]
    assert all(b < a for a, b in zip(first, first[1:])), first
    test = heldout_rank_test(res.params, g, held, {t.key for t in train_triples})
    elapsed = time.perf_counter() - t0
    assert test["mean_rank"] < test["expected_mean_rank"]
    assert test["p_value"] < 0.01, test
    assert elapsed < 60
    return f"mean rank {test['mean_rank']:.2f} vs {test['expected_mean_rank']:.2f}, p={test['p_value']:.2e}"


# ------------------------------------------------------------------ 3

@criterion(3, "closed-form values match hand evaluation")
def test_criterion_03_closed_form_values():
    p = HakeParams(
        2, ["h", "t"], ["r"],
        np.array([[1.0, 2.0], [0.5, 1.0]]), np.array([[0.0, math.pi], [0.0, 0.0]]),
        np.array([[0.5, 1.0]]), np.array([[math.pi / 2, 0.0]]), lam=0.5, gamma=12.0,
    )
    # residual (0, 1) -> 1; half phases (pi/4, pi/2) -> sqrt(2)/2 + 1
    expected = -1.0 - 0.5 * (math.sqrt(2) / 2 + 1.0)
    assert abs(score_triple(p, "h", "r", "t") - expected) < 1e-9

    g = Graph([Entity("a", "a", "drug"), Entity("b", "b", "disease"), Entity("c", "c", "gene")],
              [Triple("b", "indication", "a", 0), Triple("a", "target", "c", 3)])
    tw = init_weights(g)
    w0_hi = 1.0 + math.log(4.0)
    assert abs(tw.w0[1] - w0_hi) < 1e-9 and abs(tw.w0[0] - 1.0) < 1e-9
    assert abs(tw.w[0] - 1.0 / w0_hi) < 1e-9 and abs(tw.w[1] - 1.0) < 1e-9

    assert abs(normalize_edge_score(-350.0, PathScoringConfig()) - 0.5) < 1e-9
    assert abs(geometric_mean([0.25, 1.0]) - 0.5) < 1e-9
    assert abs(ic50_weight(4.0) - 0.25) < 1e-9
    assert abs(dose_weight(math.e ** 2 - 1.0, 0.5) - math.exp(-1.0)) < 1e-9


# ------------------------------------------------------------------ 4

def _random_graph(rng, n_nodes, n_edges, relations):
    ents = [Entity(f"n{i}", f"n{i}", "gene") for i in range(n_nodes)]
    keys = set()
    while len(keys) < n_edges:
        h, t = (int(x) for x in rng.integers(0, n_nodes, 2))
        keys.add((f"n{h}", str(rng.choice(relations)), f"n{t}"))
    return Graph(ents, [Triple(h, r, t) for h, r, t in sorted(keys)])


@criterion(4, "k_shortest_paths equals exhaustive simple-path enumeration")
def test_criterion_04_path_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    rels = ["binds", "regulates", "synergistic interaction"]
    cfg = PathScoringConfig()
    checked = 0
    for _ in range(30):
        n = int(rng.integers(3, 9))
        g = _random_graph(rng, n, int(rng.integers(n, 2 * n + 4)), rels)
        for src, dst in [("n0", f"n{n - 1}"), ("n1", "n2")]:
            got = k_shortest_paths(g, src, dst, 10_000, cfg)
            want = oracles.exhaustive_shortest_paths([t.key for t in g.triples], src, dst,
                                                     frozenset({"synergistic interaction"}))
            got_set = {(p.nodes, tuple(e.key for e in p.edges)) for p in got}
            assert len(got_set) == len(got)
            assert got_set == want
            assert all("synergistic interaction" not in p.relations for p in got)
            checked += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 5
    return f"{checked} endpoint pairs on 30 graphs"


# ------------------------------------------------------------------ 5

@criterion(5, "build_signature equals the reference implementation")
def test_criterion_05_signature_oracle():
    rng = np.random.default_rng(11)
    for case in range(100):
        genes = [f"G{i}" for i in range(int(rng.integers(1, 15)))]
        raw = []
        for _ in range(int(rng.integers(1, 40))):
            gene = str(rng.choice(genes))
            direction = "up" if rng.random() < 0.5 else "down"
            unit = str(rng.choice(["nM", "uM", "mM"]))
            dose = float(rng.choice([0.0, 0.1, 1.0, 10.0, 500.0]))
            ic50 = None if rng.random() < 0.3 else float(rng.choice([0.01, 0.5, 1.0, 4.0, 20.0]))
            raw.append((gene, direction, dose, unit, ic50))
        k = float(rng.choice([0.0, 0.5, 1.0]))
        alpha = float(rng.choice([0.0, 0.2, 0.7, 1.0]))
        top_n = int(rng.integers(1, 10))
        recs = [PerturbationRecord("drugX", f"s{i}", g, d, v, u, ic) for i, (g, d, v, u, ic) in enumerate(raw)]
        sig = build_signature(recs, SignatureConfig(k=k, alpha=alpha, top_n=top_n))
        up, down = oracles.reference_signature(raw, k=k, alpha=alpha, top_n=top_n)
        assert sig.up == up, case
        assert sig.down == down, case


# ------------------------------------------------------------------ 6

@criterion(6, "ssGSEA equals the brute-force running sum; rank invariance")
def test_criterion_06_ssgsea_oracle():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        n_genes = int(rng.integers(5, 51))
        n_samples = int(rng.integers(2, 11))
        genes = [f"g{i}" for i in range(n_genes)]
        vals = rng.normal(size=(n_genes, n_samples))
        gs = set(rng.choice(genes, int(rng.integers(1, n_genes)), replace=False).tolist())
        m = ExpressionMatrix(genes, [f"s{j}" for j in range(n_samples)], vals)
        es = ssgsea(m, gs)
        for j in range(n_samples):
            ref = oracles.ssgsea_bruteforce(vals[:, j].tolist(), genes, gs)
            worst = max(worst, abs(es[j] - ref))
        m2 = ExpressionMatrix(genes, m.samples, np.exp(vals) * 3.0 + 1.0)
        assert np.array_equal(ssgsea(m2, gs), es)
    assert worst < 1e-9
    return f"max |diff| {worst:.1e}"


# ------------------------------------------------------------------ 7

@criterion(7, "Cox beta vs grid search; label swap; identical groups")
def test_criterion_07_cox_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        n0, n1 = int(rng.integers(8, 20)), int(rng.integers(8, 20))
        hr_true = float(np.exp(rng.uniform(-1.0, 1.0)))
        t = np.concatenate([rng.exponential(1.0, n0), rng.exponential(1.0 / hr_true, n1)])
        t = np.round(t, 1) + 0.1  # induce ties
        c = rng.uniform(0.5, 3.0, n0 + n1)
        time_, event = np.minimum(t, c), t <= c
        x = np.array([0] * n0 + [1] * n1)
        fit = fit_cox_binary(time_, event, x)
        grid = oracles.cox_grid_beta(time_, event, x)
        worst = max(worst, abs(math.exp(grid) - fit.hr))
        swapped = fit_cox_binary(time_, event, 1 - x)
        assert abs(fit.hr * swapped.hr - 1.0) < 1e-10
    assert worst < 1e-3, worst

    t = rng.exponential(1.0, 15).round(2) + 0.01
    e = rng.random(15) < 0.7
    e[0] = True
    same = fit_cox_binary(np.concatenate([t, t]), np.concatenate([e, e]), [0] * 15 + [1] * 15)
    assert same.hr == 1.0
    return f"max |dHR| {worst:.1e}"


# ------------------------------------------------------------------ 8

TRIAL_TABLE = [
    # (phase, status, has_results, positive, start, completion (y, m) or None, current month, label)
    (2, "completed", True, False, 2019, (2021, 3), 6, "bad"),
    (3, "completed", True, True, 2018, (2022, 1), 6, "good"),
    (1, "completed", False, None, 2023, (2023, 4), 6, "completed_no_result"),
    (1, "completed", False, None, 2023, (2023, 6), 6, "ongoing_in_reasonable_term"),
    (3, "completed", False, None, 2022, (2023, 5), 6, "completed_no_result"),
    (1, "recruiting", False, None, 2021, None, 6, "ongoing_long_term_incomplete"),
    (1, "recruiting", False, None, 2022, None, 6, "ongoing_long_term_incomplete"),
    (2, "active", False, None, 2023, None, 6, "ongoing_in_reasonable_term"),
    (3, "active", False, None, 2019, None, 6, "ongoing_long_term_incomplete"),
    (3, "recruiting", False, None, 2020, None, 6, "ongoing_in_reasonable_term"),
    (None, "active", False, None, 2020, None, 6, "ongoing_in_reasonable_term"),
    (4, "active", False, None, 2019, None, 6, "ongoing_long_term_incomplete"),
]
BANDS = {"bad": (0, 19), "completed_no_result": (20, 34), "ongoing_long_term_incomplete": (35, 49),
         "ongoing_in_reasonable_term": (50, 79), "good": (80, 100)}


@criterion(8, "rule scorer arithmetic over consistent flag sets; trial band table")
def test_criterion_08_rule_scorer_and_trials():
    n = 0
    for clin, pre, gene, path, fda in itertools.product(
        (False, True), (False, True), ("none", "limited", "strong"), ("none", "nominal", "significant"), (False, True)
    ):
        flags = EvidenceFlags(clin, pre, gene == "strong", gene == "limited", path == "significant",
                              path == "nominal", fda)
        want = oracles.rule_arithmetic(clin, pre, gene == "strong", gene == "limited", path == "significant",
                                       path == "nominal", fda)
        assert rule_score(flags).score == want
        n += 1
    for i, (phase, status, has, posv, start, comp, month, label) in enumerate(TRIAL_TABLE):
        t = TrialMeta(f"NCT{i:08d}", phase, status, has, posv, start, 2024,
                      comp[0] if comp else None, comp[1] if comp else None, month)
        st = trial_result_status(t)
        assert st.label == label, (i, st.label, label)
        assert st.band == BANDS[label]
    return f"{n} flag sets, {len(TRIAL_TABLE)} trial cases"


# ------------------------------------------------------------------ 9

@criterion(9, "spearman, roc_auc and pca against independent oracles")
def test_criterion_09_stats():
    rng = np.random.default_rng(9)
    assert analytics.spearman([1, 2, 3, 4], [2, 1, 4, 3])["r"] == pytest.approx(0.6, abs=1e-12)
    for _ in range(20):
        n = int(rng.integers(3, 15))
        x = rng.integers(0, 5, n).astype(float)
        y = rng.integers(0, 5, n).astype(float)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert analytics.spearman(x, y)["r"] == pytest.approx(oracles.spearman_by_hand(x, y), abs=1e-12)
    for _ in range(20):
        n = int(rng.integers(4, 20))
        s = rng.integers(0, 6, n).astype(float)
        lab = rng.random(n) < 0.5
        lab[0], lab[1] = True, False
        assert analytics.roc_auc(s, lab) == pytest.approx(oracles.auc_pairwise(s, lab), abs=1e-12)
    for _ in range(10):
        m = rng.normal(size=(6, 4)) * 20 + 50
        res = analytics.pca(m, 4)
        ref = np.sort(np.linalg.eigvalsh(np.cov(m, rowvar=False)))[::-1]
        assert np.allclose(res["eigenvalues"], ref, atol=1e-8, rtol=0)
        c = res["components"]
        assert np.allclose(c @ c.T, np.eye(4), atol=1e-10)


# ----------------------------------------------------------------- 10/11

REHEARSAL_OUTPUTS = ("ranked.csv", "recall.csv", "overlap.csv", "survival_scatter.csv",
                     "survival_alignment.json", "ablation_scores.csv", "ablation_summary.csv",
                     "subtype_matrix.csv", "pca_projection.csv", "pca.json", "run_summary.json")


def _rehearse(root: Path) -> float:
    t0 = time.perf_counter()
    w = root / "world"
    cfg = str(w / "config.json")
    steps = [
        ["make-world", "--out", str(w), "--seed", "0"],
        ["ingest", "--triples", str(w / "triples.tsv"), "--names", str(w / "names.tsv"), "--out", str(w / "graph.json")],
        ["train", "--graph", str(w / "graph.json"), "--config", cfg, "--weighted", "false", "--out", str(w / "kge.ckpt.json")],
        ["train", "--graph", str(w / "graph.json"), "--config", cfg, "--weighted", "true", "--out", str(w / "kgwe.ckpt.json")],
        ["run", "--config", cfg, "--serial"],
        ["eval-recall", "--config", cfg, "--serial"],
        ["eval-survival", "--config", cfg, "--serial"],
        ["ablate", "--config", cfg, "--serial"],
        ["subtype-pca", "--config", cfg, "--serial"],
    ]
    for argv in steps:
        assert cli_main(argv) == 0, argv
    return time.perf_counter() - t0


@pytest.fixture(scope="module")
def rehearsal(tmp_path_factory):
    a = tmp_path_factory.mktemp("rehearsal_a")
    b = tmp_path_factory.mktemp("rehearsal_b")
    ta = _rehearse(a)
    tb = _rehearse(b)
    return a / "world", b / "world", max(ta, tb)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@criterion(10, "pipeline rehearsal: determinism, union recall 1.0, negative pooled Spearman")
def test_criterion_10_pipeline_rehearsal(rehearsal):
    wa, wb, secs = rehearsal
    for name in REHEARSAL_OUTPUTS:
        assert (wa / "results" / name).read_bytes() == (wb / "results" / name).read_bytes(), name
    da = sorted(p.name for p in (wa / "results" / "dossiers").iterdir())
    assert da and da == sorted(p.name for p in (wb / "results" / "dossiers").iterdir())
    for name in da:
        assert (wa / "results" / "dossiers" / name).read_bytes() == (wb / "results" / "dossiers" / name).read_bytes()
    recall = {r["configuration"]: float(r["recall"]) for r in _read_csv(wa / "results" / "recall.csv")}
    assert recall["full union"] == 1.0
    pooled = json.loads((wa / "results" / "survival_alignment.json").read_text())["pooled"]
    assert pooled["status"] == "ok" and pooled["r"] < 0
    assert secs < 120
    return f"union recall {recall['full union']:.2f}, pooled r={pooled['r']:.3f} (n={pooled['n']}), {secs:.1f}s per run"


@criterion(11, "ablation locality: drop_pathway removes exactly the pathway increment")
def test_criterion_11_ablation_locality(rehearsal):
    wa = rehearsal[0]
    rows = _read_csv(wa / "results" / "ablation_scores.csv")
    base = {(r["descriptor"], r["drug"]): float(r["score"]) for r in rows if r["ablation"] == "none"}
    dropped = {(r["descriptor"], r["drug"]): float(r["score"]) for r in rows if r["ablation"] == "drop_pathway"}
    assert base and base.keys() == dropped.keys()
    seen = set()
    for row in _read_csv(wa / "results" / "ranked.csv"):
        dossier = json.loads((wa / "results" / "dossiers" / row["dossier"]).read_text())
        flags = dossier["flags"]
        inc = 20 if flags["significant_pathway"] else 10 if flags["nominal_pathway"] else 0
        key = (row["descriptor"], row["drug"])
        assert base[key] - dropped[key] == inc, key
        seen.add(inc)
    assert len(base) == len(_read_csv(wa / "results" / "ranked.csv"))
    return f"{len(base)} pairs, increments seen {sorted(seen)}"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
