"""Small bundled datasets: a toy graph for training checks and a synthetic
drug-repurposing world with planted ground truth for pipeline rehearsals."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .graph import Entity, Graph, Triple

logger = logging.getLogger(__name__)


def toy_graph() -> tuple[Graph, list[Triple], list[Triple]]:
    """Two disconnected blocks of 3 diseases, 5 drugs and 2 genes (20
    entities). Every disease in a block is indicated for every drug in that
    block. Returns ``(graph, train_triples, heldout_triples)``; the held-out
    indications are excluded from ``train_triples`` but kept in the graph so
    that negatives never reuse them."""
    ents, triples = [], []
    for b in range(2):
        dis = [f"B{b}_DIS{i}" for i in range(3)]
        drugs = [f"B{b}_DRUG{i}" for i in range(5)]
        genes = [f"B{b}_GENE{i}" for i in range(2)]
        ents += [Entity(d, d, "disease") for d in dis]
        ents += [Entity(d, d, "drug") for d in drugs]
        ents += [Entity(x, x, "gene") for x in genes]
        triples += [Triple(d, "indication", c, 3) for d in dis for c in drugs]
        triples += [Triple(c, "target", genes[j % 2], 1) for j, c in enumerate(drugs)]
    g = Graph(ents, triples)
    held = [Triple(f"B{b}_DIS{i}", "indication", f"B{b}_DRUG{(i + 1) % 5}", 3) for b in range(2) for i in range(3)]
    keys = {t.key for t in held}
    return g, [t for t in triples if t.key not in keys], held


DRUG_NAMES = (
    "abrixitinib", "belomustine", "calvorafenib", "dexotrexate", "eltapimod",
    "fumicarb", "gelanolol", "hexaparin", "idrolimus", "jovatinib",
    "kelvastatin", "lumotecan", "mirodronate", "norvaquone", "oxaplatinum",
    "pemtuzumab", "quinorelin", "rivoxetine", "salubrinib", "tovarestat",
    "ulmacitabine", "vexofenib", "wendoxin", "xaloprost", "zumerafib",
)
DISEASES = (("MONDO:0005105", "melanoma"), ("MONDO:0018177", "glioblastoma"),
            ("MONDO:0006047", "pancreatic cancer"))
SUBTYPES = ("cutaneous melanoma", "acral melanoma", "uveal melanoma", "mucosal melanoma")
CURRENT_YEAR = 2024

N_PROTECTIVE = 10
N_RISK = 10
N_NOISE = 5
SIG_SIZE = 6
N_SAMPLES = 60
GOLD_PER_DISEASE = 4


def _gene_ids():
    prot = [f"PRT{i:02d}" for i in range(1, N_PROTECTIVE + 1)]
    risk = [f"RSK{i:02d}" for i in range(1, N_RISK + 1)]
    noise = [f"NSE{i:02d}" for i in range(1, N_NOISE + 1)]
    return prot, risk, noise


def _write_tsv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8") as fh:
        if header:
            fh.write("\t".join(header) + "\n")
        for r in rows:
            fh.write("\t".join(str(x) for x in r) + "\n")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def make_world(out_dir, seed: int = 0) -> dict:
    """Write the synthetic world into ``out_dir`` and return its ground truth.

    Each drug carries a planted efficacy in [0, 1]. Its perturbation
    signature draws up-regulated genes from the protective program with
    probability tracking efficacy (down-regulated genes from the risk
    program likewise), and patient hazard falls with protective-program
    activity, so effective drugs stratify cohorts into longer-surviving high
    groups. Fixture evidence (literature, trials, approvals, gene resources)
    is planted in tiers that rise with efficacy. Files written:

    ``triples.tsv``, ``names.tsv``, ``perturbations.tsv``,
    ``expression_<disease>.tsv``, ``survival_<disease>.tsv``,
    ``benchmark.tsv``, ``external_candidates.tsv``, ``fixtures/``,
    ``config.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fx = out / "fixtures"
    fx.mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    prot, risk, noise = _gene_ids()
    genes = prot + risk + noise
    drug_ids = [f"DB{i:05d}" for i in range(1, len(DRUG_NAMES) + 1)]
    names = dict(zip(drug_ids, DRUG_NAMES))
    names.update({d: n for d, n in DISEASES})
    names.update({g: g for g in genes})
    names.update({"PW:protective": "protective program", "PW:risk": "risk program",
                  "PW:housekeeping": "housekeeping program"})

    efficacy = dict(zip(drug_ids, rng.permutation(np.linspace(0.0, 1.0, len(drug_ids)))))

    # signatures
    sig: dict[str, dict[str, list[str]]] = {}
    for d in drug_ids:
        n_aligned = int(round(SIG_SIZE * efficacy[d]))
        p_pick = list(rng.choice(prot, SIG_SIZE, replace=False))
        r_pick = list(rng.choice(risk, SIG_SIZE, replace=False))
        up = p_pick[:n_aligned] + r_pick[: SIG_SIZE - n_aligned]
        down = r_pick[SIG_SIZE - n_aligned :] + p_pick[n_aligned:]
        extra = str(rng.choice(noise))
        sig[d] = {"up": sorted(up) + [extra], "down": sorted(down)}

    pert_rows = []
    for d in drug_ids:
        ic50 = "" if rng.random() < 0.2 else f"{float(rng.choice([0.05, 0.5, 2.0, 8.0])):g}"
        for direction in ("up", "down"):
            for gene in sig[d][direction]:
                for rep in range(2):
                    dose, unit = [(10, "uM"), (500, "nM"), (1, "uM")][(rep + len(gene)) % 3]
                    pert_rows.append((names[d], f"{d}_S{rep}", gene, direction, dose, unit, ic50))
    _write_tsv(out / "perturbations.tsv",
               ("drug", "signature_id", "gene", "direction", "dose_value", "dose_unit", "ic50_um"), pert_rows)

    # knowledge graph
    triples: list[tuple] = []
    ranked = sorted(drug_ids, key=lambda d: -efficacy[d])
    gold: dict[str, list[str]] = {}
    external: dict[str, list[str]] = {}
    for k, (dis, _) in enumerate(DISEASES):
        # each disease gets a distinct slice of the more effective drugs
        pool = ranked[:12]
        chosen = [pool[(k * 4 + j) % len(pool)] for j in range(GOLD_PER_DISEASE)]
        gold[dis] = chosen
        for d in chosen[:-1]:
            triples.append((dis, "disease", "indication", d, "drug", int(rng.integers(5, 40))))
        # the last gold drug is only reachable through the external list
        external[dis] = [chosen[-1], ranked[-1 - k]]
        for gene in rng.choice(prot + risk, 6, replace=False):
            triples.append((dis, "disease", "associated_with", str(gene), "gene", int(rng.integers(1, 20))))
    for d in drug_ids:
        for gene in sig[d]["up"][:1] + sig[d]["down"][:1]:
            triples.append((d, "drug", "target", gene, "gene", int(rng.integers(0, 10))))
    for gene in prot:
        triples.append((gene, "gene", "member", "PW:protective", "pathway", 2))
    for gene in risk:
        triples.append((gene, "gene", "member", "PW:risk", "pathway", 2))
    for gene in noise:
        triples.append((gene, "gene", "member", "PW:housekeeping", "pathway", 1))
    for i in range(0, len(drug_ids) - 1, 3):
        triples.append((drug_ids[i], "drug", "synergistic interaction", drug_ids[i + 1], "drug", 1))
    _write_tsv(out / "triples.tsv", None, triples)
    _write_tsv(out / "names.tsv", None, sorted(names.items()))

    # expression and survival per cancer
    for k, (dis, dname) in enumerate(DISEASES):
        slug = dname.replace(" ", "_")
        z = rng.standard_normal(N_SAMPLES)
        samples = [f"{slug[:4].upper()}-{i:03d}" for i in range(N_SAMPLES)]
        expr = []
        for gene in genes:
            if gene in prot:
                v = z + 0.6 * rng.standard_normal(N_SAMPLES)
            elif gene in risk:
                v = -z + 0.6 * rng.standard_normal(N_SAMPLES)
            else:
                v = rng.standard_normal(N_SAMPLES)
            expr.append([gene] + [f"{x + 8.0:.6f}" for x in v])
        _write_tsv(out / f"expression_{slug}.tsv", ["gene"] + samples, expr)
        hazard = np.exp(-1.2 * z) / 800.0
        t_event = rng.exponential(1.0 / hazard)
        t_cens = rng.uniform(300, 3000, N_SAMPLES)
        surv_rows = []
        for s, te, tc in zip(samples, t_event, t_cens):
            surv_rows.append((s, f"{min(te, tc):.1f}", int(te <= tc)))
        _write_tsv(out / f"survival_{slug}.tsv", ("sample", "time_days", "event"), surv_rows)

    # benchmark and external candidate channel
    bench = []
    for dis, dname in DISEASES:
        for d in gold[dis]:
            bench.append((dis, dname, names[d], "indication"))
        bench.append((dis, dname, names[ranked[-1]], "non-indication"))
    _write_tsv(out / "benchmark.tsv", ("disease_id", "disease_name", "drug_name", "category"), bench)
    ext_rows = [(dis, names[d]) for dis, _ in DISEASES for d in external[dis]]
    _write_tsv(out / "external_candidates.tsv", ("disease", "drug"), ext_rows)

    _write_fixtures(fx, rng, drug_ids, names, efficacy, sig, gold, prot, risk, noise)

    cfg = {
        "graph": "graph.json",
        "triples": "triples.tsv",
        "names": "names.tsv",
        "kge_checkpoint": "kge.ckpt.json",
        "kgwe_checkpoint": "kgwe.ckpt.json",
        "fixtures": "fixtures",
        "perturbations": "perturbations.tsv",
        "expression": {dis: f"expression_{n.replace(' ', '_')}.tsv" for dis, n in DISEASES},
        "survival": {dis: f"survival_{n.replace(' ', '_')}.tsv" for dis, n in DISEASES},
        "benchmark": "benchmark.tsv",
        "external_candidates": "external_candidates.tsv",
        "diseases": [n for _, n in DISEASES],
        "subtypes": list(SUBTYPES),
        "out_dir": "results",
        "top_k_per_model": 8,
        "seed": seed,
        "train": {"dim": 32, "epochs": 120, "batch_size": 16, "learning_rate": 0.2,
                  "negatives_per_positive": 4, "gamma": 12.0},
    }
    _dump(out / "config.json", cfg)
    truth = {"efficacy": {d: float(e) for d, e in efficacy.items()}, "gold": gold,
             "external": external, "names": names}
    _dump(out / "ground_truth.json", truth)
    logger.info("wrote synthetic world with %d triples to %s", len(triples), out)
    return truth


def _tier(e: float) -> int:
    return 3 if e >= 0.7 else 2 if e >= 0.4 else 1 if e >= 0.2 else 0


def _write_fixtures(fx: Path, rng, drug_ids, names, efficacy, sig, gold, prot, risk, noise) -> None:
    snippets, gene_snips, gene_recs, labels, approvals, trials = {}, {}, {}, {}, {}, {}
    sources = ("CTD", "PubTator", "DGIdb", "LINCS")
    for d in drug_ids:
        tier = _tier(efficacy[d])
        name = names[d]
        labels[d] = {"indications_and_usage": f"{name} is indicated for study use only.",
                     "mechanism_of_action": f"{name} modulates {sig[d]['up'][0]} signalling."}
        if tier >= 2:
            approvals[d] = ["rheumatoid arthritis"]
        n_gene = {3: 3, 2: 1, 1: 1, 0: 0}[tier]
        for gene in sig[d]["up"][:n_gene]:
            gene_recs[f"{d}|{gene}"] = [{"source": sources[len(gene) % 4], "relation_type": "increases expression",
                                         "support_count": int(rng.integers(1, 6)), "direction": "up"}]
            if tier == 3:
                gene_snips[f"{d}|{gene}"] = [{"source": "PMID:9000001", "text": f"{name} induced {gene}."}]
    for k, (dis, dname) in enumerate(DISEASES):
        for d in drug_ids:
            tier = _tier(efficacy[d])
            name = names[d]
            key = f"{dis}|{d}"
            if tier >= 1:
                snippets[key] = [{"source": f"PMID:{31000000 + 97 * k + drug_ids.index(d)}",
                                  "text": f"{name} reduced {dname} cell growth in vitro."}]
            if tier == 3:
                trials[key] = [{"nct_id": f"NCT0{4000000 + 31 * k + drug_ids.index(d)}", "phase": 2,
                                "status": "completed", "has_results": True, "results_positive": True,
                                "start_year": 2018, "current_year": CURRENT_YEAR,
                                "completion_year": 2021, "completion_month": 6, "current_month": 6}]
            elif tier == 2:
                trials[key] = [{"nct_id": f"NCT0{5000000 + 31 * k + drug_ids.index(d)}", "phase": 1,
                                "status": "recruiting", "has_results": False, "results_positive": None,
                                "start_year": 2023, "current_year": CURRENT_YEAR}]
        for d in gold[dis][:1]:
            approvals.setdefault(d, []).append(dname)
    # subtype-specific overrides make the melanoma subtype profiles differ
    for j, sub in enumerate(SUBTYPES):
        for i, d in enumerate(drug_ids):
            key = f"{sub}|{d}"
            if (i + j) % 4 == 0:
                snippets[key] = []
                trials[key] = []
            elif (i + j) % 4 == 1:
                snippets[key] = [{"source": f"PMID:{32000000 + 50 * j + i}",
                                  "text": f"{names[d]} was active in {sub} models."}]
                trials[key] = [{"nct_id": f"NCT0{6000000 + 50 * j + i}", "phase": 3, "status": "active",
                                "has_results": False, "results_positive": None, "start_year": 2022,
                                "current_year": CURRENT_YEAR}]
    _dump(fx / "snippets.json", snippets)
    _dump(fx / "gene_snippets.json", gene_snips)
    _dump(fx / "gene_records.json", gene_recs)
    _dump(fx / "labels.json", labels)
    _dump(fx / "approvals.json", approvals)
    _dump(fx / "trials.json", trials)
    with (fx / "terms.gmt").open("w", encoding="utf-8") as fh:
        fh.write("PROTECTIVE_PROGRAM\tgenes lowering tumour hazard\t" + "\t".join(prot) + "\n")
        fh.write("RISK_PROGRAM\tgenes raising tumour hazard\t" + "\t".join(risk) + "\n")
        fh.write("HOUSEKEEPING\tcontrol genes\t" + "\t".join(noise) + "\n")
