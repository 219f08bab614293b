"""Command-line entry point (``kgrepurpose <subcommand>``).

Exit codes: 0 success, 1 configuration error, 2 data error, 3 the run
finished but some pairs failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .exceptions import ConfigError, KgRepurposeError

logger = logging.getLogger("kgrepurpose")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y"):
        return True
    if t in ("0", "false", "no", "n"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _emit(obj, out=None) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _load_mapping(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix in (".yml", ".yaml"):
            import yaml
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return data


def cmd_ingest(args) -> int:
    from .graph import load_graph, save_graph_cache

    g = load_graph(args.triples, args.names)
    save_graph_cache(g, args.out)
    logger.info("ingested %d entities, %d triples", len(g.entities), len(g.triples))
    return EXIT_OK


def cmd_train(args) -> int:
    from .graph import load_graph_cache
    from .hake import TrainConfig, save_checkpoint, train

    data = _load_mapping(args.config) if args.config else {}
    if "train" in data:
        # a full run config: take its train block plus the shared settings
        sub = dict(data["train"])
        for key in ("seed", "lam", "gamma"):
            if key in data:
                sub.setdefault(key, data[key])
        data = sub
    if args.seed is not None:
        data["seed"] = args.seed
    data["weighted"] = args.weighted
    cfg = TrainConfig.from_dict(data)
    g = load_graph_cache(args.graph)
    res = train(g, cfg)
    meta = {"config": asdict(cfg), "final_loss": res.epoch_loss[-1] if res.epoch_loss else None}
    save_checkpoint(args.out, res.params, res.weights if cfg.weighted else None, meta)
    logger.info("trained %s model, final loss %.6f", "weighted" if cfg.weighted else "unweighted",
                res.epoch_loss[-1])
    return EXIT_OK


def cmd_rank(args) -> int:
    from .graph import load_graph_cache
    from .hake import load_checkpoint, rank_drugs
    from .pipeline import resolve_disease

    params, _, _ = load_checkpoint(args.ckpt)
    g = load_graph_cache(args.graph)
    dis = resolve_disease(g, args.disease)
    ranked = rank_drugs(params, g, dis, args.relation, args.top)
    _emit({"disease": dis, "relation": args.relation,
           "ranking": [{"drug": d, "name": g.entities[d].name, "score": s} for d, s in ranked]}, args.out)
    return EXIT_OK


def cmd_paths(args) -> int:
    from .graph import load_graph_cache
    from .hake import load_checkpoint
    from .paths import PathScoringConfig, build_subgraph
    from .pipeline import resolve_disease, resolve_drug

    params, _, _ = load_checkpoint(args.ckpt)
    g = load_graph_cache(args.graph)
    cfg = PathScoringConfig(mu=args.mu, sigma=args.sigma, max_paths=args.top)
    paths = build_subgraph(g, params, resolve_disease(g, args.disease), resolve_drug(g, args.drug), cfg)
    _emit([{"nodes": list(p.nodes), "relations": list(p.relations), "score": s} for p, s in paths], args.out)
    return EXIT_OK


def cmd_signature(args) -> int:
    from .signature import SignatureConfig, build_signature, read_perturbations, write_signature

    recs = [r for r in read_perturbations(args.records) if r.drug == args.drug]
    if not recs:
        raise KgRepurposeError(f"no perturbation records for drug {args.drug!r}")
    sig = build_signature(recs, SignatureConfig(k=args.k, alpha=args.alpha, top_n=args.top_n))
    if args.out:
        write_signature(sig, args.out)
    else:
        _emit(sig.to_dict())
    return EXIT_OK


def cmd_survive(args) -> int:
    from .signature import read_signature
    from .survival import ExpressionMatrix, hazard_for_pair, km_curve, read_survival

    m = ExpressionMatrix.read_tsv(args.expr)
    surv = read_survival(args.surv)
    sig = read_signature(args.signature)
    ph = hazard_for_pair(m, sig, surv, args.tau)
    c = ph.cohort
    out = {
        "es": dict(zip(m.samples, ph.es.tolist())),
        "nes": dict(zip(m.samples, ph.nes.tolist())),
        "groups": {"high": list(c.high), "low": list(c.low), "excluded": list(c.excluded)},
        "hr": ph.fit.hr if ph.eligible else None,
        "p": ph.fit.p if ph.eligible else None,
        "cox": ph.fit.to_dict() if ph.eligible else None,
        "ineligible_reason": ph.ineligible_reason,
        "km": {"high": km_curve(c.high, surv) if c.high else [],
               "low": km_curve(c.low, surv) if c.low else []},
        "warnings": ph.warnings,
    }
    _emit(out, args.out)
    return EXIT_OK


def cmd_score(args) -> int:
    from .evidence import StageTaxonomy
    from .graph import load_graph_cache
    from .hake import load_checkpoint
    from .pipeline import score_single
    from .providers import Providers
    from .signature import read_signature

    if "," not in args.pair:
        raise ConfigError("--pair must be '<disease>,<drug>'")
    disease, drug = (x.strip() for x in args.pair.rsplit(",", 1))
    g = load_graph_cache(args.graph)
    params = load_checkpoint(args.ckpt)[0] if args.ckpt else None
    providers = Providers.from_fixtures(args.fixtures) if args.fixtures else Providers.empty()
    sig = read_signature(args.signature) if args.signature else None
    verdict = score_single(g, params, providers, disease, drug, sig, StageTaxonomy.load(args.taxonomy))
    _emit(verdict, args.out)
    return EXIT_OK


def _run_config(args):
    from .pipeline import RunConfig

    cfg = RunConfig.from_file(args.config)
    if getattr(args, "ablation", None):
        cfg.ablation = args.ablation
        cfg.__post_init__()
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    return cfg


def _workers(args) -> int:
    return 1 if args.serial else max(1, args.workers)


def cmd_run(args) -> int:
    from .pipeline import run_pipeline

    report = run_pipeline(_run_config(args), workers=_workers(args))
    logger.info("scored %d pairs (%d failures)", len(report.results), len(report.failures))
    return EXIT_PARTIAL if report.failures else EXIT_OK


def cmd_eval_recall(args) -> int:
    from .pipeline import evaluate_recall

    res = evaluate_recall(_run_config(args))
    for row in res["recall"]:
        print(f"{row['configuration']}\t{row['recall']:.4f}\t{row['recovered']}/{row['gold']}")
    return EXIT_OK


def cmd_eval_survival(args) -> int:
    from .pipeline import evaluate_survival_alignment

    res = evaluate_survival_alignment(_run_config(args), workers=_workers(args))
    pooled = res["pooled"]
    print(f"pooled\tn={pooled['n']}\tr={pooled['r']}\tp={pooled['p']}\t{pooled['status']}")
    return EXIT_PARTIAL if res["failures"] else EXIT_OK


def cmd_ablate(args) -> int:
    from .pipeline import run_ablation

    res = run_ablation(_run_config(args), workers=_workers(args))
    for ab, n, mean, r, _ in res["summary"]:
        print(f"{ab}\tn={n}\tmean={mean}\tr_hr={r}")
    return EXIT_PARTIAL if res["failures"] else EXIT_OK


def cmd_subtype_pca(args) -> int:
    from .pipeline import subtype_profile

    res = subtype_profile(_run_config(args), workers=_workers(args))
    print(f"{len(res['drugs'])} shared drugs; explained variance ratio {res['explained_variance_ratio']}")
    return EXIT_PARTIAL if res["failures"] else EXIT_OK


def cmd_make_world(args) -> int:
    from .datasets import make_world

    make_world(args.out, seed=args.seed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kgrepurpose", description="Knowledge-graph drug repurposing pipeline.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="triples TSV -> graph cache")
    s.add_argument("--triples", required=True)
    s.add_argument("--names")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="train an embedding checkpoint")
    s.add_argument("--graph", required=True)
    s.add_argument("--weighted", type=_bool, default=False)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("rank", help="top-K drugs for a disease")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--disease", required=True)
    s.add_argument("--relation", default="indication")
    s.add_argument("--top", type=int, default=100)
    s.add_argument("--out")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("paths", help="scored minimal-hop paths between disease and drug")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--disease", required=True)
    s.add_argument("--drug", required=True)
    s.add_argument("--mu", type=float, default=350.0)
    s.add_argument("--sigma", type=float, default=100.0)
    s.add_argument("--top", type=int, default=10)
    s.add_argument("--out")
    s.set_defaults(func=cmd_paths)

    s = sub.add_parser("signature", help="build a drug signature from perturbation records")
    s.add_argument("--records", required=True)
    s.add_argument("--drug", required=True)
    s.add_argument("--k", type=float, default=0.5)
    s.add_argument("--alpha", type=float, default=0.2)
    s.add_argument("--top-n", type=int, default=200)
    s.add_argument("--out")
    s.set_defaults(func=cmd_signature)

    s = sub.add_parser("survive", help="enrichment stratification and Cox hazard ratio")
    s.add_argument("--expr", required=True)
    s.add_argument("--surv", required=True)
    s.add_argument("--signature", required=True)
    s.add_argument("--tau", type=float, default=0.25)
    s.add_argument("--out")
    s.set_defaults(func=cmd_survive)

    s = sub.add_parser("score", help="evidence verdict for one disease,drug pair")
    s.add_argument("--pair", required=True)
    s.add_argument("--fixtures")
    s.add_argument("--graph", required=True)
    s.add_argument("--ckpt")
    s.add_argument("--signature")
    s.add_argument("--taxonomy")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    for name, func, hlp in (
        ("run", cmd_run, "end-to-end pipeline"),
        ("eval-recall", cmd_eval_recall, "benchmark recall and source overlap"),
        ("eval-survival", cmd_eval_survival, "Spearman between scores and hazard ratios"),
        ("ablate", cmd_ablate, "leave-one-evidence-out ablation"),
        ("subtype-pca", cmd_subtype_pca, "subtype confidence profiles and PCA"),
    ):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", required=True)
        s.add_argument("--out-dir")
        s.add_argument("--serial", action="store_true", help="process pairs in one thread")
        s.add_argument("--workers", type=int, default=1)
        if name == "run":
            s.add_argument("--ablation", choices=("none", "drop_drug", "drop_gene", "drop_pathway", "rule_only"))
        s.set_defaults(func=func)

    s = sub.add_parser("make-world", help="write the synthetic rehearsal world")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_make_world)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KgRepurposeError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
