"""End-to-end orchestration: candidate generation, per-pair evidence and
scoring, report emission, and the evaluation protocols (recall, survival
alignment, ablation, subtype PCA)."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analytics
from .evidence import (
    ABLATIONS,
    EvidenceFlags,
    EvidenceProfile,
    StageTaxonomy,
    ablate_flags,
    assemble_profile,
    categorize_stage,
    approved_for_disease,
    compute_flags,
    confidence_level,
    rule_score,
    verdict_json,
)
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateError,
    KgRepurposeError,
    NotFoundError,
    ParseError,
    ValidationError,
)
from .graph import Graph, load_graph_cache, map_disease
from .hake import HakeParams, load_checkpoint, rank_drugs
from .paths import PathScoringConfig
from .providers import Providers
from .signature import DrugSignature, SignatureConfig, build_signature, read_perturbations
from .survival import ExpressionMatrix, hazard_for_pair, read_survival

logger = logging.getLogger(__name__)

ENV_FIXTURES = "KGREPURPOSE_FIXTURES"
ENV_SEED = "KGREPURPOSE_SEED"
SOURCES = ("external", "KGE", "KGwE")

_PATH_FIELDS = ("graph", "triples", "names", "kge_checkpoint", "kgwe_checkpoint", "fixtures",
                "perturbations", "benchmark", "external_candidates", "taxonomy")


@dataclass
class RunConfig:
    graph: str | None = None
    triples: str | None = None
    names: str | None = None
    kge_checkpoint: str | None = None
    kgwe_checkpoint: str | None = None
    fixtures: str | None = None
    perturbations: str | None = None
    expression: dict = field(default_factory=dict)
    survival: dict = field(default_factory=dict)
    benchmark: str | None = None
    external_candidates: str | None = None
    taxonomy: str | None = None
    diseases: list = field(default_factory=list)
    subtypes: list = field(default_factory=list)
    out_dir: str = "results"
    top_k_per_model: int = 100
    max_paths: int = 10
    tau: float = 0.25
    alpha: float = 0.2
    k: float = 0.5
    mu: float = 350.0
    sigma: float = 100.0
    lam: float = 0.5
    gamma: float = 12.0
    seed: int = 0
    ablation: str = "none"
    fda_filter: bool = False
    stage_allowlist: list | None = None
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.top_k_per_model < 1 or self.max_paths < 1:
            raise ConfigError("top_k_per_model and max_paths must be >= 1")

    @classmethod
    def from_dict(cls, data: dict, base_dir=None, env=None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        env = os.environ if env is None else env
        if env.get(ENV_FIXTURES):
            data["fixtures"] = env[ENV_FIXTURES]
        if env.get(ENV_SEED):
            try:
                data["seed"] = int(env[ENV_SEED])
            except ValueError:
                raise ConfigError(f"{ENV_SEED} must be an integer") from None
        if base_dir is not None:
            base = Path(base_dir)

            def resolve(p):
                return None if p is None else str(base / p) if not Path(p).is_absolute() else p

            for name in _PATH_FIELDS:
                data[name] = resolve(data.get(name))
            data["out_dir"] = resolve(data.get("out_dir", "results"))
            for name in ("expression", "survival"):
                data[name] = {k: resolve(v) for k, v in data.get(name, {}).items()}
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path, env=None) -> "RunConfig":
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
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data, base_dir=path.parent, env=env)

    def require(self, *names: str) -> None:
        """Config error unless each named file field is set and exists."""
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"config field {name!r} is required")
            if not Path(value).exists():
                raise ConfigError(f"{name}: file not found: {value}")

    def path_config(self) -> PathScoringConfig:
        return PathScoringConfig(mu=self.mu, sigma=self.sigma, max_paths=self.max_paths)

    def signature_config(self) -> SignatureConfig:
        return SignatureConfig(k=self.k, alpha=self.alpha)


@dataclass
class PairResult:
    disease: str
    descriptor: str
    drug: str
    drug_name: str
    sources: tuple[str, ...]
    score: float
    level: str
    stage: str
    flags: EvidenceFlags
    rationale: list[str]
    fda_any: bool
    hr: float | None = None
    hr_p: float | None = None
    hr_note: str | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.score <= 100:
            raise ValidationError(f"score {self.score} outside [0, 100]")
        if not self.sources:
            raise ValidationError("a pair result needs at least one candidate source")

    @property
    def dossier_name(self) -> str:
        return _slug(f"{self.descriptor}__{self.drug}") + ".json"


@dataclass
class PairEvidence:
    """Ablation-independent part of a pair's evaluation."""

    descriptor: str
    disease: str
    drug: str
    sources: tuple[str, ...]
    profile: EvidenceProfile
    flags: EvidenceFlags
    disease_names: list[str]
    hr: float | None = None
    hr_p: float | None = None
    hr_note: str | None = None


@dataclass
class RunReport:
    results: list[PairResult]
    failures: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def resolve_drug(g: Graph, text: str) -> str:
    text = text.strip()
    if text in g.entities and g.entities[text].kind == "drug":
        return text
    for eid in g.name_index.get(text.casefold(), []):
        if g.entities[eid].kind == "drug":
            return eid
    raise NotFoundError(f"unknown drug {text!r}")


def resolve_disease(g: Graph, text: str) -> str:
    text = text.strip()
    if text in g.entities and g.entities[text].kind == "disease":
        return text
    return map_disease(g, text)


def read_candidate_file(path, g: Graph) -> tuple[dict[str, list[str]], list[str]]:
    """External candidate TSV (header ``disease<TAB>drug``; ids or names).
    Returns disease id -> drug ids, plus warnings for unresolvable rows."""
    out: dict[str, list[str]] = {}
    warnings = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if not {"disease", "drug"} <= set(reader.fieldnames or []):
            raise ParseError("external candidate TSV needs disease and drug columns", 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                dis = resolve_disease(g, row["disease"])
                drug = resolve_drug(g, row["drug"])
            except NotFoundError as exc:
                warnings.append(f"external candidates line {lineno}: {exc}")
                continue
            lst = out.setdefault(dis, [])
            if drug not in lst:
                lst.append(drug)
    return out, warnings


def generate_candidates(g: Graph, disease: str, models: dict[str, HakeParams],
                        external=(), k: int = 100, relation: str = "indication") -> dict[str, tuple[str, ...]]:
    """Union of each model's top-``k`` drugs and the external list; values
    are the sorted source tags of each drug."""
    tags: dict[str, set[str]] = {}
    for name, params in models.items():
        if params is None:
            raise ConfigError(f"checkpoint for {name} is missing")
        for drug, _ in rank_drugs(params, g, disease, relation, k):
            tags.setdefault(drug, set()).add(name)
    for drug in external:
        tags.setdefault(drug, set()).add("external")
    return {d: tuple(sorted(t)) for d, t in sorted(tags.items())}


class PipelineContext:
    """Loaded, immutable inputs shared by every pair."""

    def __init__(self, cfg: RunConfig, need_models: bool = True):
        self.cfg = cfg
        cfg.require("graph")
        self.graph = load_graph_cache(cfg.graph)
        self.models: dict[str, HakeParams] = {}
        if need_models:
            cfg.require("kge_checkpoint", "kgwe_checkpoint")
            self.models["KGE"] = load_checkpoint(cfg.kge_checkpoint)[0]
            self.models["KGwE"] = load_checkpoint(cfg.kgwe_checkpoint)[0]
        if cfg.fixtures is not None:
            cfg.require("fixtures")
            self.providers = Providers.from_fixtures(cfg.fixtures)
        else:
            self.providers = Providers.empty()
        self.taxonomy = StageTaxonomy.load(cfg.taxonomy)
        self.signatures: dict[str, DrugSignature] = {}
        if cfg.perturbations is not None:
            cfg.require("perturbations")
            by_drug: dict[str, list] = {}
            for r in read_perturbations(cfg.perturbations):
                by_drug.setdefault(r.drug, []).append(r)
            scfg = cfg.signature_config()
            self.signatures = {d: build_signature(rs, scfg) for d, rs in sorted(by_drug.items())}
        self.external: dict[str, list[str]] = {}
        self.warnings: list[str] = []
        if cfg.external_candidates is not None:
            cfg.require("external_candidates")
            self.external, w = read_candidate_file(cfg.external_candidates, self.graph)
            self.warnings.extend(w)
        self._cohorts: dict[str, tuple] = {}
        for dis, path in sorted(cfg.expression.items()):
            surv_path = cfg.survival.get(dis)
            if surv_path is None:
                raise ConfigError(f"expression for {dis!r} has no matching survival file")
            for p in (path, surv_path):
                if not Path(p).exists():
                    raise ConfigError(f"cohort file not found: {p}")
            self._cohorts[resolve_disease(self.graph, dis)] = (path, surv_path)
        self._loaded: dict[str, tuple] = {}

    @property
    def primary_params(self) -> HakeParams | None:
        return self.models.get("KGwE") or self.models.get("KGE")

    def signature_for(self, drug: str) -> DrugSignature | None:
        name = self.graph.entities[drug].name
        return self.signatures.get(name) or self.signatures.get(drug)

    def cohort(self, disease: str):
        if disease not in self._cohorts:
            return None
        if disease not in self._loaded:
            expr, surv = self._cohorts[disease]
            self._loaded[disease] = (ExpressionMatrix.read_tsv(expr), read_survival(surv))
        return self._loaded[disease]

    def preload(self) -> None:
        # load cohorts before any worker threads start
        for dis in self._cohorts:
            self.cohort(dis)

    def candidates(self, disease: str) -> dict[str, tuple[str, ...]]:
        return generate_candidates(self.graph, disease, self.models, self.external.get(disease, ()),
                                   self.cfg.top_k_per_model)


def evaluate_pair(ctx: PipelineContext, descriptor: str, disease: str, drug: str,
                  sources: tuple[str, ...]) -> PairEvidence:
    g = ctx.graph
    sig = ctx.signature_for(drug)
    universe = None
    if ctx.signatures:
        universe = len(set().union(*(set(s.up_genes) | set(s.down_genes) for s in ctx.signatures.values()))
                       | set().union(*ctx.providers.terms.library().values() or [set()]))
    profile = assemble_profile(disease, drug, g, ctx.primary_params, ctx.providers, sig,
                               descriptor=descriptor if descriptor != disease else "",
                               path_cfg=ctx.cfg.path_config(), universe_size=universe)
    names = [g.entities[disease].name]
    flags = compute_flags(profile, disease_names=names)
    ev = PairEvidence(descriptor, disease, drug, sources, profile, flags, names)
    cohort = ctx.cohort(disease)
    if cohort is None:
        ev.hr_note = "no expression cohort for this disease"
    elif sig is None:
        ev.hr_note = "no perturbation signature for this drug"
    else:
        try:
            ph = hazard_for_pair(cohort[0], sig, cohort[1], ctx.cfg.tau)
        except KgRepurposeError as exc:
            ev.hr_note = f"hazard estimation failed: {exc}"
        else:
            if ph.eligible:
                ev.hr, ev.hr_p = ph.fit.hr, ph.fit.p
            else:
                ev.hr_note = f"ineligible: {ph.ineligible_reason}"
    return ev


def score_evidence(ctx: PipelineContext | None, ev: PairEvidence, ablation: str = "none",
                   taxonomy: StageTaxonomy | None = None, providers: Providers | None = None,
                   drug_name: str | None = None) -> PairResult:
    """Rule score (or the configured reasoner when no ablation applies),
    confidence level and clinical stage for one pair."""
    taxonomy = taxonomy or ctx.taxonomy
    providers = providers or ctx.providers
    flags = ablate_flags(ev.flags, ablation)
    verdict = rule_score(flags)
    score = float(verdict.score)
    if ablation == "none" and providers.reasoner is not None:
        ext = providers.reasoner.lookup([k for k in (ev.descriptor, ev.disease) if k], ev.drug)
        if ext is not None:
            if not 0 <= ext <= 100:
                raise ValidationError(f"reasoner score {ext} outside [0, 100]")
            score = ext
    prof = ev.profile
    stage = categorize_stage(prof.trials, approved_for_disease(prof, ev.disease_names),
                             bool(prof.approved_indications), taxonomy,
                             has_literature=bool(prof.literature_snippets))
    if drug_name is None:
        drug_name = ctx.graph.entities[ev.drug].name if ctx else ev.drug
    return PairResult(
        disease=ev.disease, descriptor=ev.descriptor, drug=ev.drug, drug_name=drug_name,
        sources=ev.sources, score=score, level=confidence_level(score), stage=stage, flags=flags,
        rationale=verdict.rationale, fda_any=bool(prof.approved_indications),
        hr=ev.hr, hr_p=ev.hr_p, hr_note=ev.hr_note, warnings=list(prof.warnings),
    )


def collect_evidence(ctx: PipelineContext, descriptors: list[str], workers: int = 1):
    """Evaluate every candidate pair of every descriptor.

    Returns ``(evidence list, failures, warnings)`` in a fixed order
    (descriptor order, then drug id) regardless of ``workers``.
    """
    jobs, warnings = [], list(ctx.warnings)
    for text in descriptors:
        try:
            dis = resolve_disease(ctx.graph, text)
        except KgRepurposeError as exc:
            warnings.append(f"{text}: cannot map disease ({exc})")
            continue
        cands = ctx.candidates(dis)
        if not cands:
            warnings.append(f"{text}: empty candidate set")
        jobs += [(text, dis, drug, tags) for drug, tags in cands.items()]
    ctx.preload()

    def job(args):
        text, dis, drug, tags = args
        try:
            return evaluate_pair(ctx, text, dis, drug, tags), None
        except KgRepurposeError as exc:
            logger.warning("%s / %s failed: %s", text, drug, exc)
            return None, {"descriptor": text, "disease": dis, "drug": drug, "error": str(exc)}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(job, jobs))
    else:
        done = [job(j) for j in jobs]
    evidence = [e for e, f in done if e is not None]
    failures = [f for e, f in done if f is not None]
    return evidence, failures, warnings


def _sort_results(results: list[PairResult]) -> list[PairResult]:
    return sorted(results, key=lambda r: (-r.score, r.descriptor, r.drug))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 10))
    return str(x)


def ranked_csv(results: list[PairResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "descriptor", "disease", "drug", "drug_name", "sources", "score", "level",
                "stage", "fda_any", "hr", "hr_p", "dossier"])
    for i, r in enumerate(results, start=1):
        w.writerow([i, r.descriptor, r.disease, r.drug, r.drug_name, ";".join(r.sources), _fmt(r.score),
                    r.level, r.stage, int(r.fda_any), _fmt(r.hr), _fmt(r.hr_p), r.dossier_name])
    return buf.getvalue()


def dossier(ev: PairEvidence, res: PairResult) -> dict:
    out = verdict_json(ev.profile, res.score, res.rationale, ev.disease_names)
    out["disease_id"] = ev.disease
    out["drug_id"] = ev.drug
    out["candidate_sources"] = list(res.sources)
    out["stage"] = res.stage
    out["flags"] = res.flags.to_dict()
    out["hazard"] = {"hr": res.hr, "p": res.hr_p, "note": res.hr_note}
    out["evidence"] = ev.profile.to_dict()
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def run_pipeline(cfg: RunConfig, workers: int = 1, ctx: PipelineContext | None = None) -> RunReport:
    """Score every candidate pair for the configured diseases and write
    ``ranked.csv`` plus one JSON dossier per pair under ``cfg.out_dir``."""
    ctx = ctx or PipelineContext(cfg)
    if not cfg.diseases:
        raise ConfigError("config lists no diseases")
    evidence, failures, warnings = collect_evidence(ctx, cfg.diseases, workers)
    results, kept_ev = [], {}
    for ev in evidence:
        try:
            res = score_evidence(ctx, ev, cfg.ablation)
        except KgRepurposeError as exc:
            failures.append({"descriptor": ev.descriptor, "disease": ev.disease, "drug": ev.drug, "error": str(exc)})
            continue
        if cfg.fda_filter and not res.fda_any:
            continue
        if cfg.stage_allowlist is not None and res.stage not in cfg.stage_allowlist:
            continue
        results.append(res)
        kept_ev[(ev.descriptor, ev.drug)] = ev
    results = _sort_results(results)
    if not results:
        warnings.append("no pairs survived candidate generation and filtering")
    out = Path(cfg.out_dir)
    ddir = out / "dossiers"
    ddir.mkdir(parents=True, exist_ok=True)
    (out / "ranked.csv").write_text(ranked_csv(results), encoding="utf-8")
    for r in results:
        _write_json(ddir / r.dossier_name, dossier(kept_ev[(r.descriptor, r.drug)], r))
    _write_json(out / "run_summary.json", {"n_pairs": len(results), "failures": failures,
                                           "warnings": warnings, "ablation": cfg.ablation})
    for w in warnings:
        logger.warning(w)
    return RunReport(results, failures, warnings)


def read_benchmark(path) -> list[dict]:
    """PharmacotherapyDB-style TSV; returns only ``indication`` rows."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"benchmark file not found: {path}")
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        need = {"disease_id", "disease_name", "drug_name", "category"}
        if not need <= set(reader.fieldnames or []):
            raise ParseError(f"benchmark TSV needs columns {sorted(need)}", 1)
        for row in reader:
            if row["category"].strip().casefold() == "indication":
                rows.append({k: row[k].strip() for k in need})
    return rows


OVERLAP_REGIONS = (
    ("external",), ("KGE",), ("KGwE",), ("external", "KGE"), ("external", "KGwE"),
    ("KGE", "KGwE"), ("external", "KGE", "KGwE"),
)
RECALL_CONFIGS = (
    ("external-only", ("external",)),
    ("KGE", ("KGE",)),
    ("KGwE", ("KGwE",)),
    ("KGE+KGwE", ("KGE", "KGwE")),
    ("full union", ("external", "KGE", "KGwE")),
)


def recall_tables(gold: dict[str, set[str]], retrieved: dict[str, dict[str, set[str]]]):
    """Pooled recall of ``(disease, drug name)`` pairs per configuration and
    the 7-region source partition of recovered gold pairs.

    ``gold`` maps disease -> canonical drug names; ``retrieved`` maps
    source -> disease -> canonical drug names.
    """
    gold_pairs = {(d, n) for d, names in gold.items() for n in names}
    if not gold_pairs:
        raise ValidationError("benchmark has no gold indications")
    by_source = {s: {(d, n) for d, names in retrieved.get(s, {}).items() for n in names} for s in SOURCES}
    table = []
    for label, srcs in RECALL_CONFIGS:
        got = set().union(*(by_source[s] for s in srcs))
        table.append({"configuration": label, "recall": analytics.recall(
            [f"{d}|{n}" for d, n in got], [f"{d}|{n}" for d, n in gold_pairs]),
            "recovered": len(got & gold_pairs), "gold": len(gold_pairs)})
    regions = {"+".join(r): 0 for r in OVERLAP_REGIONS}
    for pair in sorted(gold_pairs):
        member = tuple(s for s in SOURCES if pair in by_source[s])
        if member:
            regions["+".join(member)] += 1
    return table, regions


def evaluate_recall(cfg: RunConfig, ctx: PipelineContext | None = None) -> dict:
    ctx = ctx or PipelineContext(cfg)
    cfg.require("benchmark")
    g = ctx.graph
    gold: dict[str, set[str]] = {}
    warnings = list(ctx.warnings)
    for row in read_benchmark(cfg.benchmark):
        try:
            dis = row["disease_id"] if row["disease_id"] in g.entities else resolve_disease(g, row["disease_name"])
        except KgRepurposeError as exc:
            warnings.append(f"benchmark disease {row['disease_name']!r} skipped: {exc}")
            continue
        gold.setdefault(dis, set()).add(analytics.canonical_name(row["drug_name"]))
    retrieved: dict[str, dict[str, set[str]]] = {s: {} for s in SOURCES}
    for dis in sorted(gold):
        for drug, tags in ctx.candidates(dis).items():
            for t in tags:
                retrieved[t].setdefault(dis, set()).add(analytics.canonical_name(g.entities[drug].name))
    table, regions = recall_tables(gold, retrieved)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "recall.csv", ["configuration", "recall", "recovered", "gold"],
               [[r["configuration"], r["recall"], r["recovered"], r["gold"]] for r in table])
    _write_csv(out / "overlap.csv", ["region", "count"], sorted(regions.items()))
    for w in warnings:
        logger.warning(w)
    return {"recall": table, "overlap": regions, "warnings": warnings}


def survival_alignment(rows: list[dict]) -> dict:
    """Spearman(score, HR) over eligible rows, pooled and per cancer.

    Each row needs ``disease``, ``score`` and ``hr`` (None when ineligible).
    """
    elig = [r for r in rows if r.get("hr") is not None]

    def corr(subset):
        if len(subset) < 3:
            return {"n": len(subset), "r": None, "p": None, "status": "insufficient"}
        try:
            s = analytics.spearman([r["score"] for r in subset], [r["hr"] for r in subset])
        except DegenerateError as exc:
            return {"n": len(subset), "r": None, "p": None, "status": f"degenerate: {exc}"}
        return {"n": s["n"], "r": s["r"], "p": s["p"], "status": "ok"}

    per = {d: corr([r for r in elig if r["disease"] == d]) for d in sorted({r["disease"] for r in rows})}
    return {"pooled": corr(elig), "per_cancer": per, "n_pairs": len(rows), "n_eligible": len(elig)}


def evaluate_survival_alignment(cfg: RunConfig, workers: int = 1, ctx: PipelineContext | None = None) -> dict:
    ctx = ctx or PipelineContext(cfg)
    evidence, failures, warnings = collect_evidence(ctx, cfg.diseases, workers)
    rows = []
    for ev in evidence:
        res = score_evidence(ctx, ev, cfg.ablation)
        rows.append({"disease": ev.disease, "drug": ev.drug, "score": res.score, "hr": res.hr,
                     "p": res.hr_p, "note": res.hr_note})
    summary = survival_alignment(rows)
    summary["failures"] = failures
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "survival_scatter.csv", ["cancer", "drug", "score", "hr", "hr_p", "eligible"],
               [[r["disease"], r["drug"], r["score"], r["hr"], r["p"], int(r["hr"] is not None)] for r in rows])
    _write_json(out / "survival_alignment.json", summary)
    return summary


def run_ablation(cfg: RunConfig, workers: int = 1, ctx: PipelineContext | None = None) -> dict:
    """Score every pair under each ablation; report per-pair deltas from the
    full scorer and a per-ablation summary (mean score, Spearman vs HR)."""
    ctx = ctx or PipelineContext(cfg)
    evidence, failures, _ = collect_evidence(ctx, cfg.diseases, workers)
    per_pair, summary = [], []
    base = {(ev.descriptor, ev.drug): rule_score(ev.flags).score for ev in evidence}
    for ab in ABLATIONS:
        scores, rows = [], []
        for ev in evidence:
            res = score_evidence(ctx, ev, ab if ab != "none" else "rule_only")
            delta = res.score - base[(ev.descriptor, ev.drug)]
            per_pair.append([ev.descriptor, ev.disease, ev.drug, ab, res.score, delta])
            scores.append(res.score)
            rows.append({"disease": ev.disease, "score": res.score, "hr": res.hr})
        align = survival_alignment(rows)["pooled"]
        summary.append([ab, len(scores), float(np.mean(scores)) if scores else None, align["r"], align["p"]])
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "ablation_scores.csv", ["descriptor", "disease", "drug", "ablation", "score", "delta"], per_pair)
    _write_csv(out / "ablation_summary.csv", ["ablation", "n", "mean_score", "spearman_r_hr", "spearman_p"], summary)
    return {"pairs": per_pair, "summary": summary, "failures": failures}


def subtype_profile(cfg: RunConfig, workers: int = 1, ctx: PipelineContext | None = None) -> dict:
    """Drugs x subtypes confidence matrix over drugs shared by every subtype,
    with a two-component PCA projection."""
    ctx = ctx or PipelineContext(cfg)
    subs = list(cfg.subtypes)
    if len(subs) < 2:
        raise ConfigError("subtype profiling needs at least two subtype descriptors")
    evidence, failures, _ = collect_evidence(ctx, subs, workers)
    scores: dict[str, dict[str, float]] = {}
    for ev in evidence:
        scores.setdefault(ev.drug, {})[ev.descriptor] = score_evidence(ctx, ev, cfg.ablation).score
    shared = sorted(d for d, s in scores.items() if len(s) == len(subs))
    if not shared:
        raise DataError("no drugs are shared by every subtype")
    m = np.array([[scores[d][s] for s in subs] for d in shared])
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "subtype_matrix.csv", ["drug"] + subs, [[d] + list(row) for d, row in zip(shared, m)])
    res = analytics.pca(m, n_components=min(2, len(subs)))
    names = [ctx.graph.entities[d].name for d in shared]
    _write_csv(out / "pca_projection.csv", ["drug", "drug_name", "pc1", "pc2"],
               [[d, n, *map(float, row)] for d, n, row in zip(shared, names, res["projections"])])
    info = {
        "subtypes": subs,
        "drugs": shared,
        "components": res["components"].tolist(),
        "explained_variance_ratio": res["explained_variance_ratio"].tolist(),
        "eigenvalues": res["eigenvalues"].tolist(),
        "failures": failures,
    }
    _write_json(out / "pca.json", info)
    info["matrix"] = m
    info["projections"] = res["projections"]
    return info


def score_single(graph: Graph, params: HakeParams | None, providers: Providers, disease_text: str,
                 drug_text: str, signature: DrugSignature | None = None,
                 taxonomy: StageTaxonomy | None = None, path_cfg: PathScoringConfig | None = None) -> dict:
    """Verdict JSON (score, level, FDA status, rationale) for one free-text
    disease and drug."""
    taxonomy = taxonomy or StageTaxonomy.load()
    dis = resolve_disease(graph, disease_text)
    drug = resolve_drug(graph, drug_text)
    descriptor = disease_text if disease_text != dis else ""
    prof = assemble_profile(dis, drug, graph, params, providers, signature, descriptor=descriptor,
                            path_cfg=path_cfg)
    names = [graph.entities[dis].name]
    flags = compute_flags(prof, disease_names=names)
    ev = PairEvidence(descriptor or dis, dis, drug, ("external",), prof, flags, names)
    res = score_evidence(None, ev, "none", taxonomy=taxonomy, providers=providers,
                         drug_name=graph.entities[drug].name)
    out = verdict_json(prof, res.score, res.rationale, names)
    out["stage"] = res.stage
    out["flags"] = flags.to_dict()
    out["warnings"] = prof.warnings
    return out


__all__ = [
    "RunConfig", "PairResult", "RunReport", "PipelineContext", "generate_candidates", "run_pipeline",
    "evaluate_recall", "evaluate_survival_alignment", "run_ablation", "subtype_profile", "score_single",
    "recall_tables", "survival_alignment", "read_benchmark",
]
