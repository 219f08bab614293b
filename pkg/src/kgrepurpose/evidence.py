"""Per-pair evidence profiles, the fixed additive rule scorer, trial
result-status bands and clinical-stage categorisation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats

from .exceptions import ConfigError, NotFoundError, ValidationError
from .graph import Graph
from .hake import HakeParams
from .paths import Path as KgPath, PathScoringConfig, build_subgraph
from .providers import Providers, ResourceRecord, Snippet, TrialMeta
from .signature import DrugSignature

logger = logging.getLogger(__name__)

MAX_GENES = 10
MAX_PAIR_SNIPPETS = 5

# (flag, points, rationale) in rule order
_RULES = {
    "direct_clinical": (40, "Rule triggered: Disease-Drug evidence (+40)."),
    "direct_preclinical": (20, "Rule triggered: Disease-Drug evidence (+20)."),
    "strong_gene": (30, "Rule triggered: Gene-level evidence (+30)."),
    "limited_gene": (15, "Rule triggered: Gene-level evidence (+15)."),
    "significant_pathway": (20, "Rule triggered: GSEA pathway evidence (+20)."),
    "nominal_pathway": (10, "Rule triggered: GSEA pathway evidence (+10)."),
    "fda_any_indication": (10, "Rule triggered: FDA approval (+10)."),
}

CONFIDENCE_BANDS = (
    (15, "Very Low"),
    (30, "Low"),
    (45, "Moderately Low"),
    (60, "Moderate"),
    (75, "Moderately High"),
    (90, "High"),
    (101, "Very High"),
)

RESULT_BANDS = {
    "bad": (0, 19),
    "completed_no_result": (20, 34),
    "ongoing_long_term_incomplete": (35, 49),
    "ongoing_in_reasonable_term": (50, 79),
    "good": (80, 100),
}


@dataclass(frozen=True)
class EvidenceFlags:
    direct_clinical: bool = False
    direct_preclinical: bool = False
    strong_gene: bool = False
    limited_gene: bool = False
    significant_pathway: bool = False
    nominal_pathway: bool = False
    fda_any_indication: bool = False

    def validate(self) -> "EvidenceFlags":
        if self.strong_gene and self.limited_gene:
            raise ValidationError("strong_gene and limited_gene are mutually exclusive")
        if self.significant_pathway and self.nominal_pathway:
            raise ValidationError("significant_pathway and nominal_pathway are mutually exclusive")
        return self

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in _RULES}


@dataclass
class RuleVerdict:
    score: int
    rationale: list[str]

    @property
    def level(self) -> str:
        return confidence_level(self.score)


def rule_score(flags: EvidenceFlags) -> RuleVerdict:
    """Additive rule scorer capped at 100; exclusive tiers use the higher
    rule only."""
    flags.validate()
    fired = []
    if flags.direct_clinical:
        fired.append("direct_clinical")
    elif flags.direct_preclinical:
        fired.append("direct_preclinical")
    if flags.strong_gene:
        fired.append("strong_gene")
    elif flags.limited_gene:
        fired.append("limited_gene")
    if flags.significant_pathway:
        fired.append("significant_pathway")
    elif flags.nominal_pathway:
        fired.append("nominal_pathway")
    if flags.fda_any_indication:
        fired.append("fda_any_indication")
    total = sum(_RULES[f][0] for f in fired)
    return RuleVerdict(min(total, 100), [_RULES[f][1] for f in fired])


def confidence_level(score: float) -> str:
    if not 0 <= score <= 100:
        raise ValidationError(f"score {score} outside [0, 100]")
    for upper, label in CONFIDENCE_BANDS:
        if score < upper:
            return label
    return CONFIDENCE_BANDS[-1][1]


@dataclass
class TrialStatus:
    label: str
    band: tuple[int, int]
    warnings: list[str] = field(default_factory=list)

    @property
    def midpoint(self) -> float:
        return (self.band[0] + self.band[1]) / 2.0


def trial_result_status(t: TrialMeta) -> TrialStatus:
    """Result-status band of one trial; rules are tried in order and the
    first match wins."""
    warnings = []

    def done(label):
        return TrialStatus(label, RESULT_BANDS[label], warnings)

    if t.has_results and t.results_positive is False:
        return done("bad")
    if t.has_results and t.results_positive is True:
        return done("good")
    if not t.has_results and t.status == "completed" and t.completion_year is not None:
        cur_m = t.current_month or 1
        comp_m = t.completion_month or cur_m
        months = 12 * (t.current_year - t.completion_year) + (cur_m - comp_m)
        if months > 12:
            return done("completed_no_result")
    if not t.has_results:
        if t.phase in (1, 2):
            limit = 2
        else:
            if t.phase is None:
                warnings.append(f"{t.nct_id}: phase missing; using phase 3 timeline")
            limit = 5
        if t.current_year - t.start_year >= limit:
            return done("ongoing_long_term_incomplete")
    return done("ongoing_in_reasonable_term")


@dataclass
class StageTaxonomy:
    stages: list[str]
    anchors: dict[str, str]
    trial_map: dict[str, dict[str, str]]

    REQUIRED_ANCHORS = ("approved", "insufficient")

    def __post_init__(self):
        if not self.stages or any(not s for s in self.stages):
            raise ConfigError("taxonomy stages must be non-empty labels")
        if len(set(self.stages)) != len(self.stages):
            raise ConfigError("taxonomy stage labels must be unique")
        known = set(self.stages)
        for a in self.REQUIRED_ANCHORS:
            if self.anchors.get(a) not in known:
                raise ConfigError(f"taxonomy is missing the {a!r} anchor stage")
        for a, label in self.anchors.items():
            if label not in known:
                raise ConfigError(f"anchor {a!r} names unknown stage {label!r}")
        for phase, table in self.trial_map.items():
            for band, label in table.items():
                if band not in RESULT_BANDS:
                    raise ConfigError(f"trial_map[{phase}] has unknown band {band!r}")
                if label not in known:
                    raise ConfigError(f"trial_map[{phase}][{band}] names unknown stage {label!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "StageTaxonomy":
        try:
            return cls(list(data["stages"]), dict(data["anchors"]),
                       {str(k): dict(v) for k, v in data.get("trial_map", {}).items()})
        except KeyError as exc:
            raise ConfigError(f"taxonomy missing key {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path=None) -> "StageTaxonomy":
        if path is None:
            text = resources.files("kgrepurpose").joinpath("data/taxonomy.json").read_text(encoding="utf-8")
        else:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"taxonomy file not found: {path}")
            text = path.read_text(encoding="utf-8")
            if path.suffix in (".yml", ".yaml"):
                import yaml
                return cls.from_dict(yaml.safe_load(text))
        return cls.from_dict(json.loads(text))

    def rank(self, label: str) -> int:
        return self.stages.index(label)


def categorize_stage(trials: list[TrialMeta], fda_approved_for_disease: bool, fda_any: bool,
                     taxonomy: StageTaxonomy, has_literature: bool = False) -> str:
    """Approval for the disease dominates; otherwise the best trial (highest
    phase, then highest result band) is looked up in the taxonomy's trial
    table; otherwise literature, other-indication approval, or the
    insufficient-evidence anchor."""
    if fda_approved_for_disease:
        return taxonomy.anchors["approved"]
    if trials:
        best = max(trials, key=lambda t: (t.phase or 0, trial_result_status(t).band[0]))
        status = trial_result_status(best)
        key = "NA" if best.phase is None else str(best.phase)
        table = taxonomy.trial_map.get(key)
        if table is None or status.label not in table:
            raise ConfigError(f"taxonomy has no stage for phase {key} / {status.label}")
        return table[status.label]
    if has_literature and "preclinical" in taxonomy.anchors:
        return taxonomy.anchors["preclinical"]
    if fda_any and "fda_other" in taxonomy.anchors:
        return taxonomy.anchors["fda_other"]
    return taxonomy.anchors["insufficient"]


@dataclass
class EnrichedTerm:
    term: str
    overlap: int
    term_size: int
    p: float
    fdr: float = 1.0
    direction: str | None = None
    genes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"term": self.term, "overlap": self.overlap, "term_size": self.term_size,
                "p": self.p, "fdr": self.fdr, "direction": self.direction, "genes": list(self.genes)}


def hypergeom_tail(overlap: int, universe: int, term_size: int, query_size: int) -> float:
    """P(X >= overlap) for X ~ Hypergeom(universe, term_size, query_size)."""
    lo = max(0, query_size + term_size - universe)
    hi = min(term_size, query_size)
    if not lo <= overlap <= hi:
        raise ValidationError(
            f"overlap {overlap} impossible for universe={universe}, term={term_size}, query={query_size}"
        )
    return float(min(1.0, stats.hypergeom.sf(overlap - 1, universe, term_size, query_size)))


def benjamini_hochberg(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    n = p.size
    if n == 0:
        return p
    order = np.argsort(p, kind="stable")
    scaled = p[order] * n / np.arange(1, n + 1)
    q = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(n)
    out[order] = np.minimum(q, 1.0)
    return out


def ora(query, library: dict, universe_size: int) -> list[EnrichedTerm]:
    """Hypergeometric over-representation of ``query`` in each library term,
    sorted by p (ties by term); ``fdr`` is Benjamini-Hochberg over terms."""
    q = set(query)
    if universe_size < len(q):
        raise ValidationError("universe smaller than the query")
    out = []
    for term in sorted(library):
        genes = set(library[term])
        if universe_size < len(genes):
            raise ValidationError(f"universe smaller than term {term!r}")
        hits = q & genes
        p = hypergeom_tail(len(hits), universe_size, len(genes), len(q))
        out.append(EnrichedTerm(term, len(hits), len(genes), p, genes=tuple(sorted(hits))))
    for t, f in zip(out, benjamini_hochberg([t.p for t in out])):
        t.fdr = float(f)
    out.sort(key=lambda t: (t.p, t.term))
    return out


@dataclass
class GeneEvidence:
    gene: str
    snippets: list[Snippet] = field(default_factory=list)
    resource_records: list[ResourceRecord] = field(default_factory=list)
    paths_to_disease: list[tuple[KgPath, float]] = field(default_factory=list)
    paths_to_drug: list[tuple[KgPath, float]] = field(default_factory=list)

    @property
    def n_categories(self) -> int:
        return (bool(self.snippets) + bool(self.resource_records)
                + bool(self.paths_to_disease or self.paths_to_drug))

    @property
    def support(self) -> int:
        return sum(r.support_count for r in self.resource_records)

    @property
    def best_path_score(self) -> float:
        scores = [s for _, s in self.paths_to_disease + self.paths_to_drug]
        return max(scores) if scores else 0.0

    def to_dict(self) -> dict:
        return {
            "gene": self.gene,
            "snippets": [s.to_dict() for s in self.snippets],
            "resource_records": [r.to_dict() for r in self.resource_records],
            "paths_to_disease": [p.to_dict(s) for p, s in self.paths_to_disease],
            "paths_to_drug": [p.to_dict(s) for p, s in self.paths_to_drug],
        }


def select_genes(candidates: list[GeneEvidence], limit: int = MAX_GENES) -> list[GeneEvidence]:
    """Rank by (evidence categories, resource support, best path score)
    descending, then symbol; keep ``limit``."""
    ranked = sorted(candidates, key=lambda c: (-c.n_categories, -c.support, -c.best_path_score, c.gene))
    return ranked[:limit]


@dataclass
class EvidenceProfile:
    disease: str
    drug: str
    descriptor: str = ""
    paths: list[tuple[KgPath, float]] = field(default_factory=list)
    literature_snippets: list[Snippet] = field(default_factory=list)
    label_sections: dict[str, str] = field(default_factory=dict)
    approved_indications: list[str] = field(default_factory=list)
    trials: list[TrialMeta] = field(default_factory=list)
    gene_level: list[GeneEvidence] = field(default_factory=list)
    pathway_level: list[EnrichedTerm] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "disease": self.disease,
            "drug": self.drug,
            "descriptor": self.descriptor,
            "drug_level": {
                "paths": [p.to_dict(s) for p, s in self.paths],
                "literature_snippets": [s.to_dict() for s in self.literature_snippets],
                "label_sections": dict(sorted(self.label_sections.items())),
                "approved_indications": list(self.approved_indications),
                "trials": [t.to_dict() for t in self.trials],
            },
            "gene_level": [g.to_dict() for g in self.gene_level],
            "pathway_level": [t.to_dict() for t in self.pathway_level],
            "warnings": list(self.warnings),
        }


@dataclass
class FlagRules:
    """Declared thresholds turning a profile into rule-scorer flags."""

    strong_gene_min_genes: int = 2
    strong_gene_min_categories: int = 2
    fdr_threshold: float = 0.05
    nominal_p_threshold: float = 0.05


def approved_for_disease(profile: EvidenceProfile, names: list[str]) -> bool:
    wanted = {n.casefold() for n in names if n}
    return any(a.casefold() in wanted for a in profile.approved_indications)


def compute_flags(profile: EvidenceProfile, rules: FlagRules | None = None,
                  disease_names: list[str] | None = None) -> EvidenceFlags:
    rules = rules or FlagRules()
    names = [profile.disease, profile.descriptor] + list(disease_names or [])
    fda_disease = approved_for_disease(profile, names)
    direct_clinical = fda_disease or any(t.has_results and t.results_positive is True for t in profile.trials)
    direct_preclinical = bool(profile.literature_snippets)
    rich = [g for g in profile.gene_level if g.n_categories >= rules.strong_gene_min_categories]
    strong = len(rich) >= rules.strong_gene_min_genes
    limited = not strong and bool(profile.gene_level)
    fdr = min((t.fdr for t in profile.pathway_level), default=1.0)
    p = min((t.p for t in profile.pathway_level), default=1.0)
    significant = fdr < rules.fdr_threshold
    nominal = not significant and p < rules.nominal_p_threshold
    return EvidenceFlags(
        direct_clinical=direct_clinical,
        direct_preclinical=direct_preclinical,
        strong_gene=strong,
        limited_gene=limited,
        significant_pathway=significant,
        nominal_pathway=nominal,
        fda_any_indication=bool(profile.approved_indications),
    )


ABLATIONS = ("none", "drop_drug", "drop_gene", "drop_pathway", "rule_only")


def ablate_flags(flags: EvidenceFlags, ablation: str) -> EvidenceFlags:
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}")
    if ablation == "drop_drug":
        return replace(flags, direct_clinical=False, direct_preclinical=False)
    if ablation == "drop_gene":
        return replace(flags, strong_gene=False, limited_gene=False)
    if ablation == "drop_pathway":
        return replace(flags, significant_pathway=False, nominal_pathway=False)
    return flags


def fda_status(profile: EvidenceProfile, disease_names: list[str] | None = None) -> str:
    label = profile.descriptor or profile.disease
    if approved_for_disease(profile, [profile.disease, profile.descriptor] + list(disease_names or [])):
        return f"FDA-approved for {label}"
    if profile.approved_indications:
        return f"FDA-approved for other indications but not for {label}"
    return "N/A"


def verdict_json(profile: EvidenceProfile, score: float, rationale: list[str],
                 disease_names: list[str] | None = None) -> dict:
    return {
        "Disease": profile.descriptor or profile.disease,
        "Drug": profile.drug,
        "verdict": {
            "overall_confidence_level": confidence_level(score),
            "overall_confidence_score": score,
            "FDA_status": fda_status(profile, disease_names),
        },
        "rationale_bullets": list(rationale),
    }


def _guard(profile: EvidenceProfile, channel: str, fn, default):
    try:
        return fn()
    except Exception as exc:  # provider failures degrade the channel only
        msg = f"{channel} provider failed: {exc}"
        logger.warning("%s/%s: %s", profile.disease, profile.drug, msg)
        profile.warnings.append(msg)
        return default


def assemble_profile(disease: str, drug: str, graph: Graph | None, params: HakeParams | None,
                     providers: Providers, signature: DrugSignature | None = None,
                     descriptor: str = "", path_cfg: PathScoringConfig | None = None,
                     universe_size: int | None = None) -> EvidenceProfile:
    """Gather drug-, gene- and pathway-level evidence for one pair.

    Any provider (or path search) that raises leaves its channel empty and
    records a warning on the profile.
    """
    path_cfg = path_cfg or PathScoringConfig()
    prof = EvidenceProfile(disease, drug, descriptor)
    keys = [k for k in (descriptor, disease) if k]

    def paths_between(a, b):
        if graph is None or params is None or a not in graph.entities or b not in graph.entities:
            return []
        return build_subgraph(graph, params, a, b, path_cfg)

    prof.paths = _guard(prof, "paths", lambda: paths_between(disease, drug), [])
    prof.literature_snippets = _guard(
        prof, "literature", lambda: providers.literature.pair_snippets(keys, drug)[:MAX_PAIR_SNIPPETS], [])
    prof.label_sections = _guard(prof, "labels", lambda: providers.labels.sections(drug), {})
    prof.approved_indications = _guard(prof, "labels", lambda: providers.labels.approved_indications(drug), [])
    prof.trials = _guard(prof, "trials", lambda: providers.trials.trials(keys, drug), [])

    candidates: set[str] = set()
    if graph is not None:
        for path, _ in prof.paths:
            candidates.update(n for n in path.nodes if graph.entities[n].kind == "gene")
    candidates.update(_guard(prof, "gene resources", lambda: providers.genes.genes_for_drug(drug), []))
    genes = []
    for gene in sorted(candidates):
        ge = GeneEvidence(gene)
        ge.snippets = _guard(prof, "literature", lambda: providers.literature.gene_snippets(drug, gene), [])
        ge.resource_records = _guard(prof, "gene resources", lambda: providers.genes.records(drug, gene), [])
        ge.paths_to_disease = _guard(prof, "paths", lambda: paths_between(disease, gene), [])
        ge.paths_to_drug = _guard(prof, "paths", lambda: paths_between(gene, drug), [])
        if ge.n_categories:
            genes.append(ge)
    prof.gene_level = select_genes(genes)

    if signature is not None:
        library = _guard(prof, "term library", providers.terms.library, {})
        if library:
            terms = []
            for direction, gene_list in (("up", signature.up_genes), ("down", signature.down_genes)):
                if not gene_list:
                    continue
                universe = universe_size or len(set().union(*library.values()) | set(signature.up_genes)
                                                 | set(signature.down_genes))
                for t in ora(gene_list, library, universe):
                    if t.overlap > 0:
                        t.direction = direction
                        terms.append(t)
            terms.sort(key=lambda t: (t.p, t.direction, t.term))
            prof.pathway_level = terms
    return prof


def require_entity(graph: Graph, eid: str) -> None:
    if eid not in graph.entities:
        raise NotFoundError(f"unknown entity {eid!r}")
