"""Evidence provider interfaces and their fixture-file implementations.

Pair-keyed fixtures use ``"<disease>|<drug>"`` JSON keys, where the disease
part may be either the free-text descriptor of the query or the mapped
entity id; the descriptor is tried first so subtype-specific fixtures can
override the generic ones.

Fixture directory layout (every file optional)::

    snippets.json       {"disease|drug": [{"source": "PMID:1", "text": "..."}]}
    gene_snippets.json  {"drug|gene": [...]}
    gene_records.json   {"drug|gene": [{"source": "CTD", "relation_type": "...",
                                        "support_count": 3, "direction": null}]}
    labels.json         {"drug": {"indications_and_usage": "...", ...}}
    approvals.json      {"drug": ["disease id or name", ...]}
    trials.json         {"disease|drug": [TrialMeta fields]}
    terms.gmt           term<TAB>description<TAB>gene...
    reasoner_scores.json {"disease|drug": 0-100}
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .exceptions import ConfigError, NotFoundError, ParseError, ValidationError

logger = logging.getLogger(__name__)

GENE_SOURCES = ("CTD", "PubTator", "DGIdb", "LINCS")


@dataclass(frozen=True)
class Snippet:
    source: str
    text: str

    def to_dict(self):
        return {"source": self.source, "text": self.text}


@dataclass(frozen=True)
class ResourceRecord:
    source: str
    relation_type: str = ""
    support_count: int = 0
    direction: str | None = None

    def __post_init__(self):
        if self.source not in GENE_SOURCES:
            raise ValidationError(f"unknown gene evidence source {self.source!r}")

    def to_dict(self):
        return {"source": self.source, "relation_type": self.relation_type,
                "support_count": self.support_count, "direction": self.direction}


@dataclass(frozen=True)
class TrialMeta:
    nct_id: str
    phase: int | None
    status: str
    has_results: bool
    results_positive: bool | None
    start_year: int
    current_year: int
    completion_year: int | None = None
    completion_month: int | None = None
    current_month: int | None = None

    STATUSES = ("not_yet_recruiting", "recruiting", "active", "completed", "terminated")

    def __post_init__(self):
        if self.phase is not None and self.phase not in (1, 2, 3, 4):
            raise ValidationError(f"{self.nct_id}: phase must be 1-4 or absent")
        if self.status not in self.STATUSES:
            raise ValidationError(f"{self.nct_id}: unknown status {self.status!r}")
        if self.start_year > self.current_year:
            raise ValidationError(f"{self.nct_id}: start_year after current_year")

    @classmethod
    def from_dict(cls, d: dict) -> "TrialMeta":
        phase = d.get("phase")
        if isinstance(phase, str):
            phase = None if phase.upper() in ("NA", "N/A", "") else int(phase)
        return cls(
            nct_id=str(d["nct_id"]),
            phase=phase,
            status=str(d["status"]),
            has_results=bool(d.get("has_results", False)),
            results_positive=d.get("results_positive"),
            start_year=int(d["start_year"]),
            current_year=int(d["current_year"]),
            completion_year=d.get("completion_year"),
            completion_month=d.get("completion_month"),
            current_month=d.get("current_month"),
        )

    def to_dict(self) -> dict:
        return {
            "nct_id": self.nct_id, "phase": "NA" if self.phase is None else self.phase,
            "status": self.status, "has_results": self.has_results,
            "results_positive": self.results_positive, "start_year": self.start_year,
            "current_year": self.current_year, "completion_year": self.completion_year,
            "completion_month": self.completion_month, "current_month": self.current_month,
        }


class LiteratureProvider(Protocol):
    def pair_snippets(self, diseases: list[str], drug: str) -> list[Snippet]: ...
    def gene_snippets(self, drug: str, gene: str) -> list[Snippet]: ...


class GeneResourceProvider(Protocol):
    def records(self, drug: str, gene: str) -> list[ResourceRecord]: ...
    def genes_for_drug(self, drug: str) -> list[str]: ...


class LabelProvider(Protocol):
    def sections(self, drug: str) -> dict[str, str]: ...
    def approved_indications(self, drug: str) -> list[str]: ...


class TrialProvider(Protocol):
    def trials(self, diseases: list[str], drug: str) -> list[TrialMeta]: ...


class TermLibraryProvider(Protocol):
    def library(self) -> dict[str, frozenset]: ...


class ReasonerProvider(Protocol):
    def score(self, profile, flags) -> dict: ...


def _read_json(path: Path, default):
    if not path.exists():
        return default
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None


def _pair_lookup(table: dict, diseases: list[str], drug: str):
    for dis in diseases:
        key = f"{dis}|{drug}"
        if key in table:
            return table[key]
    return []


def read_gmt(path) -> dict[str, frozenset]:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"GMT file not found: {path}")
    lib = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 3:
                raise ParseError("GMT rows need term, description and >= 1 gene", lineno)
            genes = frozenset(g.strip() for g in cols[2:] if g.strip())
            if not genes:
                raise ParseError("GMT row has no genes", lineno)
            lib[cols[0].strip()] = genes
    return lib


class FixtureLiterature:
    def __init__(self, root):
        root = Path(root)
        self._pairs = _read_json(root / "snippets.json", {})
        self._genes = _read_json(root / "gene_snippets.json", {})

    @staticmethod
    def _snips(items):
        return [Snippet(str(s.get("source", "")), str(s["text"])) for s in items]

    def pair_snippets(self, diseases, drug):
        return self._snips(_pair_lookup(self._pairs, diseases, drug))

    def gene_snippets(self, drug, gene):
        return self._snips(self._genes.get(f"{drug}|{gene}", []))


class FixtureGeneResources:
    def __init__(self, root):
        self._records = _read_json(Path(root) / "gene_records.json", {})

    def records(self, drug, gene):
        return [ResourceRecord(r["source"], r.get("relation_type", ""), int(r.get("support_count", 0)),
                               r.get("direction")) for r in self._records.get(f"{drug}|{gene}", [])]

    def genes_for_drug(self, drug):
        prefix = f"{drug}|"
        return sorted(k[len(prefix):] for k in self._records if k.startswith(prefix))


class FixtureLabels:
    def __init__(self, root):
        root = Path(root)
        self._labels = _read_json(root / "labels.json", {})
        self._approvals = _read_json(root / "approvals.json", {})

    def sections(self, drug):
        return dict(self._labels.get(drug, {}))

    def approved_indications(self, drug):
        return list(self._approvals.get(drug, []))


class FixtureTrials:
    def __init__(self, root):
        self._trials = _read_json(Path(root) / "trials.json", {})

    def trials(self, diseases, drug):
        return [TrialMeta.from_dict(t) for t in _pair_lookup(self._trials, diseases, drug)]


class FixtureTermLibrary:
    def __init__(self, root):
        path = Path(root) / "terms.gmt"
        self._lib = read_gmt(path) if path.exists() else {}

    def library(self):
        return dict(self._lib)


class FixtureReasoner:
    """Precomputed external scores keyed by pair (stands in for an LLM
    scorer); pairs without a score fall back to the rule scorer."""

    def __init__(self, root):
        self._scores = _read_json(Path(root) / "reasoner_scores.json", {})

    def lookup(self, diseases, drug):
        for dis in diseases:
            key = f"{dis}|{drug}"
            if key in self._scores:
                return float(self._scores[key])
        return None


@dataclass
class Providers:
    literature: LiteratureProvider
    genes: GeneResourceProvider
    labels: LabelProvider
    trials: TrialProvider
    terms: TermLibraryProvider
    reasoner: FixtureReasoner | None = None

    @classmethod
    def from_fixtures(cls, root) -> "Providers":
        root = Path(root)
        if not root.is_dir():
            raise ConfigError(f"fixture directory not found: {root}")
        reasoner = FixtureReasoner(root) if (root / "reasoner_scores.json").exists() else None
        return cls(FixtureLiterature(root), FixtureGeneResources(root), FixtureLabels(root),
                   FixtureTrials(root), FixtureTermLibrary(root), reasoner)

    @classmethod
    def empty(cls) -> "Providers":
        class _Empty:
            def pair_snippets(self, diseases, drug): return []
            def gene_snippets(self, drug, gene): return []
            def records(self, drug, gene): return []
            def genes_for_drug(self, drug): return []
            def sections(self, drug): return {}
            def approved_indications(self, drug): return []
            def trials(self, diseases, drug): return []
            def library(self): return {}
        e = _Empty()
        return cls(e, e, e, e, e, None)
