"""Drug-specific up/down gene signatures from perturbation records weighted
by dose and potency."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import NotFoundError, ParseError, ValidationError

DOSE_UNITS = {"nM": 1e-3, "uM": 1.0, "mM": 1e3}
_UNIT_ALIASES = {"nm": "nM", "um": "uM", "µm": "uM", "μm": "uM", "mm": "mM"}

PERTURBATION_COLUMNS = ("drug", "signature_id", "gene", "direction", "dose_value", "dose_unit", "ic50_um")


@dataclass(frozen=True)
class PerturbationRecord:
    drug: str
    signature_id: str
    gene: str
    direction: str
    dose_value: float
    dose_unit: str = "uM"
    ic50_um: float | None = None

    def __post_init__(self):
        if self.direction not in ("up", "down"):
            raise ValidationError(f"direction must be 'up' or 'down', got {self.direction!r}")
        if self.dose_value < 0:
            raise ValidationError("dose_value must be nonnegative")
        if self.dose_unit not in DOSE_UNITS:
            raise ValidationError(f"unknown dose unit {self.dose_unit!r}")
        if self.ic50_um is not None and not self.ic50_um > 0:
            raise ValidationError("ic50_um must be positive when present")

    @property
    def dose_um(self) -> float:
        return convert_dose(self.dose_value, self.dose_unit)


@dataclass
class SignatureConfig:
    k: float = 0.5
    alpha: float = 0.2
    top_n: int = 200
    default_ic50_weight: float = 0.5

    def __post_init__(self):
        if self.k < 0:
            raise ValidationError("k must be nonnegative")
        if not 0 <= self.alpha <= 1:
            raise ValidationError("alpha must lie in [0, 1]")
        if self.top_n < 1:
            raise ValidationError("top_n must be >= 1")
        if not 0 <= self.default_ic50_weight <= 1:
            raise ValidationError("default_ic50_weight must lie in [0, 1]")


@dataclass
class GeneAggregate:
    gene: str
    n_up: int
    n_down: int
    ic50_score: float
    dose_score: float


@dataclass
class DrugSignature:
    drug: str
    up: list[tuple[str, float]] = field(default_factory=list)
    down: list[tuple[str, float]] = field(default_factory=list)

    @property
    def up_genes(self) -> list[str]:
        return [g for g, _ in self.up]

    @property
    def down_genes(self) -> list[str]:
        return [g for g, _ in self.down]

    def to_dict(self) -> dict:
        return {
            "drug": self.drug,
            "up": [{"gene": g, "score": s} for g, s in self.up],
            "down": [{"gene": g, "score": s} for g, s in self.down],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DrugSignature":
        try:
            return cls(
                data["drug"],
                [(d["gene"], float(d["score"])) for d in data.get("up", [])],
                [(d["gene"], float(d["score"])) for d in data.get("down", [])],
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed signature JSON: {exc}") from None


def convert_dose(value: float, unit: str) -> float:
    try:
        return value * DOSE_UNITS[unit]
    except KeyError:
        raise ValidationError(f"unknown dose unit {unit!r}") from None


def parse_unit(text: str) -> str:
    t = text.strip()
    if t in DOSE_UNITS:
        return t
    try:
        return _UNIT_ALIASES[t.lower()]
    except KeyError:
        raise ValidationError(f"unknown dose unit {text!r}") from None


def ic50_weight(ic50_um: float | None, cfg: SignatureConfig | None = None) -> float:
    cfg = cfg or SignatureConfig()
    if ic50_um is None:
        return cfg.default_ic50_weight
    if not ic50_um > 0:
        raise ValidationError("IC50 must be positive")
    return min(1.0 / ic50_um, 1.0)


def dose_weight(dose_um: float, k: float = 0.5) -> float:
    if dose_um < 0:
        raise ValidationError("dose must be nonnegative")
    return (1.0 + dose_um) ** (-k)


def aggregate_gene(records: list[PerturbationRecord], cfg: SignatureConfig | None = None) -> GeneAggregate:
    """Signed means of IC50 and dose weights over one gene's records."""
    cfg = cfg or SignatureConfig()
    if not records:
        raise ValidationError("no records to aggregate")
    gene, drug = records[0].gene, records[0].drug
    if any(r.gene != gene or r.drug != drug for r in records):
        raise ValidationError("records for one aggregate must share gene and drug")
    sign = [1.0 if r.direction == "up" else -1.0 for r in records]
    n = len(records)
    ic50 = math.fsum(s * ic50_weight(r.ic50_um, cfg) for s, r in zip(sign, records)) / n
    dose = math.fsum(s * dose_weight(r.dose_um, cfg.k) for s, r in zip(sign, records)) / n
    n_up = sum(1 for s in sign if s > 0)
    return GeneAggregate(gene, n_up, n - n_up, ic50, dose)


def final_score(agg: GeneAggregate, cfg: SignatureConfig | None = None,
                max_abs_dose: float = 1.0, max_abs_ic50: float = 1.0) -> float:
    """Composite of the two scores after dividing each by its per-drug
    maximum absolute value (a zero maximum leaves the score unchanged)."""
    cfg = cfg or SignatureConfig()
    dose_n = agg.dose_score / max_abs_dose if max_abs_dose > 0 else agg.dose_score
    ic50_n = agg.ic50_score / max_abs_ic50 if max_abs_ic50 > 0 else agg.ic50_score
    return cfg.alpha * dose_n + (1.0 - cfg.alpha) * ic50_n


def score_genes(records: list[PerturbationRecord], cfg: SignatureConfig | None = None) -> dict[str, float]:
    cfg = cfg or SignatureConfig()
    by_gene: dict[str, list[PerturbationRecord]] = defaultdict(list)
    for r in records:
        by_gene[r.gene].append(r)
    aggs = [aggregate_gene(by_gene[gene], cfg) for gene in sorted(by_gene)]
    max_dose = max(abs(a.dose_score) for a in aggs)
    max_ic50 = max(abs(a.ic50_score) for a in aggs)
    return {a.gene: final_score(a, cfg, max_dose, max_ic50) for a in aggs}


def build_signature(records: list[PerturbationRecord], cfg: SignatureConfig | None = None) -> DrugSignature:
    cfg = cfg or SignatureConfig()
    if not records:
        raise ValidationError("no perturbation records")
    drugs = {r.drug for r in records}
    if len(drugs) != 1:
        raise ValidationError(f"records span several drugs: {sorted(drugs)}")
    scores = score_genes(records, cfg)
    up = sorted(((g, s) for g, s in scores.items() if s > 0), key=lambda x: (-abs(x[1]), x[0]))
    down = sorted(((g, s) for g, s in scores.items() if s < 0), key=lambda x: (-abs(x[1]), x[0]))
    return DrugSignature(records[0].drug, up[: cfg.top_n], down[: cfg.top_n])


def read_perturbations(path) -> list[PerturbationRecord]:
    """Read the perturbation TSV (header row; empty ic50_um means absent)."""
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"perturbation file not found: {path}")
    out = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        missing = set(PERTURBATION_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ParseError(f"perturbation TSV missing columns {sorted(missing)}", 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                ic50 = row["ic50_um"].strip()
                out.append(PerturbationRecord(
                    drug=row["drug"].strip(),
                    signature_id=row["signature_id"].strip(),
                    gene=row["gene"].strip(),
                    direction=row["direction"].strip().lower(),
                    dose_value=float(row["dose_value"]),
                    dose_unit=parse_unit(row["dose_unit"]),
                    ic50_um=float(ic50) if ic50 else None,
                ))
            except (ValueError, ValidationError) as exc:
                raise ParseError(str(exc), lineno) from None
    return out


def write_signature(sig: DrugSignature, path) -> None:
    Path(path).write_text(json.dumps(sig.to_dict(), indent=1) + "\n", encoding="utf-8")


def read_signature(path) -> DrugSignature:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"signature file not found: {path}")
    return DrugSignature.from_dict(json.loads(path.read_text(encoding="utf-8")))


class SignatureBuilder(BaseEstimator):
    """Fit per-drug signatures from a mixed list of records.

    After ``fit``, ``signatures_`` maps drug name to :class:`DrugSignature`.
    """

    def __init__(self, k=0.5, alpha=0.2, top_n=200, default_ic50_weight=0.5):
        self.k = k
        self.alpha = alpha
        self.top_n = top_n
        self.default_ic50_weight = default_ic50_weight

    def fit(self, records, y=None):
        cfg = SignatureConfig(**self.get_params())
        by_drug: dict[str, list[PerturbationRecord]] = defaultdict(list)
        for r in records:
            by_drug[r.drug].append(r)
        self.signatures_ = {d: build_signature(rs, cfg) for d, rs in sorted(by_drug.items())}
        return self

    def transform(self, drugs):
        check_is_fitted(self, "signatures_")
        try:
            return [self.signatures_[d] for d in drugs]
        except KeyError as exc:
            raise NotFoundError(f"no perturbation records for drug {exc.args[0]!r}") from None
