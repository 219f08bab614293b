"""Knowledge-graph evidence integration for drug repurposing."""

from .analytics import JacobiPCA, pca, recall, roc_auc, spearman
from .evidence import (
    EvidenceFlags,
    StageTaxonomy,
    assemble_profile,
    categorize_stage,
    compute_flags,
    confidence_level,
    ora,
    rule_score,
    trial_result_status,
)
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateError,
    EncodingError,
    ExhaustionError,
    FitError,
    KgRepurposeError,
    NotFoundError,
    NumericError,
    ParseError,
    ValidationError,
)
from .graph import Entity, Graph, Triple, load_graph, map_disease, neighbors
from .hake import HakeEmbedding, TrainConfig, rank_drugs, score_triple, train
from .paths import PathScoringConfig, build_subgraph, k_shortest_paths, normalize_edge_score, path_score
from .pipeline import RunConfig, generate_candidates, run_pipeline
from .signature import DrugSignature, SignatureBuilder, build_signature, dose_weight, ic50_weight
from .survival import (
    CoxUnivariable,
    ExpressionMatrix,
    KaplanMeier,
    SsgseaTransformer,
    fit_cox_binary,
    hazard_for_pair,
    ssgsea,
)

__version__ = "0.1.0"
