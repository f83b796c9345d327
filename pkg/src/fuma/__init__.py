"""Two-phase behavior modeling for MOOC video interaction logs.

Phase one (discovery) clusters students by 21 viewing-behavior features
using a genetic-algorithm K-means with validity-index model selection, then
mines per-cluster association rules.  Phase two (classification) scores new
students against the mined rules and suggests behavior changes for students
matching low-performing profiles.
"""

from .classify import (
    ClassificationResult,
    Intervention,
    classify,
    membership_score,
    suggest_interventions,
)
from .clustering import (
    ClusterModel,
    Clustering,
    GAParams,
    KSelection,
    ga_kmeans,
    label_clusters,
    load_model,
    save_model,
    select_k,
)
from .events import (
    Action,
    VideoCatalog,
    VideoEvent,
    load_catalog,
    load_outcomes,
    parse_event_log,
)
from .evaluation import CVReport, analyze_week_slice, nested_cv
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    NormalizationParams,
    apply_normalizer,
    extract_feature_matrix,
    extract_features,
    fit_normalizer,
)
from .rules import AssociationRule, Condition, MiningParams, RuleSet, mine_rules
from .sessions import build_watch_records
from .simulate import (
    CohortConfig,
    default_config,
    generate_cohort,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AssociationRule",
    "CVReport",
    "ClassificationResult",
    "ClusterModel",
    "Clustering",
    "CohortConfig",
    "Condition",
    "FEATURE_NAMES",
    "FeatureVector",
    "GAParams",
    "Intervention",
    "KSelection",
    "MiningParams",
    "NormalizationParams",
    "RuleSet",
    "VideoCatalog",
    "VideoEvent",
    "analyze_week_slice",
    "apply_normalizer",
    "build_watch_records",
    "classify",
    "default_config",
    "extract_feature_matrix",
    "extract_features",
    "fit_normalizer",
    "ga_kmeans",
    "generate_cohort",
    "label_clusters",
    "load_catalog",
    "load_model",
    "load_outcomes",
    "membership_score",
    "mine_rules",
    "nested_cv",
    "parse_event_log",
    "save_model",
    "select_k",
    "suggest_interventions",
]
