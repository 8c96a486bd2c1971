"""Knowledge graph completion with real-valued phase and modulus embeddings.

The package covers the full loop: dataset ingestion and synthetic graph
generation, scoring models with analytic gradients, margin based training
with self-adversarial negatives, filtered ranking evaluation, structural
perturbation experiments, and mechanical verification of the model's
expressivity and inference pattern constructions.
"""
from importlib import resources
from pathlib import Path

from .baselines import RotateModel, RotateParams, TransEModel, TransEParams, init_rotate, init_transe
from .estimators import RelatE, RotatE, TransE
from .evaluation import (
    CategoryReport,
    EfficiencyReport,
    RankingReport,
    bench_scaling,
    evaluate,
    evaluate_by_category,
    ranked_position,
)
from .expressivity import (
    ExpressivityAudit,
    SeparationCertificate,
    TableParams,
    TruthTable,
    audit_random_tables,
    construct_expressive_embedding,
    verify_certificate,
)
from .kg import (
    FilterIndex,
    KnowledgeGraph,
    ParseError,
    RelationCategory,
    Vocabulary,
    augment_reciprocal,
    classify_relations,
    infer_type_signatures,
    load_dataset,
    load_triples,
    write_dataset,
)
from .patterns import PatternKind, PatternWitness, verify_all_patterns, verify_pattern
from .perturbation import (
    PerturbationKind,
    PerturbationSpec,
    RobustnessReport,
    apply_perturbation,
    perturbed_graph,
    robustness_experiment,
)
from .scoring import RelateModel, RelateParams, ScoreModel, init_relate, relate_score
from .storage import build_model, export_embeddings, load_checkpoint, save_checkpoint
from .synthetic import SyntheticSpec, generate_synthetic_kg, write_synthetic_dataset
from .training import ConfigError, TrainConfig, TrainHistory, load_config, train

__version__ = "0.1.0"

PRESETS = ("fb15k237", "wn18rr", "yago310")


def preset_path(name: str) -> Path:
    """Filesystem path of a shipped full-scale training preset."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    with resources.as_file(resources.files("relate") / "configs" / f"{name}.cfg") as p:
        return Path(p)


__all__ = [
    "CategoryReport",
    "ConfigError",
    "EfficiencyReport",
    "ExpressivityAudit",
    "FilterIndex",
    "KnowledgeGraph",
    "ParseError",
    "PatternKind",
    "PatternWitness",
    "PerturbationKind",
    "PerturbationSpec",
    "PRESETS",
    "RankingReport",
    "RelatE",
    "RelateModel",
    "RelateParams",
    "RelationCategory",
    "RobustnessReport",
    "RotatE",
    "RotateModel",
    "RotateParams",
    "ScoreModel",
    "SeparationCertificate",
    "SyntheticSpec",
    "TableParams",
    "TrainConfig",
    "TrainHistory",
    "TransE",
    "TransEModel",
    "TransEParams",
    "TruthTable",
    "Vocabulary",
    "apply_perturbation",
    "audit_random_tables",
    "augment_reciprocal",
    "bench_scaling",
    "build_model",
    "classify_relations",
    "construct_expressive_embedding",
    "evaluate",
    "evaluate_by_category",
    "export_embeddings",
    "generate_synthetic_kg",
    "infer_type_signatures",
    "init_relate",
    "init_rotate",
    "init_transe",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "load_triples",
    "perturbed_graph",
    "preset_path",
    "ranked_position",
    "relate_score",
    "robustness_experiment",
    "save_checkpoint",
    "train",
    "verify_all_patterns",
    "verify_certificate",
    "verify_pattern",
    "write_dataset",
    "write_synthetic_dataset",
]
