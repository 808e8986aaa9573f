"""Federated adversarial training for class-imbalanced, non-IID multiclass detection."""

from fedat.config import ExperimentSpec, from_dict, parse_config
from fedat.data import Dataset, SynthSpec, load_csv, partition_non_iid, synthesize_cert_like
from fedat.federation import AugmentConfig, FedConfig, GanConfig, fedavg_aggregate, run_federation
from fedat.metrics import confusion, macro_prf
from fedat.models import ClassifierSpec, GeneratorSpec, build_classifier, build_generator

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "ClassifierSpec",
    "Dataset",
    "ExperimentSpec",
    "FedConfig",
    "GanConfig",
    "GeneratorSpec",
    "SynthSpec",
    "build_classifier",
    "build_generator",
    "confusion",
    "fedavg_aggregate",
    "from_dict",
    "load_csv",
    "macro_prf",
    "parse_config",
    "partition_non_iid",
    "run_federation",
    "synthesize_cert_like",
]
