"""Root cause analysis for landmark probe measurements.

A coarse fault-family classifier pools per-landmark features through a
shared kernel, so it accepts any number of landmarks at inference time.
Gradient attention over its input localizes the fault to one measurement,
and an auxiliary random forest sharpens the ranking for causes the
training data already covers. A deterministic network simulator generates
labeled fault datasets, and the evaluation module benchmarks everything
under a hidden-landmark protocol.
"""

from .bayes import BayesModel, bayes_predict, fit_bayes
from .errors import DataError
from .evaluation import Protocol, Report, recall_at_k, run_benchmark, split_hidden
from .forest import ForestModel, ForestParams, train_forest
from .inference import Diagnosis, diagnose
from .landpool import CoarseModel, PoolSet, TrainConfig, coarse_forward, train, transfer
from .schema import FaultFamily, FeatureSchema, MeasureKind, Sample
from .simnet import Dataset, SimConfig, default_config, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "BayesModel",
    "CoarseModel",
    "DataError",
    "Dataset",
    "Diagnosis",
    "FaultFamily",
    "FeatureSchema",
    "ForestModel",
    "ForestParams",
    "MeasureKind",
    "PoolSet",
    "Protocol",
    "Report",
    "Sample",
    "SimConfig",
    "TrainConfig",
    "bayes_predict",
    "coarse_forward",
    "default_config",
    "diagnose",
    "fit_bayes",
    "generate_dataset",
    "recall_at_k",
    "run_benchmark",
    "split_hidden",
    "train",
    "train_forest",
    "transfer",
]
