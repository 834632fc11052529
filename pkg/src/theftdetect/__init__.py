"""Electricity-theft detection: attention/dilated-conv models, missing-data
masking, quantile normalization, and the evaluation suite around them."""

from .dataio import ConsumerRecord, Dataset, SynthConfig, generate_synthetic, load_csv, write_csv
from .estimators import ConvNetClassifier, HybridAttentionClassifier
from .metrics import EvalReport, build_report, f1_confusion, map_at_k, roc_auc, threshold_sweep
from .preprocess import QuantileUniform, Sample2D, build_mask, dataset_to_samples, reshape_weekly
from .train import TrainConfig, run_training, stratified_kfold, train_model

__version__ = "0.1.0"

__all__ = [
    "ConsumerRecord",
    "Dataset",
    "SynthConfig",
    "generate_synthetic",
    "load_csv",
    "write_csv",
    "ConvNetClassifier",
    "HybridAttentionClassifier",
    "EvalReport",
    "build_report",
    "f1_confusion",
    "map_at_k",
    "roc_auc",
    "threshold_sweep",
    "QuantileUniform",
    "Sample2D",
    "build_mask",
    "dataset_to_samples",
    "reshape_weekly",
    "TrainConfig",
    "run_training",
    "stratified_kfold",
    "train_model",
    "__version__",
]
