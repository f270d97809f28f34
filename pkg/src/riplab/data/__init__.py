from .dataset import (
    ALL_VIEWS, Dataset, Normalizer, NormStats, Sample, apply_zscore, fit_zscore, load_dataset,
    pad_batch, resolve_splits, split_dataset, unpad, write_dataset,
)
from .labels import LABELS, STRAIGHT, ManeuverLabel
from .ripf import DataError
from .synthetic import GenConfig, centroid_probe, generate_synthetic

__all__ = [
    "ALL_VIEWS", "Dataset", "Normalizer", "NormStats", "Sample", "apply_zscore", "fit_zscore",
    "load_dataset", "pad_batch", "resolve_splits", "split_dataset", "unpad", "write_dataset",
    "LABELS", "STRAIGHT", "ManeuverLabel", "DataError", "GenConfig", "centroid_probe",
    "generate_synthetic",
]
