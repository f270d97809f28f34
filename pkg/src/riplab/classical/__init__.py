from .pipeline import SvmClassifier, flatten_samples
from .resample import ResampleError, ResampleReport, random_frame_sample, sample_frame_indices, sample_views, smote
from .svm import (
    BinarySVM, ConvergenceWarning, OvrSvmModel, SVMError, dual_objective, kkt_violations, ovr_predict,
    rbf_kernel, rbf_matrix, smo, train_binary_svm, train_ovr,
)

__all__ = [
    "SvmClassifier", "flatten_samples", "ResampleError", "ResampleReport", "random_frame_sample",
    "sample_frame_indices", "sample_views", "smote", "BinarySVM", "ConvergenceWarning", "OvrSvmModel",
    "SVMError", "dual_objective", "kkt_violations", "ovr_predict", "rbf_kernel", "rbf_matrix", "smo",
    "train_binary_svm", "train_ovr",
]
