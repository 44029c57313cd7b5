"""Supervised linear feature learning from class-conditional Gaussian statistics.

Learns filter banks that maximize pairwise class dissimilarities measured
on the SPD manifold (exact zero-mean Fisher-Rao distance, a closed-form
general-case bound, Bhattacharyya, Hellinger), and evaluates the learned
features with quadratic and nearest-neighbor classifiers.
"""

from .baselines import AmaGaussModel, LdaModel, ama_gauss_fit, lda, pca
from .distances import (
    DistanceKind,
    GaussianParams,
    bhattacharyya,
    bhattacharyya_zero_mean_spectral,
    calvo_oller_distance,
    calvo_oller_embedding,
    distance,
    distance_gradient,
    fisher_rao_equal_cov,
    fisher_rao_zero_mean,
    hellinger,
    mahalanobis_sq,
)
from .evaluation import (
    EvalReport,
    QdaModel,
    bayes_1d_closed_form,
    gaussian_resample_eval,
    knn_predict,
    monte_carlo_bayes,
    qda_evaluate,
    qda_fit,
    qda_predict,
)
from .spd import (
    GeneralizedSpectrum,
    SpdMatrix,
    affine_invariant_distance,
    affine_invariant_gradient,
    generalized_eigen,
)
from .stats import (
    ClassEnsemble,
    FeatureStats,
    LabeledDataset,
    estimate_class_statistics,
    load_dataset,
    load_stats,
    project_statistics,
    save_dataset,
    save_stats,
)
from .toydata import SweepTable, ToySpec, generate, sweep_grid
from .trainer import (
    FilterBank,
    TrainConfig,
    TrainLog,
    fit,
    fit_sequential_pairs,
    objective,
    objective_gradient,
    orthogonalize,
)

__version__ = "0.1.0"

__all__ = [
    "AmaGaussModel",
    "ClassEnsemble",
    "DistanceKind",
    "EvalReport",
    "FeatureStats",
    "FilterBank",
    "GaussianParams",
    "GeneralizedSpectrum",
    "LabeledDataset",
    "LdaModel",
    "QdaModel",
    "SpdMatrix",
    "SweepTable",
    "ToySpec",
    "TrainConfig",
    "TrainLog",
    "affine_invariant_distance",
    "affine_invariant_gradient",
    "ama_gauss_fit",
    "bayes_1d_closed_form",
    "bhattacharyya",
    "bhattacharyya_zero_mean_spectral",
    "calvo_oller_distance",
    "calvo_oller_embedding",
    "distance",
    "distance_gradient",
    "estimate_class_statistics",
    "fisher_rao_equal_cov",
    "fisher_rao_zero_mean",
    "fit",
    "fit_sequential_pairs",
    "gaussian_resample_eval",
    "generalized_eigen",
    "generate",
    "hellinger",
    "knn_predict",
    "lda",
    "load_dataset",
    "load_stats",
    "mahalanobis_sq",
    "monte_carlo_bayes",
    "objective",
    "objective_gradient",
    "orthogonalize",
    "pca",
    "project_statistics",
    "qda_evaluate",
    "qda_fit",
    "qda_predict",
    "save_dataset",
    "save_stats",
    "sweep_grid",
    "__version__",
]
