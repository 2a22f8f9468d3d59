"""Gaussian-smoothed Hessians (SmoothHess) and gradients (SmoothGrad) for ReLU networks."""

from .errors import (
    DegenerateCovarianceError,
    DimensionError,
    NoDescentDirectionError,
    NonFiniteError,
    SmoothHessError,
    TrainingDivergedError,
    UnsupportedActivationError,
)
from .estimator import (
    EstimatorConfig,
    InteractionEstimate,
    estimate,
    estimate_streaming,
    smoothgrad,
)
from .evaluation import (
    AttackResult,
    TaylorSurrogate,
    eigendecompose_symmetric,
    pmse,
    post_hoc_accuracy,
    surrogate_eval,
    truncate_rank,
    trust_region_attack,
)
from .net import Layer, Network, SoftmaxHead, init_mlp
from .oracles import (
    QuadraticFunction,
    quadratic_smooth_hess,
    rank1_symmetrized_eigs,
    relu_neuron_smooth,
    smoothed_value_mc,
)
from .sampling import (
    CovarianceModel,
    PerturbationStream,
    covariance_from_directions,
    sample_batch,
    sigma_for_radius,
)

__version__ = "0.1.0"

__all__ = [
    "AttackResult",
    "CovarianceModel",
    "DegenerateCovarianceError",
    "DimensionError",
    "EstimatorConfig",
    "InteractionEstimate",
    "Layer",
    "Network",
    "NoDescentDirectionError",
    "NonFiniteError",
    "PerturbationStream",
    "QuadraticFunction",
    "SmoothHessError",
    "SoftmaxHead",
    "TaylorSurrogate",
    "TrainingDivergedError",
    "UnsupportedActivationError",
    "covariance_from_directions",
    "eigendecompose_symmetric",
    "estimate",
    "estimate_streaming",
    "init_mlp",
    "pmse",
    "post_hoc_accuracy",
    "quadratic_smooth_hess",
    "rank1_symmetrized_eigs",
    "relu_neuron_smooth",
    "sample_batch",
    "sigma_for_radius",
    "smoothed_value_mc",
    "smoothgrad",
    "surrogate_eval",
    "truncate_rank",
    "trust_region_attack",
]
