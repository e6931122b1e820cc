"""Matrix completion over finite alphabets.

Fits nuclear-norm penalized maximum-likelihood completions of partially
observed categorical matrices (multinomial logit link) with a lifted
coordinate gradient descent solver, plus a Gaussian squared-loss baseline,
divergence metrics, a simulation protocol, and file formats for
observations and models.
"""

from .gaussian import (
    GaussianModel,
    densify_gaussian,
    evaluate_gaussian,
    fit_gaussian,
    gaussian_class_probs,
    gaussian_probability_field,
)
from .link import (
    LinkConstants,
    link_constants,
    logit_probs,
    negative_log_likelihood,
    probability_field,
    field_from_dense,
    sparse_gradient,
)
from .metrics import (
    EvalReport,
    frobenius_error,
    hellinger_sq,
    kl_divergence,
    prediction_error,
    theorem2_bound,
    theorem2_lambda,
)
from .model import (
    Atom,
    AtomicModel,
    FitConfig,
    ObservationSet,
    ProbabilityField,
    densify,
    evaluate_entries,
    model_from_dense,
    svd_canonicalized,
)
from .simulate import (
    SamplingDistribution,
    make_ground_truth,
    make_sampling,
    sample_observations,
)
from .solver import (
    FitReport,
    atom_step,
    correction_step,
    fit,
    lambda_max,
    reference_fit,
)
from .topsvd import SparseMatrix, TopPair, top_singular_pair

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "AtomicModel",
    "EvalReport",
    "FitConfig",
    "FitReport",
    "GaussianModel",
    "LinkConstants",
    "ObservationSet",
    "ProbabilityField",
    "SamplingDistribution",
    "SparseMatrix",
    "TopPair",
    "atom_step",
    "correction_step",
    "densify",
    "densify_gaussian",
    "evaluate_entries",
    "evaluate_gaussian",
    "field_from_dense",
    "fit",
    "fit_gaussian",
    "frobenius_error",
    "gaussian_class_probs",
    "gaussian_probability_field",
    "hellinger_sq",
    "kl_divergence",
    "lambda_max",
    "link_constants",
    "logit_probs",
    "make_ground_truth",
    "make_sampling",
    "model_from_dense",
    "negative_log_likelihood",
    "prediction_error",
    "probability_field",
    "reference_fit",
    "sample_observations",
    "sparse_gradient",
    "svd_canonicalized",
    "theorem2_bound",
    "theorem2_lambda",
    "top_singular_pair",
]
