"""Spectral regularization algorithms for kernel regression and rate experiments."""

from .diagnostics import (
    DiagnosticReport,
    approximation_error,
    edr_fit,
    effective_dimension,
    embedding_constant,
    lq_norm_estimate,
)
from .estimator import (
    FittedEstimator,
    NonPSDGramError,
    Sample,
    SampleSet,
    fit,
    predict,
    regularization_from_n,
    ridge_closed_form,
)
from .filters import Filter, gradient_flow_filter, krr_filter, spectral_cutoff_filter, validate_filter
from .harness import ExperimentConfig, fit_rate, l2_error_simpson, run_experiment
from .mercer import (
    EigenSystem,
    Kernel,
    dot_product_embedding_check,
    mercer_partial_sum,
    min_kernel,
    min_kernel_eigensystem,
    periodic_kernel_eigensystem,
    sobolev_h1_kernel,
    sphere_harmonic_dims,
)
from .targets import (
    hard_instance,
    interpolation_norm,
    min_series_target,
    pack_hypercube,
    sample_data,
    sobolev_series_target,
)

__version__ = "0.1.0"
