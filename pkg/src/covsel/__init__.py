"""Covariance model selection on a fixed grid with a data-driven penalty.

Estimates the covariance of a centred process from i.i.d. replications by
projecting the empirical covariance onto basis-induced model subspaces and
picking the model that minimises a penalised empirical loss, where the
penalty is computed entirely from the data.
"""

from ._kernels import backend_name
from .dictionary import (
    BasisFamily,
    DegenerateCollectionError,
    ModelCollection,
    ModelSpec,
    build_collection,
    build_design,
    eval_basis,
    make_model,
)
from .estimator import (
    ModelFit,
    SampleSet,
    empirical_cov,
    fit_all,
    fit_model,
    fourth_moment_cov_dense,
    fourth_moment_trace,
)
from .oracle import (
    RiskRecord,
    TruthSpec,
    check_quadratic_form_tail,
    check_underestimation_prob,
    check_variance_factor_mean,
    gaussian_fourth_moment_dense,
    min_fourth_moment_trace,
    oracle_model,
    risk_table,
    true_fourth_moment_trace,
    true_risk,
    true_variance_factor,
)
from .selection import (
    PenaltyConfig,
    SelectionReport,
    penalty_data_driven,
    penalty_known,
    select,
)
from .simulate import (
    ExperimentConfig,
    KernelSpec,
    kernel_to_sigma,
    psd_factor,
    run_experiment,
    sample_paths,
    uniform_grid,
)

__version__ = "0.1.0"

__all__ = [
    "BasisFamily",
    "DegenerateCollectionError",
    "ExperimentConfig",
    "KernelSpec",
    "ModelCollection",
    "ModelFit",
    "ModelSpec",
    "PenaltyConfig",
    "RiskRecord",
    "SampleSet",
    "SelectionReport",
    "TruthSpec",
    "backend_name",
    "build_collection",
    "build_design",
    "check_quadratic_form_tail",
    "check_underestimation_prob",
    "check_variance_factor_mean",
    "empirical_cov",
    "eval_basis",
    "fit_all",
    "fit_model",
    "fourth_moment_cov_dense",
    "fourth_moment_trace",
    "gaussian_fourth_moment_dense",
    "kernel_to_sigma",
    "make_model",
    "min_fourth_moment_trace",
    "oracle_model",
    "penalty_data_driven",
    "penalty_known",
    "psd_factor",
    "risk_table",
    "run_experiment",
    "sample_paths",
    "select",
    "true_fourth_moment_trace",
    "true_risk",
    "true_variance_factor",
    "uniform_grid",
]
