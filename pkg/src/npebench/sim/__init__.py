"""Benchmark simulators: priors, likelihoods, preprocessing and oracles."""

from .base import (Problem, SimulatorSpec, get_problem, inverse_preprocess,
                   preprocess, registered_names, sample_dataset, sample_prior)
from .conjugate import (ConjugatePosterior, DirichletPosterior, GammaPosterior,
                        NormalInvGammaPosterior, NormalInvWishartPosterior)
from .io import dump_dataset, load_dataset
from .processes import (fbm_covariance, fbm_sample_path, gk_quantile,
                        gk_transform, lv_integrate, var_sample_coefficients)

from . import problems as _problems  # noqa: F401  (populates the registry)

__all__ = [
    "Problem", "SimulatorSpec", "get_problem", "registered_names",
    "sample_prior", "sample_dataset", "preprocess", "inverse_preprocess",
    "ConjugatePosterior", "DirichletPosterior", "GammaPosterior",
    "NormalInvGammaPosterior", "NormalInvWishartPosterior",
    "dump_dataset", "load_dataset",
    "gk_quantile", "gk_transform", "fbm_covariance", "fbm_sample_path",
    "lv_integrate", "var_sample_coefficients",
]
