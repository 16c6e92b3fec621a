"""Spectral method-of-moments estimators for multi-view mixtures and HMMs."""

from ._core import (
    Error,
    HmmParams,
    MixtureParams,
    align_columns,
    estimate,
    estimate_population,
    hmm_to_three_view,
    incoherence,
    nonident_demo,
    pairs,
    population_pairs,
    project_to_simplex,
    random_mixture_model,
    random_partition,
    recover_covariances,
    recover_hmm,
    recover_hmm_population,
    reference_hmm,
    sample,
    sample_hmm,
    topic_reference_model,
)

__all__ = [
    "Error",
    "HmmParams",
    "MixtureParams",
    "align_columns",
    "estimate",
    "estimate_population",
    "hmm_to_three_view",
    "incoherence",
    "nonident_demo",
    "pairs",
    "population_pairs",
    "project_to_simplex",
    "random_mixture_model",
    "random_partition",
    "recover_covariances",
    "recover_hmm",
    "recover_hmm_population",
    "reference_hmm",
    "sample",
    "sample_hmm",
    "topic_reference_model",
]
