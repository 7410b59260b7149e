"""Bayesian mixed membership models for grouped multivariate categorical data."""

__version__ = "0.1.0"

from .data import CategoricalDataset, GroupPartition, Hyperparams, default_hyperparams, load_dataset, load_schema
from .gibbs import ChainConfig, MmmModel, run_chain
from .samples import ChainSamples, load_archive, save_archive

__all__ = [
    "__version__",
    "CategoricalDataset",
    "GroupPartition",
    "Hyperparams",
    "default_hyperparams",
    "load_dataset",
    "load_schema",
    "ChainConfig",
    "MmmModel",
    "run_chain",
    "ChainSamples",
    "load_archive",
    "save_archive",
]
