"""Bayesian dimension-grouped tensor decompositions for verbal autopsy data."""

__version__ = "0.1.0"

from vatensor.core import (  # noqa: E402
    CTUCKER,
    GIP,
    PARAFAC,
    ChainControl,
    ConfigError,
    DimensionError,
    LatentState,
    ModelConfig,
    ModelParams,
    VADataset,
    ValidationError,
    expand_profiles,
    row_loglik_ctucker,
    row_loglik_gip,
    validate,
)
from vatensor.chain import PosteriorDraws, run  # noqa: E402

__all__ = [
    "CTUCKER", "GIP", "PARAFAC", "ChainControl", "ConfigError", "DimensionError", "LatentState",
    "ModelConfig", "ModelParams", "PosteriorDraws", "VADataset", "ValidationError", "expand_profiles",
    "row_loglik_ctucker", "row_loglik_gip", "run", "validate",
]
