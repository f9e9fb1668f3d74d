"""Built-in models satisfying the sampler's model contract."""

from .base import Model
from .conjugate import (
    ConjugateData,
    ConjugateGaussianModel,
    fold_deleted_predictive_log_density,
    posterior_mean_location,
)
from .dns import DEFAULT_DECAY, DEFAULT_MATURITIES, DnsData, DnsModel, factor_loadings
from .multilevel import MultilevelData, MultilevelNormalModel
from .spatial import SpatialData, SpatialMvnModel
from .synthetic import (
    ConjugateShape,
    DnsShape,
    M5Shape,
    RadonShape,
    generate_synthetic,
)

__all__ = [
    "Model",
    "ConjugateData",
    "ConjugateGaussianModel",
    "fold_deleted_predictive_log_density",
    "posterior_mean_location",
    "DnsData",
    "DnsModel",
    "factor_loadings",
    "DEFAULT_MATURITIES",
    "DEFAULT_DECAY",
    "MultilevelData",
    "MultilevelNormalModel",
    "SpatialData",
    "SpatialMvnModel",
    "ConjugateShape",
    "RadonShape",
    "DnsShape",
    "M5Shape",
    "generate_synthetic",
]
