"""Deep embedded refined clustering (DERC) for beta-value matrices.

Pipeline: statistical prescreening -> autoencoder / VAE dimensionality
reduction -> K-means centroid initialisation -> joint reconstruction +
clustering optimisation -> unsupervised evaluation.
"""

__version__ = "0.1.0"

from .errors import DercError, ParseError, ValidationError, NumericError

__all__ = [
    "DercError",
    "ParseError",
    "ValidationError",
    "NumericError",
    "__version__",
]
