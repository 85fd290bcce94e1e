"""Stabilised weighted subsampling for recursive likelihoods.

Unbiased subsampled estimators of GARCH-family log-likelihoods and their
gradients, with truncated power-law decaying sampling probabilities,
principled cost-variance tuning, and pseudo-marginal MCMC / variational
inference engines built on top.
"""

from . import estimators, harness, inference, models, scheme, tuning
from .exceptions import RecursubError

__version__ = "0.1.0"

__all__ = [
    "RecursubError",
    "estimators",
    "harness",
    "inference",
    "models",
    "scheme",
    "tuning",
    "__version__",
]
