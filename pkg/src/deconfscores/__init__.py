"""Deconfounding scores for ATT estimation under weak overlap."""

from . import (dataio, dgp, errors, estimators, glm, harness, overlap,
               scores)

__version__ = "0.1.0"

__all__ = ["dataio", "dgp", "errors", "estimators", "glm", "harness",
           "overlap", "scores", "__version__"]
