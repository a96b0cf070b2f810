"""Stallings core graphs, polymatroids and word measures at desk scale."""

from .errors import CapExceeded, LabError, PreconditionError, TheoremViolation

__version__ = "0.1.0"

__all__ = [
    "CapExceeded",
    "LabError",
    "PreconditionError",
    "TheoremViolation",
    "__version__",
]
