"""Laplace-Floquet analysis of ionization by time-periodic potentials."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ClassificationError,
    ConfigError,
    ContractionError,
    DomainError,
    FitQualityError,
    FloquetError,
    NearSingularError,
    NonSimplePoleError,
    ResolutionError,
    ValidityError,
)
