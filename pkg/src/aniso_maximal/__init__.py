"""Anisotropic ellipsoid covers, maximal functions and their numerical verification."""

from __future__ import annotations

from .cover import AnisotropicCover, CoverParams, compute_J, isotropic, validate_cover, variable_diagonal
from .grid import GridFunction, read_grid, write_grid
from .kernels import SeminormSpec, TestFunction, bump, gaussian, hermite_gaussian, seminorm
from .maximal import MaximalConfig, MaximalField, hl_maximal, maximal_fields
from .report import VerificationReport

__all__ = [
    "AnisotropicCover",
    "CoverParams",
    "GridFunction",
    "MaximalConfig",
    "MaximalField",
    "SeminormSpec",
    "TestFunction",
    "VerificationReport",
    "bump",
    "compute_J",
    "gaussian",
    "hermite_gaussian",
    "hl_maximal",
    "isotropic",
    "maximal_fields",
    "read_grid",
    "seminorm",
    "validate_cover",
    "variable_diagonal",
    "write_grid",
]
__version__ = "0.1.0"
