"""Stochastic exit-time control: HJB grid solver, SDE simulation, and
stochastic-Perron verification."""

from ._exitperron import (
    BoundaryViolation,
    ParseError,
    Problem,
    Solution,
    catalog_names,
    estimate_value,
    estimate_value_optimal,
    oracle_available,
    oracle_value,
    refine_study,
    solve,
    verify_constant_certificates,
)

__all__ = [
    "BoundaryViolation",
    "ParseError",
    "Problem",
    "Solution",
    "catalog_names",
    "estimate_value",
    "estimate_value_optimal",
    "oracle_available",
    "oracle_value",
    "refine_study",
    "solve",
    "verify_constant_certificates",
]
