"""Exact Walsh-Paley constructions: flat polynomials, interval approximation,
universal functions with signs and weighted greedy approximation."""

from walshuniv.dyadic_core import (
    BudgetError,
    DyadicInterval,
    DyadicRational,
    IntervalSet,
    StepFunction,
    WeightSpec,
    lp_norm,
    measure,
    refine,
    restrict_norm,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "DyadicInterval",
    "DyadicRational",
    "IntervalSet",
    "StepFunction",
    "WeightSpec",
    "lp_norm",
    "measure",
    "refine",
    "restrict_norm",
]
