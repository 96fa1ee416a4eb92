"""Error characterization of noisy LASSO recovery with solvers and a seeded harness."""

from .theory import (
    ContourCurve,
    PhaseParams,
    TheoryPoint,
    beta_on_contour,
    characterize,
    contour_curve,
    l1_threshold_alpha,
    optimal_nu,
    q_signed,
    q_unsigned,
)

__version__ = "0.1.0"

__all__ = [
    "ContourCurve",
    "PhaseParams",
    "TheoryPoint",
    "beta_on_contour",
    "characterize",
    "contour_curve",
    "l1_threshold_alpha",
    "optimal_nu",
    "q_signed",
    "q_unsigned",
]
