"""Guaranteed bounds on the output distribution of discrete probabilistic programs.

Two complementary analyses are provided: exact lower bounds with a residual
mass cap obtained by unrolling loops, and upper bounds from eventually
geometric contraction invariants found by constraint solving.
"""

from .egd import Egd
from .lang import CoreProgram, ParseError, parse, pretty, unroll
from .measure import (MassInterval, StateDist, finite_moment, lower_semantics,
                      normalization_bounds, posterior_bounds, residual_mass)
from .report import AnalysisOptions, BoundReport, analyze, render
from .solve import SolveReport, optimize_linear, penalty_solve, verify_exact
from .support import SupportBox, analyze_support, widen
from .symgeo import ConstraintSystem, GenOptions, Objective, generate, relinearize

__all__ = [
    "AnalysisOptions", "BoundReport", "ConstraintSystem", "CoreProgram", "Egd", "GenOptions",
    "MassInterval", "Objective", "ParseError", "SolveReport", "StateDist", "SupportBox",
    "analyze", "analyze_support", "finite_moment", "generate", "lower_semantics",
    "normalization_bounds", "optimize_linear", "parse", "penalty_solve", "posterior_bounds",
    "pretty", "relinearize", "render", "residual_mass", "unroll", "verify_exact", "widen",
]
