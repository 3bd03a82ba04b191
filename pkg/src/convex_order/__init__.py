"""Convex, cxp and cxpi orders on finitely supported measures.

Decides orderings with LP certificates, computes the C_x sets and witness
simplices behind one-point transfer kernels, and checks convex concentration
inequalities for jump-diffusion terminal values by seeded Monte Carlo.
"""
__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import (BadDirection, BadSpec, ConvexOrderError, DimensionMismatch, EmptySubset,
                     GridMismatch, NoWitness, NotOrderedOnLine, NotPsd, NotSymmetric,
                     NumericalFailure, OrthantViolation, Stalled, ZeroMass)
from .geometry import (Polytope, WitnessSimplex, cx_set, cx_set_subset, find_witness, support_hull,
                       threshold, thresholds)
from .lp_core import LinearProgram, LpOutcome, Status, solve
from .measures import DiscreteMeasure, barycenter, project, survival, total_mass
from .order import (ConvexSeparator, Coupling, Kernel, Relation, Verdict, build_coupling,
                    build_kernel_iterative, check_mixed_local_condition, check_order,
                    check_support_hull, exact_coupling, exact_separator, find_separator)
from .psd import is_psd, psd_leq, sqrt_psd, trace_inner
from .sim import (CompareReport, PoissonMeasureSpec, StrategySpec, compare, convex_battery,
                  deviation_bound, gaussian_exact, simulate_terminal, verify_hypotheses)
