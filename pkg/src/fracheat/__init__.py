"""Numerical laboratory for local solvability of fractional semilinear heat equations.

Computes fractional heat kernels and semigroup actions, iterates the mild
(Duhamel) formulation on singular initial data, verifies comparison
supersolutions, and classifies parameter regimes and initial singularities
into solvable/unsolvable.
"""

from .asymptotics import CriticalScale, RegVarFunction, h_relations_check, integral_bound_check, regvar_inverse
from .classify import (
    CaseLabel,
    ConditionReport,
    classify,
    dirac_solvable,
    necessary_check,
    necessary_envelope,
    profile_for_case,
    sufficient_check_A,
    sufficient_check_B,
    sufficient_check_C,
)
from .kernel import (
    FracParams,
    GridFunction,
    KernelError,
    KernelProfile,
    apply_semigroup,
    build_profile,
    chapman_kolmogorov_check,
    export_table,
    import_table,
    kernel_bound_ratio,
    kernel_value,
    normalization,
)
from .measures import (
    InitialMeasure,
    SingularPointError,
    SingularProfile,
    ball_mass,
    load_measure,
    profile_value,
    save_measure,
    sup_ball_mass,
)
from .nonlinearity import (
    ComparisonFunction,
    DominationError,
    Nonlinearity,
    ParameterError,
    build_majorant,
    build_minorant,
    eval_F,
    fit_minorant,
    integral_criterion,
)
from .solver import (
    SolutionTrajectory,
    SolverConfig,
    SolverOutcome,
    duhamel_residual,
    picard_sweep,
    refine_and_compare,
    solve,
)
from .supersolution import (
    ConstructionError,
    Supersolution,
    build_supersolution,
    domination_check,
    mollify_measure,
    verify_supersolution,
)

__version__ = "0.1.0"
