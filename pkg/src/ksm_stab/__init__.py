"""Existence criteria for multiplier Hermitian-Einstein metrics on
toric-fiber-bundle Fano manifolds, reduced to convex analysis on the dual
polytope: polytope validation, weighted barycenter criteria, fiber-field
solvers, Ding-functional stability probes and a real Monge-Ampere solver."""

__version__ = "0.1.0"

from .convex import ConvexDualGrid, PLConvex, grid_from_values
from .datasets import dataset_names, load_dataset
from .field_solver import (
    SolveReport,
    find_tau0,
    path_interval_1d,
    solve_general,
    solve_path_1d,
    solve_soliton,
)
from .functionals import (
    FiberField,
    Functionals,
    GStats,
    Verdict,
    g_stats,
    g_weight,
    normalize_field,
    stability_verdict,
)
from .ksm import (
    HStats,
    KSMData,
    h_stats,
    h_weight,
    make_ksm,
    reference_potential_uP,
    validate_ksm,
)
from .ma_solver import (
    AlexandrovMeasure,
    MASolution,
    alexandrov_measure,
    build_subsolution,
    minimize_ding,
    ode_residual_1d,
)
from .polytope import (
    DualPolytope,
    FanoPolytope,
    QuadratureRule,
    dual_polytope,
    integrate,
    support_function,
    validate_fano,
)
from .sigma import (
    SigmaProfile,
    check_admissible,
    check_growth,
    constant,
    custom,
    linear,
    mabuchi_log,
    tau_mix,
)

__all__ = [
    "__version__",
    "ConvexDualGrid",
    "PLConvex",
    "grid_from_values",
    "dataset_names",
    "load_dataset",
    "SolveReport",
    "find_tau0",
    "path_interval_1d",
    "solve_general",
    "solve_path_1d",
    "solve_soliton",
    "FiberField",
    "Functionals",
    "GStats",
    "Verdict",
    "g_stats",
    "g_weight",
    "normalize_field",
    "stability_verdict",
    "HStats",
    "KSMData",
    "h_stats",
    "h_weight",
    "make_ksm",
    "reference_potential_uP",
    "validate_ksm",
    "AlexandrovMeasure",
    "MASolution",
    "alexandrov_measure",
    "build_subsolution",
    "minimize_ding",
    "ode_residual_1d",
    "DualPolytope",
    "FanoPolytope",
    "QuadratureRule",
    "dual_polytope",
    "integrate",
    "support_function",
    "validate_fano",
    "SigmaProfile",
    "check_admissible",
    "check_growth",
    "constant",
    "custom",
    "linear",
    "mabuchi_log",
    "tau_mix",
]
