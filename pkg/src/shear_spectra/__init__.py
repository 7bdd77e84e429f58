"""Spectral workbench for perturbed monotonic shear flows on a channel.

A base shear U(y) on [-1,1] is steepened near y = 0 by a localized
perturbation, U_{m,gamma}(y) = U(y) + m*gamma^2*Gtilde(y/gamma).  The
package computes regular Rayleigh solutions through the critical layer,
Wronskians and their real-axis limits, the Sturm-Liouville threshold
amplitude m_* where a neutral embedded mode appears, the unstable
eigenvalue branch for m > m_*, nearby non-shear steady Euler states by
bifurcation continuation, and linearized time evolution as a cross-check.
"""

from .profiles import (
    HypothesisError,
    BaseProfile,
    PerturbationProfile,
    PerturbedFlow,
    PotentialQ,
    ValidationReport,
    couette,
    cubic,
    sine,
    tabulated,
    base_profile,
    gaussian_perturbation,
    perturbation_profile,
    eval_flow,
    eval_potential,
    validate,
    sobolev_distance,
)
from .mesh import GradedMesh, graded_mesh, uniform_panels
from .rayleigh import (
    ConvergenceError,
    SpectralPoint,
    RayleighSolution,
    spectral_point,
    solve_phi1,
    solve_phi2,
    assemble_regular_solution,
    wall_values,
    shoot_boundary_solution,
)
from .wronskian import (
    WronskianValue,
    BoundaryLimit,
    WronskianProbes,
    modified_wronskian,
    full_wronskian,
    boundary_limits,
    wronskian_probes,
)
from .threshold import (
    EigenReport,
    ThresholdResult,
    min_eigenvalue,
    lambda_m0,
    threshold_function_M,
    threshold_map_offset,
    delta_amplitude_map,
    find_mstar,
    distance_sweep,
)
from .tracker import (
    BranchSample,
    ModeBranch,
    ZeroCount,
    newton_root,
    continue_branch,
    howard_region,
    stability_scan,
)
from .bifurcation import (
    VorticityMap,
    SteadyState,
    BranchSweep,
    build_vorticity_map,
    choose_vorticity_map,
    kernel_mode,
    solve_steady,
    branch_sweep,
    steady_residual,
    hs_norm_deviation,
    write_steady_state,
)
from .evolution import (
    ModeState,
    EvolutionSeries,
    DampingReport,
    evolve_mode,
    growth_rate,
    damping_probe,
    eigenmode_initial,
    write_time_series,
)
from .workbench import (
    ConfigError,
    SweepCache,
    parse_config,
    serialize_config,
    run,
    aggregate_report,
)

__version__ = "0.1.0"
