"""Transport potentials and densities under fractional gradient constraints.

A numpy/scipy library for the constrained variational system

    L^s u - D^s.(lambda D^s u) = f - D^s.f_vec,
    |D^s u| <= g,  lambda >= 0,  lambda (|D^s u| - g) = 0,

on a periodic computational box, solved by exponential penalization of the
constraint plus a q-power regularization of the (possibly degenerate)
operator, with independent first-order and brute-force oracles.
"""

from .grid import (
    DomainMask,
    GridSpec,
    OmegaShape,
    ScalarField,
    VectorField,
    ball,
    bump,
    extend_by_zero,
    holder_seminorm,
    interval,
    lp_norm,
    random_bumps,
    read_field,
    rectangle,
    slice_to_csv,
    write_field,
)
from .riesz import (
    FracOrder,
    adjointness_residual,
    frac_divergence_spectral,
    frac_gradient_direct,
    frac_gradient_spectral,
    gamma_coeff,
    kernel_norm_ball,
    kernel_norm_tail,
    localization_error,
    mu_coeff,
    poincare_check,
    riesz_convolve,
    riesz_symbol,
    sphere_area,
    tail_decay_check,
)

__version__ = "0.1.0"

from .forms import (  # noqa: E402
    CoercivityReport,
    EmpiricalConstants,
    OperatorData,
    SourceData,
    Threshold,
    bilinear_apply,
    coercivity_margin,
    constant_source,
    constant_threshold,
    estimate_constants,
    isotropic_operator,
    linear_apply,
    threshold_replace,
)
from .oracle import (  # noqa: E402
    AnalyticBenchmark,
    analytic_mk_1d,
    analytic_torsion_1d,
    brute_force_qp,
    direct_linear_solve,
    pdhg_solve,
)
from .penalty import (  # noqa: E402
    KKTReport,
    PenaltyFn,
    Solution,
    SolverConfig,
    continuation_solve,
    discrete_energy,
    kkt_report,
    penalized_residual,
    penalty_value,
    solve_fixed_eps,
)
from .runs import (  # noqa: E402
    RunConfig,
    config_from_mapping,
    load_config,
    run_dependence,
    run_localize,
    run_oracle,
    run_solve,
    run_verify,
)
