"""recurlab: recurrence statistics of one-dimensional maps.

Simulation engine (exact dyadic and big fixed-point orbits), the averaged-
Poisson limit law G(tau, k), almost-sure rate experiments, and the
short-return diagnostics, wired together by a Monte Carlo harness and a CLI.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DomainError,
    PrecisionAbort,
    RecurlabError,
    RunFailure,
    UlamConvergenceError,
    UnsupportedDensityError,
)
from .maps import (
    GOLDEN,
    DensityModel,
    DensityPiece,
    MapModel,
    eval_density,
    eval_map,
    invariant_cdf,
    make_map,
    sample_invariant,
    sample_invariant_batch,
)
from .orbit import (
    DyadicStream,
    FixedReal,
    OrbitBudget,
    PrecisionPolicy,
    dyadic_window,
    estimate_lyapunov,
    iterate_stream,
    required_bits,
)
from .recurrence import (
    PsiSpec,
    RecurrenceSeries,
    hitting_count,
    max_psi_process,
    min_distance_process,
    recurrence_count,
)
from .limitlaw import (
    EvtValue,
    LimitLawTable,
    PmfValue,
    QuadratureConfig,
    SummabilityResult,
    TailClassification,
    as_summability_check,
    build_limit_table,
    closed_form_pmf,
    cusp_pmf_gamma_identity,
    evt_distribution,
    mean_check,
    normalization_check,
    poisson_like_pmf,
    rho_square_integral,
    tail_classification,
)
from .ulam import density_l1_distance, ulam_density
from .experiments import (
    AssumptionReport,
    DistributionalResult,
    EmpiricalPmf,
    ExperimentConfig,
    chen_stein_e2,
    check_assumption_A2,
    doubling_ej_exact,
    e2_exact_doubling,
    run_almost_sure,
    run_distributional,
    wilson_ci,
)
