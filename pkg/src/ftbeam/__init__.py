"""Fractional-time two-zone MISO downlink beamforming toolbox.

The top level re-exports the pieces most users need: scenario construction,
the three solvers with the scheme registry, rate/feasibility evaluation, and
the Monte Carlo experiment harness.  Submodules stay importable directly for
the lower-level machinery (surrogates, subproblem assembly, the cone-program
backend).
"""

from .baselines import (  # noqa: F401
    SCHEMES,
    SchemeInfo,
    UnsupportedSchemeError,
    conventional_dl_solve,
    get_solver,
)
from .harness import (  # noqa: F401
    COLUMNS,
    PMAX_GRID_DBM,
    RBAR_GRID_BITS,
    ConfigError,
    ExperimentConfig,
    RunRecord,
    child_seed,
    format_summary,
    load_config,
    run_experiment,
    summarize,
    write_records,
)
from .rates import (  # noqa: F401
    FeasibilityReport,
    TimeSplit,
    check_feasibility,
    min_throughput,
    per_user_rates,
    sum_throughput,
)
from .sca import (  # noqa: F401
    CONVERGED,
    INFEASIBLE_INIT,
    MAX_ITERS,
    SUBPROBLEM_FAILURE,
    Solution,
    maxmin_solve,
    sca_solve,
)
from .scenario import (  # noqa: F401
    LN2,
    ChannelRealization,
    SystemConfig,
    noise_power_w,
    pathloss_db,
    sample_scenario,
)
