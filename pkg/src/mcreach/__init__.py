"""Grid-free Monte Carlo solver for viscous Hamilton-Jacobi reachability."""

from .core import (
    ConfigError,
    ContractError,
    EstimatorConfig,
    EvalSet,
    GridLayout,
    NumericalError,
    Phase,
    ValueField,
    make_eval_grid,
    random_eval_set,
    rng_stream,
    standard_normal_draws,
)
from .estimator import (
    FrozenCoeff,
    KernelSample,
    estimate_gradient,
    estimate_value,
    hoeffding_bound,
    required_samples,
    update_coefficient,
)
from .gridref import GridSolution, UnsupportedDimensionError, make_grid_axes, sample_on, solve_grid_brt
from .metrics import (
    ConcentrationResult,
    MemoryReport,
    UndefinedRelativeError,
    concentration_experiment,
    error_metrics,
    measure_peak,
    memory_report,
)
from .picard import ContractionReport, PicardState, contraction_diagnostics, run_picard
from .reach import TimeSchedule, TubeField, extract_zero_contour, solve_brat, solve_brt
from .systems import (
    SystemSpec,
    bounded_quadratic_system,
    double_integrator_system,
    dubins_system,
    get_system,
    multiagent_system,
    quadratic_system,
    rockets_system,
    speed_regime,
    with_disk_obstacle,
)

__version__ = "0.1.0"
