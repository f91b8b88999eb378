"""Tracking the minimizer of a time-varying stochastic risk with
predictor-corrector and gradient-descent updates."""

from .core import (
    DerivativeBundle,
    InsufficientHistory,
    NonFiniteValue,
    ObservationBuffer,
    RngStream,
    SingularHessian,
    TimeGrid,
    TrackingError,
    solve_spd,
    time_of,
)
from .estimators import (
    AlphaScheme,
    BetaScheme,
    InfeasibleConstraints,
    InvalidWindow,
    MovingAverage,
    alpha_weights,
    beta_weights,
    min_norm_weights_oracle,
    weighted_combination,
    window_m,
    window_p,
)
from .config import ConfigError, build_config, load_toml, preset
from .harness import (
    EtaRule,
    ExperimentConfig,
    RunResult,
    SweepSummary,
    emit_csv,
    fit_rate_slope,
    monte_carlo,
    run_once,
    summarize,
)
from .scenarios import (
    LeastSquaresScenario,
    ObjectTrackingScenario,
    PerformativeScenario,
    QuadraticDriftScenario,
    QuadraticScenario,
)
from .trackers import (
    Method,
    TrackerConfig,
    TrackerState,
    exact_prediction_drift,
    gd_step,
    pc_step,
)

__version__ = "0.1.0"
