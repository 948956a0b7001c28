"""adopt-lab: a small laboratory for adaptive gradient methods.

Implements a family of first-order optimizers around one stateful-step
interface, analytic problems whose gradient noise defeats some of them, a
reproducible run harness, and a CLI that renders figures next to CSV/JSON
output.
"""
from .harness import (
    ClipSchedule,
    RunDivergedError,
    RunRecord,
    RunSpec,
    Schedule,
    clip_at,
    convergence_metric,
    detect_convergence,
    execute_run,
    lr_at,
    rng_stream,
    run_experiment,
    run_summary,
    splitmix64,
    sweep,
    write_series_csv,
    write_summary_json,
)
from .optimizers import (
    INIT_GRADIENT_KINDS,
    OPTIMIZER_KINDS,
    OptimizerConfig,
    OptimizerState,
    default_config,
    init_state,
    resolve_stepper,
)
from .problems import (
    GradientOracle,
    make_oracle,
    project,
    shuffle_update_expectation,
)

__version__ = "0.1.0"

__all__ = [
    "ClipSchedule",
    "GradientOracle",
    "INIT_GRADIENT_KINDS",
    "OPTIMIZER_KINDS",
    "OptimizerConfig",
    "OptimizerState",
    "RunDivergedError",
    "RunRecord",
    "RunSpec",
    "Schedule",
    "clip_at",
    "convergence_metric",
    "default_config",
    "detect_convergence",
    "execute_run",
    "init_state",
    "lr_at",
    "make_oracle",
    "project",
    "resolve_stepper",
    "rng_stream",
    "run_experiment",
    "run_summary",
    "shuffle_update_expectation",
    "splitmix64",
    "sweep",
    "write_series_csv",
    "write_summary_json",
    "__version__",
]
