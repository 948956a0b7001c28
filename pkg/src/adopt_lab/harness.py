"""Run loop, schedules, seeded streams, sweeps, and series/summary output.

Design notes that matter for reproducibility:

* Every run owns a random.Random seeded through splitmix64, so seeds that
  differ in one bit still give unrelated streams, and the same (seed,
  stream) pair always replays byte-identically.
* Records keep the full series in memory; CSV output may be decimated but
  always includes the final step.
* Floats are written with repr(), which round-trips exactly, so reruns
  produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .optimizers import (
    INIT_GRADIENT_KINDS,
    OptimizerConfig,
    default_config,
    init_state,
    resolve_stepper,
    state_finite,
)
from .problems import GradientOracle, make_oracle, project
from .vectors import ParamVector, power_norm

SCHEDULE_CONSTANT = "constant"
SCHEDULE_INV_SQRT = "inv-sqrt"
SCHEDULE_TOY_DECAY = "toy-decay"
SCHEDULE_KINDS = (SCHEDULE_CONSTANT, SCHEDULE_INV_SQRT, SCHEDULE_TOY_DECAY)

CLIP_NONE = "none"
CLIP_CONSTANT = "constant"
CLIP_POWER_QUARTER = "power-quarter"
CLIP_KINDS = (CLIP_NONE, CLIP_CONSTANT, CLIP_POWER_QUARTER)

SERIES_HEADER = ("step", "theta_or_norm", "loss", "grad_norm",
                 "true_grad_norm", "lr", "clip")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule; alpha is the scale, a the decay rate."""

    kind: str
    alpha: float
    a: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.alpha <= 0:
            raise ValueError(f"schedule alpha must be positive, got {self.alpha}")
        if self.kind == SCHEDULE_TOY_DECAY and self.a < 0:
            raise ValueError(f"decay rate a must be nonnegative, got {self.a}")

    @staticmethod
    def constant(alpha: float) -> "Schedule":
        return Schedule(SCHEDULE_CONSTANT, alpha)

    @staticmethod
    def inv_sqrt(alpha: float) -> "Schedule":
        return Schedule(SCHEDULE_INV_SQRT, alpha)

    @staticmethod
    def toy_decay(alpha: float, a: float) -> "Schedule":
        return Schedule(SCHEDULE_TOY_DECAY, alpha, a)


def lr_at(schedule: Schedule, t: int) -> float:
    """Learning rate for 1-based step t."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    if schedule.kind == SCHEDULE_CONSTANT:
        return schedule.alpha
    if schedule.kind == SCHEDULE_INV_SQRT:
        return schedule.alpha / math.sqrt(t)
    return schedule.alpha / math.sqrt(1.0 + schedule.a * t)


@dataclass(frozen=True)
class ClipSchedule:
    kind: str
    c: float = math.inf

    def __post_init__(self):
        if self.kind not in CLIP_KINDS:
            raise ValueError(f"unknown clip kind {self.kind!r}")
        if self.kind != CLIP_NONE and not (self.c > 0):
            raise ValueError(f"clip scale must be positive, got {self.c}")

    @staticmethod
    def none() -> "ClipSchedule":
        return ClipSchedule(CLIP_NONE)

    @staticmethod
    def constant(c: float) -> "ClipSchedule":
        return ClipSchedule(CLIP_CONSTANT, c)

    @staticmethod
    def power_quarter(c: float) -> "ClipSchedule":
        return ClipSchedule(CLIP_POWER_QUARTER, c)


def clip_at(clip_schedule: ClipSchedule, t: int) -> float:
    """Clip bound for 1-based step t; infinity when clipping is off."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    if clip_schedule.kind == CLIP_NONE:
        return math.inf
    if clip_schedule.kind == CLIP_CONSTANT:
        return clip_schedule.c
    return clip_schedule.c * t ** 0.25


def splitmix64(x: int) -> int:
    """One splitmix64 output for prior state x (matches the C reference)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def rng_stream(base_seed: int, run_index: int) -> random.Random:
    """Independent random.Random for (seed, stream) with avalanche mixing."""
    mixed = splitmix64((base_seed & _MASK64) ^ splitmix64(run_index & _MASK64))
    return random.Random(mixed)


class RunDivergedError(RuntimeError):
    """Raised when optimizer state or parameters go non-finite.

    Carries the failing step index and the partial record collected so far.
    """

    def __init__(self, step_index: int, record: "RunRecord"):
        super().__init__(f"non-finite state at step {step_index}")
        self.step_index = step_index
        self.record = record


@dataclass
class RunRecord:
    """Full in-memory trace of one run plus its configuration echo."""

    problem: str
    optimizer: str
    config_snapshot: dict
    seed: int
    steps: List[int] = field(default_factory=list)
    theta_or_norm: List[float] = field(default_factory=list)
    loss: List[Optional[float]] = field(default_factory=list)
    grad_norm: List[float] = field(default_factory=list)
    true_grad_norm: List[Optional[float]] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    clip: List[float] = field(default_factory=list)
    theta_series: Optional[List[tuple]] = None
    final_theta: Optional[ParamVector] = None
    convergence_target: Optional[float] = None
    error: Optional[str] = None


def _scalar_norm(v) -> Optional[float]:
    if v is None:
        return None
    if type(v) is float:
        return abs(v)
    if isinstance(v, (int, np.floating)):
        return abs(float(v))
    return power_norm(v, 2.0)


def run_experiment(oracle: GradientOracle, kind: str, config: OptimizerConfig,
                   schedule: Schedule, clip_schedule: ClipSchedule, steps: int,
                   theta0: Union[float, Sequence[float]], seed: int,
                   on_step: Optional[Callable] = None,
                   stream: int = 0) -> RunRecord:
    """Run one optimizer on one oracle and record every step.

    Per-row semantics: theta_or_norm is the iterate after step t; loss,
    grad_norm, and true_grad_norm are measured at the pre-step point where
    the gradient sample was drawn. Optimizers that need a seeding gradient
    consume one extra oracle draw before step 1 without moving theta; that
    draw is not counted in steps. Non-finite parameters or optimizer state
    abort with RunDivergedError naming the failing step.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    rng = rng_stream(seed, stream)
    if oracle.dim == 1:
        theta = float(theta0)
    elif np.isscalar(theta0):
        theta = np.full(oracle.dim, float(theta0))
    else:
        theta = np.asarray(theta0, dtype=float).copy()
        if theta.shape != (oracle.dim,):
            raise ValueError(
                f"theta0 shape {theta.shape} does not match oracle dim {oracle.dim}"
            )

    state = init_state(theta)
    stepper = resolve_stepper(kind, config, state)
    box = oracle.feasible_box

    snapshot = {
        "problem": oracle.label,
        "optimizer": kind,
        "beta1": config.beta1,
        "beta2": config.beta2,
        "epsilon": config.epsilon,
        "eps_mode": config.eps_mode,
        "bias_correction": config.bias_correction,
        "m_init_mode": config.m_init_mode,
        "weight_decay": config.weight_decay,
        "wd_mode": config.wd_mode,
        "schedule": {"kind": schedule.kind, "alpha": schedule.alpha,
                     "a": schedule.a},
        "clip": ({"kind": clip_schedule.kind} if clip_schedule.kind == CLIP_NONE
                 else {"kind": clip_schedule.kind, "c": clip_schedule.c}),
        "steps": steps,
        "theta0": (float(theta) if oracle.dim == 1 else
                   [float(x) for x in theta]),
        "seed": seed,
    }
    if kind == "adashift":
        snapshot["adashift_window"] = config.adashift_window
    record = RunRecord(
        problem=oracle.label,
        optimizer=kind,
        config_snapshot=snapshot,
        seed=seed,
        convergence_target=getattr(oracle, "convergence_target", None),
    )
    keep_theta = 1 < oracle.dim <= 4
    if keep_theta:
        record.theta_series = []

    if kind in INIT_GRADIENT_KINDS:
        g0 = oracle.sample(theta, rng)
        stepper(theta, g0, 0.0, 0, math.inf)

    scalar = oracle.dim == 1
    for t in range(1, steps + 1):
        lr = lr_at(schedule, t)
        c = clip_at(clip_schedule, t)
        true_g = oracle.true_gradient(theta)
        g = oracle.sample(theta, rng)
        loss_val = getattr(oracle, "last_loss", None)
        if loss_val is None:
            loss_val = oracle.true_loss(theta)
        # divergence is detected below, so let overflow produce inf quietly
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            theta = stepper(theta, g, lr, t, c)
        if box is not None:
            theta = project(theta, box)
        if not state_finite(state, theta):
            record.error = f"non-finite state at step {t}"
            record.final_theta = theta
            raise RunDivergedError(t, record)
        record.steps.append(t)
        record.theta_or_norm.append(theta if scalar else power_norm(theta, 2.0))
        record.loss.append(loss_val)
        record.grad_norm.append(abs(g) if scalar else power_norm(g, 2.0))
        record.true_grad_norm.append(_scalar_norm(true_g))
        record.lr.append(lr)
        record.clip.append(c)
        if keep_theta:
            record.theta_series.append(tuple(float(x) for x in theta))
        if on_step is not None:
            on_step(t, theta)

    record.final_theta = theta
    return record


def convergence_metric(record: RunRecord) -> Optional[float]:
    """Smallest squared true-gradient norm seen anywhere along the run."""
    best = None
    for v in record.true_grad_norm:
        if v is None:
            continue
        if best is None or v < best:
            best = v
    return None if best is None else best * best


def detect_convergence(record: RunRecord, target: float, tol: float = 0.05,
                       window: int = 1000) -> Optional[int]:
    """First step from which |theta - target| <= tol holds for a full window.

    Returns the step index at the start of the first such stretch, or None
    if the run never settles that long.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    streak = 0
    for i, th in enumerate(record.theta_or_norm):
        if abs(th - target) <= tol:
            streak += 1
            if streak >= window:
                return record.steps[i - window + 1]
        else:
            streak = 0
    return None


@dataclass(frozen=True)
class RunSpec:
    """One cell of a sweep; oracles are built fresh per run."""

    problem: str
    problem_params: dict
    optimizer: str
    config: OptimizerConfig
    schedule: Schedule
    clip: ClipSchedule
    steps: int
    theta0: Union[float, tuple]
    seed: int
    stream: int = 0
    label: str = ""


def execute_run(spec: RunSpec) -> RunRecord:
    """Run one RunSpec, turning failures into error-bearing records."""
    try:
        oracle = make_oracle(spec.problem, **spec.problem_params)
        return run_experiment(oracle, spec.optimizer, spec.config,
                              spec.schedule, spec.clip, spec.steps,
                              spec.theta0, spec.seed, stream=spec.stream)
    except RunDivergedError as err:
        return err.record
    except Exception as err:  # config or oracle errors become data, not crashes
        record = RunRecord(problem=spec.problem, optimizer=spec.optimizer,
                           config_snapshot={"label": spec.label},
                           seed=spec.seed)
        record.error = f"{type(err).__name__}: {err}"
        return record


def sweep(specs: Sequence[RunSpec], workers: Optional[int] = None) -> List[RunRecord]:
    """Execute runs in input order; parallel and serial results match.

    Each run owns its oracle and rng stream, so a thread pool changes only
    wall time, never results.
    """
    specs = list(specs)
    if workers is not None and workers > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(execute_run, specs))
    return [execute_run(s) for s in specs]


def _format_cell(x: Optional[float]) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return ""
    return repr(x)


def write_series_csv(record: RunRecord, path, every: int = 1) -> None:
    """Write the series, keeping every-th row plus always the final row."""
    if every < 1:
        raise ValueError(f"every must be >= 1, got {every}")
    n = len(record.steps)
    indices = list(range(0, n, every))
    if n and indices[-1] != n - 1:
        indices.append(n - 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for i in indices:
            writer.writerow([
                record.steps[i],
                _format_cell(record.theta_or_norm[i]),
                _format_cell(record.loss[i]),
                _format_cell(record.grad_norm[i]),
                _format_cell(record.true_grad_norm[i]),
                _format_cell(record.lr[i]),
                _format_cell(record.clip[i]),
            ])


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def run_summary(record: RunRecord, tol: float = 0.05,
                window: int = 1000) -> dict:
    """JSON-safe digest of one run: config echo, endpoint, convergence."""
    final = record.theta_or_norm[-1] if record.theta_or_norm else None
    summary = {
        "config": _json_safe(record.config_snapshot),
        "problem": record.problem,
        "optimizer": record.optimizer,
        "seed": record.seed,
        "recorded_steps": len(record.steps),
        "final_theta_or_norm": _json_safe(final),
        "metric": _json_safe(convergence_metric(record)),
        "error": record.error,
    }
    if record.convergence_target is not None:
        summary["convergence_target"] = record.convergence_target
        summary["convergence_step"] = (
            detect_convergence(record, record.convergence_target, tol, window)
            if record.theta_or_norm else None
        )
    if record.final_theta is not None:
        if type(record.final_theta) is float:
            summary["final_theta"] = _json_safe(record.final_theta)
        elif getattr(record.final_theta, "size", 0) <= 4:
            summary["final_theta"] = [
                _json_safe(float(x)) for x in np.atleast_1d(record.final_theta)
            ]
    return summary


def write_summary_json(obj, path) -> None:
    """Sorted-keys, indented JSON with a trailing newline; no NaN/inf."""
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
    with open(path, "w") as fh:
        fh.write(text + "\n")
