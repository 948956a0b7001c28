"""Command-line entry points for the experiment suite.

Each subcommand materializes a run grid, executes it through the harness,
and writes one directory per run (series.csv plus summary.json), an
experiment-level summary.json, and a rendered figure. Reruns with the same
configuration overwrite the same files with identical bytes.
"""
from __future__ import annotations

import argparse
import gzip
import json
import os
import statistics
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import harness, models, optimizers, problems, reports
from .harness import (
    ClipSchedule,
    RunRecord,
    Schedule,
    run_experiment,
    run_summary,
    write_series_csv,
    write_summary_json,
)
from .models import MLPBatchOracle, MLPSpec, mlp_init, parse_idx, synth_gaussian_classes
from .optimizers import OPTIMIZER_KINDS, OptimizerConfig, default_config

SEED_ENV_VAR = "ADOPT_LAB_SEED"

EPS_MODES = (optimizers.EPS_MAX_FLOOR, optimizers.EPS_INSIDE_SQRT)
M_INIT_MODES = (optimizers.M_INIT_FULL_FIRST_STEP, optimizers.M_INIT_ZERO)


class ConfigError(ValueError):
    """Bad configuration value; the message names the offending field."""


@dataclass
class ExperimentConfig:
    """Merged view of config-file fields and command-line flags.

    None means "use the experiment's default". Fields without a dedicated
    flag (theta0, weight_decay, batch, ...) can only come from the file.
    """

    optimizer: Optional[str] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    eps: Optional[float] = None
    eps_mode: Optional[str] = None
    m_init: Optional[str] = None
    bias_correction: Optional[bool] = None
    weight_decay: Optional[float] = None
    wd_mode: Optional[str] = None
    adashift_window: Optional[int] = None
    lr: Optional[float] = None
    schedule: Optional[str] = None
    clip: Optional[str] = None
    k: Optional[float] = None
    C: Optional[float] = None
    steps: Optional[int] = None
    seeds: Optional[List[int]] = None
    out: str = "runs"
    sampling: Optional[str] = None
    data: Optional[str] = None
    theta0: Optional[float] = None
    dim: Optional[int] = None
    sigma: Optional[float] = None
    hidden: Optional[int] = None
    batch: Optional[int] = None
    record_every: Optional[int] = None
    workers: Optional[int] = None
    problem: Optional[str] = None


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}
# file-only key for sweep grids, validated separately
_EXTRA_FILE_KEYS = {"grid"}


def _want_float(name, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config field {name!r} must be a number, got {value!r}")
    return float(value)


def _want_int(name, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"config field {name!r} must be an integer, got {value!r}")
    return value


def _want_choice(name, value, choices) -> str:
    if value not in choices:
        raise ConfigError(
            f"config field {name!r} must be one of {sorted(choices)}, got {value!r}"
        )
    return value


def _validate_field(name: str, value):
    if value is None:
        return None
    if name in ("beta1", "beta2"):
        v = _want_float(name, value)
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"config field {name!r} must lie in [0, 1], got {v}")
        return v
    if name in ("eps", "sigma"):
        v = _want_float(name, value)
        if v < 0:
            raise ConfigError(f"config field {name!r} must be nonnegative, got {v}")
        return v
    if name in ("weight_decay",):
        v = _want_float(name, value)
        if v < 0:
            raise ConfigError(f"config field {name!r} must be nonnegative, got {v}")
        return v
    if name == "lr":
        v = _want_float(name, value)
        if v <= 0:
            raise ConfigError(f"config field 'lr' must be positive, got {v}")
        return v
    if name == "k":
        v = _want_float(name, value)
        if v < 1:
            raise ConfigError(f"config field 'k' must be >= 1, got {v}")
        return v
    if name == "C":
        v = _want_float(name, value)
        if v <= 2:
            raise ConfigError(f"config field 'C' must exceed 2, got {v}")
        return v
    if name == "theta0":
        return _want_float(name, value)
    if name in ("steps", "adashift_window", "dim", "hidden", "batch",
                "record_every", "workers"):
        v = _want_int(name, value)
        if v < 1:
            raise ConfigError(f"config field {name!r} must be >= 1, got {v}")
        return v
    if name == "optimizer":
        return _want_choice(name, value, OPTIMIZER_KINDS)
    if name == "eps_mode":
        return _want_choice(name, value, EPS_MODES)
    if name == "m_init":
        return _want_choice(name, value, M_INIT_MODES)
    if name == "wd_mode":
        return _want_choice(name, value, optimizers.WD_MODES)
    if name == "sampling":
        return _want_choice(name, value, problems.SAMPLING_MODES)
    if name == "problem":
        return _want_choice(name, value, ("toy", "reddi", "shuffle", "smooth"))
    if name == "bias_correction":
        if not isinstance(value, bool):
            raise ConfigError(
                f"config field 'bias_correction' must be true or false, got {value!r}"
            )
        return value
    if name == "seeds":
        if isinstance(value, str):
            try:
                value = [int(part) for part in value.split(",") if part.strip()]
            except ValueError:
                raise ConfigError(
                    f"config field 'seeds' must be comma-separated integers, got {value!r}"
                )
        if (not isinstance(value, list) or not value
                or not all(isinstance(s, int) and not isinstance(s, bool) for s in value)):
            raise ConfigError(
                f"config field 'seeds' must be a non-empty list of integers, got {value!r}"
            )
        return list(value)
    if name in ("schedule", "clip", "out", "data"):
        if not isinstance(value, str) or not value:
            raise ConfigError(f"config field {name!r} must be a non-empty string")
        if name == "schedule":
            parse_schedule_spec(value)
        if name == "clip":
            parse_clip_spec(value)
        return value
    raise ConfigError(f"unknown config field {name!r}")


def parse_schedule_spec(spec: str) -> Schedule:
    """Parse 'constant:a', 'inv-sqrt:a', or 'toy-decay:a,rate'."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == harness.SCHEDULE_CONSTANT:
            return Schedule.constant(float(rest))
        if kind == harness.SCHEDULE_INV_SQRT:
            return Schedule.inv_sqrt(float(rest))
        if kind == harness.SCHEDULE_TOY_DECAY:
            alpha_s, _, a_s = rest.partition(",")
            return Schedule.toy_decay(float(alpha_s), float(a_s))
    except (ValueError, TypeError) as err:
        raise ConfigError(f"bad schedule spec {spec!r}: {err}")
    raise ConfigError(
        f"schedule spec {spec!r} must start with one of {list(harness.SCHEDULE_KINDS)}"
    )


def render_schedule_spec(schedule: Schedule) -> str:
    if schedule.kind == harness.SCHEDULE_TOY_DECAY:
        return f"{schedule.kind}:{schedule.alpha!r},{schedule.a!r}"
    return f"{schedule.kind}:{schedule.alpha!r}"


def parse_clip_spec(spec: str) -> ClipSchedule:
    """Parse 'none', 'constant:c', or 'power-quarter:c'."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == harness.CLIP_NONE and not rest:
            return ClipSchedule.none()
        if kind == harness.CLIP_CONSTANT:
            return ClipSchedule.constant(float(rest))
        if kind == harness.CLIP_POWER_QUARTER:
            return ClipSchedule.power_quarter(float(rest))
    except (ValueError, TypeError) as err:
        raise ConfigError(f"bad clip spec {spec!r}: {err}")
    raise ConfigError(
        f"clip spec {spec!r} must start with one of {list(harness.CLIP_KINDS)}"
    )


def render_clip_spec(clip: ClipSchedule) -> str:
    if clip.kind == harness.CLIP_NONE:
        return clip.kind
    return f"{clip.kind}:{clip.c!r}"


def parse_config(config_path: Optional[str] = None,
                 overrides: Optional[dict] = None) -> Tuple[ExperimentConfig, dict]:
    """Merge a JSON config file with flag overrides; flags win.

    Returns the typed config plus the raw file dict (sweep reads its grid
    from the latter). Unknown file keys and malformed values raise
    ConfigError naming the field.
    """
    raw = {}
    if config_path is not None:
        try:
            with open(config_path) as fh:
                raw = json.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config file {config_path}: {err}")
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {config_path} is not valid JSON: {err}")
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object at top level")
    merged = {}
    for key, value in raw.items():
        if key in _EXTRA_FILE_KEYS:
            continue
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown config field {key!r}")
        merged[key] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown config field {key!r}")
        merged[key] = value
    cleaned = {"out": "runs"}
    for key, value in merged.items():
        validated = _validate_field(key, value)
        if validated is not None:
            cleaned[key] = validated
    return ExperimentConfig(**cleaned), raw


def render_config(config: ExperimentConfig) -> dict:
    """Config as a JSON-ready dict; parse_config on it round-trips."""
    out = {}
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if f.name == "out" and value == "runs":
            continue
        if value is not None:
            out[f.name] = value
    return out


def default_seed_base() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 1
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def resolve_seeds(config: ExperimentConfig, count: int = 3) -> List[int]:
    if config.seeds:
        return list(config.seeds)
    base = default_seed_base()
    return list(range(base, base + count))


def _optimizer_config(kind: str, config: ExperimentConfig,
                      **forced) -> OptimizerConfig:
    """Per-kind defaults, then file/flag fields, then protocol overrides."""
    overrides = {}
    if config.beta1 is not None:
        overrides["beta1"] = config.beta1
    if config.beta2 is not None:
        overrides["beta2"] = config.beta2
    if config.eps is not None:
        overrides["epsilon"] = config.eps
    if config.eps_mode is not None:
        overrides["eps_mode"] = config.eps_mode
    if config.m_init is not None:
        overrides["m_init_mode"] = config.m_init
    if config.bias_correction is not None:
        overrides["bias_correction"] = config.bias_correction
    if config.weight_decay is not None:
        overrides["weight_decay"] = config.weight_decay
        overrides["wd_mode"] = config.wd_mode or optimizers.WD_COUPLED
    elif config.wd_mode is not None:
        overrides["wd_mode"] = config.wd_mode
    if config.adashift_window is not None:
        overrides["adashift_window"] = config.adashift_window
    overrides.update(forced)
    return default_config(kind, **overrides)


def _series_stride(config: ExperimentConfig, steps: int) -> int:
    if config.record_every is not None:
        return config.record_every
    return max(1, steps // 2000)


def _cell_dir(out: str, experiment: str, cell_id: str) -> Path:
    path = Path(out) / experiment / cell_id
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_cell(out: str, experiment: str, cell_id: str, record: RunRecord,
                every: int) -> dict:
    cell = _cell_dir(out, experiment, cell_id)
    write_series_csv(record, cell / "series.csv", every)
    summary = run_summary(record)
    summary["cell"] = cell_id
    write_summary_json(summary, cell / "summary.json")
    return summary


def _median(values: Sequence[float]) -> Optional[float]:
    values = [v for v in values if v is not None]
    return statistics.median(values) if values else None


def _decimated_theta(record: RunRecord, limit: int = 2000):
    idx = reports.decimate_indices(len(record.steps), limit)
    xs = [record.steps[i] for i in idx]
    ys = [record.theta_or_norm[i] for i in idx]
    return xs, ys


def _median_lines(per_seed_series: List[Tuple[list, list]]):
    """Median trajectory across seeds; series must share their x grid."""
    n = min(len(xs) for xs, _ in per_seed_series)
    xs = per_seed_series[0][0][:n]
    stack = np.array([ys[:n] for _, ys in per_seed_series])
    return xs, np.median(stack, axis=0).tolist()


def _finish(experiment: str, out: str, cell_summaries: List[dict],
            extra: dict, figure_name: Optional[str]) -> int:
    top = {"experiment": experiment, "cells": cell_summaries}
    top.update(extra)
    if figure_name:
        top["figure"] = figure_name
    exp_dir = Path(out) / experiment
    exp_dir.mkdir(parents=True, exist_ok=True)
    write_summary_json(top, exp_dir / "summary.json")
    failures = [c["cell"] for c in cell_summaries if c.get("error")]
    for c in cell_summaries:
        status = f"error: {c['error']}" if c.get("error") else (
            f"final={c.get('final_theta_or_norm')}"
        )
        print(f"{experiment}/{c['cell']}: {status}")
    print(f"wrote {exp_dir}")
    if failures:
        print(f"{len(failures)} run(s) failed: {', '.join(failures)}",
              file=sys.stderr)
        return 1
    return 0


def _fmt(value: float) -> str:
    """Compact value token for directory names."""
    return f"{value:g}"


def cmd_toy(config: ExperimentConfig) -> int:
    """Noise-scale grid on the two-point problem, all optimizers."""
    k = config.k if config.k is not None else 10.0
    steps = config.steps if config.steps is not None else 200_000
    seeds = resolve_seeds(config)
    opts = [config.optimizer] if config.optimizer else ["adam", "amsgrad", "adopt"]
    betas = [config.beta2] if config.beta2 is not None else [0.1, 0.5, 0.9, 0.999]
    beta1 = config.beta1 if config.beta1 is not None else 0.9
    schedule = (parse_schedule_spec(config.schedule) if config.schedule
                else Schedule.toy_decay(config.lr or 0.01, 0.01))
    clip = parse_clip_spec(config.clip) if config.clip else ClipSchedule.none()
    theta0 = config.theta0 if config.theta0 is not None else 0.0
    every = _series_stride(config, steps)

    cell_summaries = []
    medians = []
    panels = []
    for opt in opts:
        lines = []
        for b2 in betas:
            finals, conv_steps, series = [], [], []
            for seed in seeds:
                opt_config = _optimizer_config(opt, config, beta1=beta1, beta2=b2)
                record = harness.execute_run(harness.RunSpec(
                    problem="toy", problem_params={"k": k}, optimizer=opt,
                    config=opt_config, schedule=schedule, clip=clip,
                    steps=steps, theta0=theta0, seed=seed,
                ))
                cell_id = f"{opt}-b2-{_fmt(b2)}-seed-{seed}"
                summary = _write_cell(config.out, "toy", cell_id, record, every)
                cell_summaries.append(summary)
                if not record.error:
                    finals.append(record.theta_or_norm[-1])
                    conv_steps.append(summary.get("convergence_step"))
                    series.append(_decimated_theta(record))
                del record
            medians.append({
                "optimizer": opt, "beta2": b2,
                "median_final_theta": _median(finals),
                "median_convergence_step": _median(conv_steps),
                "runs": len(seeds), "finished": len(finals),
            })
            if series:
                xs, ys = _median_lines(series)
                lines.append((f"beta2={_fmt(b2)}", xs, ys))
        panels.append((opt, lines))
    fig_path = Path(config.out) / "toy" / "trajectories.png"
    fig_path.parent.mkdir(parents=True, exist_ok=True)
    reports.save_line_grid(panels, fig_path, "step", "theta",
                           suptitle=f"two-point problem, k={_fmt(k)}", hline=-1.0)
    return _finish("toy", config.out, cell_summaries,
                   {"k": k, "medians": medians}, "trajectories.png")


def cmd_reddi(config: ExperimentConfig) -> int:
    """Period-3 online problem; gradients are deterministic, so one seed."""
    C = config.C if config.C is not None else 3.0
    steps = config.steps if config.steps is not None else 30_000
    seeds = config.seeds or [default_seed_base()]
    opts = [config.optimizer] if config.optimizer else ["adam", "amsgrad", "adopt"]
    betas = [config.beta2] if config.beta2 is not None else [0.1, 0.5, 0.9, 0.999]
    beta1 = config.beta1 if config.beta1 is not None else 0.9
    schedule = (parse_schedule_spec(config.schedule) if config.schedule
                else Schedule.toy_decay(config.lr or 0.01, 0.01))
    clip = parse_clip_spec(config.clip) if config.clip else ClipSchedule.none()
    theta0 = config.theta0 if config.theta0 is not None else 0.0
    every = _series_stride(config, steps)

    cell_summaries = []
    medians = []
    panels = []
    for opt in opts:
        lines = []
        for b2 in betas:
            finals, series = [], []
            for seed in seeds:
                opt_config = _optimizer_config(opt, config, beta1=beta1, beta2=b2)
                record = harness.execute_run(harness.RunSpec(
                    problem="reddi", problem_params={"C": C}, optimizer=opt,
                    config=opt_config, schedule=schedule, clip=clip,
                    steps=steps, theta0=theta0, seed=seed,
                ))
                cell_id = f"{opt}-b2-{_fmt(b2)}-seed-{seed}"
                summary = _write_cell(config.out, "reddi", cell_id, record, every)
                cell_summaries.append(summary)
                if not record.error:
                    finals.append(record.theta_or_norm[-1])
                    series.append(_decimated_theta(record))
                del record
            medians.append({
                "optimizer": opt, "beta2": b2,
                "median_final_theta": _median(finals),
            })
            if series:
                xs, ys = _median_lines(series)
                lines.append((f"beta2={_fmt(b2)}", xs, ys))
        panels.append((opt, lines))
    fig_path = Path(config.out) / "reddi" / "trajectories.png"
    fig_path.parent.mkdir(parents=True, exist_ok=True)
    reports.save_line_grid(panels, fig_path, "step", "theta",
                           suptitle=f"online cycle problem, C={_fmt(C)}", hline=-1.0)
    return _finish("reddi", config.out, cell_summaries,
                   {"C": C, "medians": medians}, "trajectories.png")


def cmd_ablation(config: ExperimentConfig) -> int:
    """Which half of the update reordering matters, on a hard noise scale."""
    k = config.k if config.k is not None else 50.0
    steps = config.steps if config.steps is not None else 200_000
    seeds = resolve_seeds(config)
    variants = ([config.optimizer] if config.optimizer else
                ["adopt", optimizers.ABLATION_DECORRELATE_ONLY,
                 optimizers.ABLATION_CHANGE_ORDER_ONLY, "adam"])
    beta1 = config.beta1 if config.beta1 is not None else 0.9
    beta2 = config.beta2 if config.beta2 is not None else 0.999
    schedule = (parse_schedule_spec(config.schedule) if config.schedule
                else Schedule.toy_decay(config.lr or 0.01, 0.01))
    clip = parse_clip_spec(config.clip) if config.clip else ClipSchedule.none()
    theta0 = config.theta0 if config.theta0 is not None else 0.0
    every = _series_stride(config, steps)

    cell_summaries = []
    medians = []
    lines = []
    for variant in variants:
        finals, series = [], []
        for seed in seeds:
            opt_config = _optimizer_config(variant, config, beta1=beta1,
                                           beta2=beta2)
            record = harness.execute_run(harness.RunSpec(
                problem="toy", problem_params={"k": k}, optimizer=variant,
                config=opt_config, schedule=schedule, clip=clip,
                steps=steps, theta0=theta0, seed=seed,
            ))
            cell_id = f"{variant}-seed-{seed}"
            summary = _write_cell(config.out, "ablation", cell_id, record, every)
            cell_summaries.append(summary)
            if not record.error:
                finals.append(record.theta_or_norm[-1])
                series.append(_decimated_theta(record))
            del record
        medians.append({"variant": variant,
                        "median_final_theta": _median(finals)})
        if series:
            xs, ys = _median_lines(series)
            lines.append((variant, xs, ys))
    fig_path = Path(config.out) / "ablation" / "trajectories.png"
    fig_path.parent.mkdir(parents=True, exist_ok=True)
    reports.save_line_grid([("update-order ablation", lines)], fig_path,
                           "step", "theta",
                           suptitle=f"two-point problem, k={_fmt(k)}", hline=-1.0)
    return _finish("ablation", config.out, cell_summaries,
                   {"k": k, "beta1": beta1, "beta2": beta2, "medians": medians},
                   "trajectories.png")


def cmd_shuffle(config: ExperimentConfig) -> int:
    """Sampling-order drift probe with memoryless normalization."""
    steps = config.steps if config.steps is not None else 100_000
    seeds = resolve_seeds(config)
    modes = ([config.sampling] if config.sampling else
             list(problems.SAMPLING_MODES))
    schedule = (parse_schedule_spec(config.schedule) if config.schedule
                else Schedule.inv_sqrt(config.lr or 0.01))
    theta0 = config.theta0 if config.theta0 is not None else 0.0
    every = _series_stride(config, steps)

    cell_summaries = []
    mode_rows = []
    lines = []
    for mode in modes:
        expected = problems.shuffle_update_expectation(mode)
        finals, series = [], []
        for seed in seeds:
            opt_config = _optimizer_config("adopt", config, beta1=0.0, beta2=0.0)
            record = harness.execute_run(harness.RunSpec(
                problem="shuffle", problem_params={"mode": mode},
                optimizer="adopt", config=opt_config, schedule=schedule,
                clip=ClipSchedule.none(), steps=steps, theta0=theta0,
                seed=seed,
            ))
            cell_id = f"{mode}-replacement-seed-{seed}"
            summary = _write_cell(config.out, "shuffle", cell_id, record, every)
            cell_summaries.append(summary)
            if not record.error:
                final = record.theta_or_norm[-1]
                finals.append(final)
                series.append(_decimated_theta(record))
            del record
        median_final = _median(finals)
        drift_matches = (median_final is not None and expected != 0.0
                         and (median_final - theta0) * expected > 0)
        mode_rows.append({
            "mode": mode,
            "expected_step_update": expected,
            "median_final_theta": median_final,
            "drift_matches_expectation": drift_matches,
        })
        if series:
            xs, ys = _median_lines(series)
            lines.append((f"{mode}-replacement", xs, ys))
    fig_path = Path(config.out) / "shuffle" / "trajectories.png"
    fig_path.parent.mkdir(parents=True, exist_ok=True)
    reports.save_line_grid([("sampling-order drift", lines)], fig_path,
                           "step", "theta",
                           suptitle="finite-sum components {1.9, -1, -1}",
                           hline=1.0)
    return _finish("shuffle", config.out, cell_summaries,
                   {"modes": mode_rows}, "trajectories.png")


def _load_idx_dataset(spec_str: str, hidden: Optional[int]):
    paths = spec_str[len("idx:"):].split(",")
    if len(paths) != 2:
        raise ConfigError(
            "data spec must be 'idx:<images-path>,<labels-path>'"
        )
    blobs = []
    for p in paths:
        try:
            raw = Path(p).read_bytes()
        except OSError as err:
            raise ConfigError(f"cannot read data file {p}: {err}")
        if raw[:2] == b"\x1f\x8b":
            raw = gzip.decompress(raw)
        blobs.append(raw)
    img_dims, images = parse_idx(blobs[0])
    lbl_dims, labels = parse_idx(blobs[1])
    if len(img_dims) != 3:
        raise ConfigError(f"{paths[0]} does not hold an image payload")
    if len(lbl_dims) != 1:
        raise ConfigError(f"{paths[1]} does not hold a label payload")
    if img_dims[0] != lbl_dims[0]:
        raise ConfigError(
            f"image count {img_dims[0]} does not match label count {lbl_dims[0]}"
        )
    n, rows, cols = img_dims
    dataset = models.Dataset(
        inputs=images.reshape(n, rows * cols),
        labels=labels,
        num_classes=int(labels.max()) + 1,
    )
    spec = MLPSpec(rows * cols, hidden or 784, dataset.num_classes)
    return dataset, spec


def cmd_mlp(config: ExperimentConfig) -> int:
    """Small-classifier learning-rate sweep; synthetic blobs or IDX files."""
    data = config.data or "synthetic"
    if data == "synthetic":
        dataset = synth_gaussian_classes(100, config.dim or 16, 3, 6.0, seed=0)
        spec = MLPSpec(config.dim or 16, config.hidden or 32, 3)
    elif data.startswith("idx:"):
        dataset, spec = _load_idx_dataset(data, config.hidden)
    else:
        raise ConfigError(
            f"data spec must be 'synthetic' or 'idx:<images>,<labels>', got {data!r}"
        )
    steps = config.steps if config.steps is not None else 2000
    seeds = resolve_seeds(config)
    opts = [config.optimizer] if config.optimizer else ["adopt", "adam"]
    alphas = [config.lr] if config.lr is not None else [1.0, 0.1, 0.01, 0.001]
    batch = config.batch or 64
    wd = config.weight_decay if config.weight_decay is not None else 1e-4
    eval_every = max(1, steps // 100)
    every = _series_stride(config, steps)

    cell_summaries = []
    table = []
    curves: Dict[str, Tuple[list, list]] = {}
    for opt in opts:
        for alpha in alphas:
            finals, acc_series = [], []
            for seed in seeds:
                opt_config = _optimizer_config(
                    opt, config, weight_decay=wd,
                    wd_mode=(config.wd_mode or optimizers.WD_COUPLED),
                )
                oracle = MLPBatchOracle(spec, dataset, batch)
                theta0 = mlp_init(spec, seed)
                accuracy_points = []

                def on_step(t, theta, _oracle=oracle, _points=accuracy_points):
                    if t == 1 or t % eval_every == 0 or t == steps:
                        _points.append(
                            (t, models.accuracy(spec, theta, dataset)))

                schedule = (parse_schedule_spec(config.schedule)
                            if config.schedule else Schedule.inv_sqrt(alpha))
                clip = (parse_clip_spec(config.clip) if config.clip
                        else ClipSchedule.none())
                cell_id = f"{opt}-lr-{_fmt(alpha)}-seed-{seed}"
                try:
                    record = run_experiment(oracle, opt, opt_config, schedule,
                                            clip, steps, theta0, seed,
                                            on_step=on_step)
                except harness.RunDivergedError as err:
                    record = err.record
                summary = _write_cell(config.out, "mlp", cell_id, record, every)
                if accuracy_points:
                    summary["final_accuracy"] = accuracy_points[-1][1]
                cell_dir = Path(config.out) / "mlp" / cell_id
                with open(cell_dir / "accuracy.csv", "w") as fh:
                    fh.write("step,accuracy\n")
                    for t, acc in accuracy_points:
                        fh.write(f"{t},{acc!r}\n")
                write_summary_json(summary, cell_dir / "summary.json")
                cell_summaries.append(summary)
                if not record.error and accuracy_points:
                    finals.append(accuracy_points[-1][1])
                    acc_series.append(
                        ([t for t, _ in accuracy_points],
                         [a for _, a in accuracy_points]))
                del record
            median_acc = _median(finals)
            table.append({"optimizer": opt, "lr": alpha,
                          "median_final_accuracy": median_acc,
                          "finished": len(finals), "runs": len(seeds)})
            if acc_series:
                curves[f"{opt}-lr-{_fmt(alpha)}"] = _median_lines(acc_series)
    best = {}
    for row in table:
        key = row["optimizer"]
        if row["median_final_accuracy"] is None:
            continue
        if key not in best or row["median_final_accuracy"] > best[key]["median_final_accuracy"]:
            best[key] = row
    lines = []
    for opt in opts:
        if opt in best:
            label = f"{opt}-lr-{_fmt(best[opt]['lr'])}"
            xs, ys = curves[label]
            lines.append((label, xs, ys))
    fig_path = Path(config.out) / "mlp" / "accuracy.png"
    fig_path.parent.mkdir(parents=True, exist_ok=True)
    reports.save_line_grid([("training accuracy (best lr per optimizer)", lines)],
                           fig_path, "step", "accuracy")
    return _finish("mlp", config.out, cell_summaries,
                   {"table": table,
                    "best": {k: {"lr": v["lr"],
                                 "median_final_accuracy": v["median_final_accuracy"]}
                             for k, v in best.items()}},
                   "accuracy.png")


def cmd_rate_trend(config: ExperimentConfig) -> int:
    """Smooth-problem gradient norms versus horizon, lr scaled as 1/sqrt(T)."""
    horizons = [config.steps] if config.steps is not None else [100, 1000, 10_000]
    alpha0 = config.lr if config.lr is not None else 0.5
    dim = config.dim or 10
    sigma = config.sigma if config.sigma is not None else 0.5
    seeds = resolve_seeds(config, count=20)
    theta0 = config.theta0 if config.theta0 is not None else 1.0

    cell_summaries = []
    rows = []
    for T in horizons:
        metrics = []
        for seed in seeds:
            opt_config = _optimizer_config("adopt", config)
            record = harness.execute_run(harness.RunSpec(
                problem="smooth", problem_params={"dim": dim, "sigma": sigma},
                optimizer="adopt", config=opt_config,
                schedule=Schedule.constant(alpha0 / np.sqrt(T)),
                clip=ClipSchedule.none(), steps=T, theta0=theta0, seed=seed,
            ))
            cell_id = f"T-{T}-seed-{seed}"
            summary = _write_cell(config.out, "rate-trend", cell_id, record,
                                  _series_stride(config, T))
            cell_summaries.append(summary)
            if not record.error:
                metric = harness.convergence_metric(record)
                if metric is not None:
                    metrics.append(metric)
            del record
        rows.append({
            "steps": T,
            "lr": alpha0 / float(np.sqrt(T)),
            "mean_min_sq_grad_norm": (float(np.mean(metrics)) if metrics else None),
            "finished": len(metrics),
        })
    fig_path = Path(config.out) / "rate-trend" / "trend.png"
    fig_path.parent.mkdir(parents=True, exist_ok=True)
    xs = [r["steps"] for r in rows if r["mean_min_sq_grad_norm"] is not None]
    ys = [r["mean_min_sq_grad_norm"] for r in rows if r["mean_min_sq_grad_norm"] is not None]
    reports.save_loglog([("mean min grad-norm^2", xs, ys)], fig_path,
                        "steps", "min squared grad norm",
                        "smooth nonconvex trend")
    return _finish("rate-trend", config.out, cell_summaries,
                   {"dim": dim, "sigma": sigma, "rows": rows}, "trend.png")


_GRID_AXES = ("optimizer", "beta1", "beta2", "lr", "eps", "seed")


def cmd_sweep(config: ExperimentConfig, raw: dict) -> int:
    """Generic grid over optimizers and hyperparameters from a config file.

    Unset optimizer fields fall back to per-kind defaults here, including
    the growing clip bound for the clipped variant.
    """
    problem = config.problem
    if problem is None:
        raise ConfigError("sweep needs a 'problem' field in the config file")
    grid_raw = raw.get("grid") or {}
    if not isinstance(grid_raw, dict):
        raise ConfigError("config field 'grid' must be an object of lists")
    for axis in grid_raw:
        if axis not in _GRID_AXES:
            raise ConfigError(
                f"grid axis {axis!r} is not one of {list(_GRID_AXES)}"
            )
    grid = {}
    for axis, values in grid_raw.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid axis {axis!r} must be a non-empty list")
        field_name = "seeds" if axis == "seed" else axis
        if axis == "seed":
            grid[axis] = _validate_field("seeds", values)
        else:
            grid[axis] = [_validate_field(field_name, v) for v in values]

    opts = grid.get("optimizer") or [config.optimizer or "adopt"]
    beta1s = grid.get("beta1") or [config.beta1]
    beta2s = grid.get("beta2") or [config.beta2]
    lrs = grid.get("lr") or [config.lr or 0.01]
    epss = grid.get("eps") or [config.eps]
    seeds = grid.get("seed") or resolve_seeds(config)
    steps = config.steps if config.steps is not None else 10_000
    theta0 = config.theta0 if config.theta0 is not None else 0.0
    every = _series_stride(config, steps)

    problem_params = {}
    if problem == "toy":
        problem_params["k"] = config.k if config.k is not None else 10.0
    elif problem == "reddi":
        problem_params["C"] = config.C if config.C is not None else 3.0
    elif problem == "shuffle":
        problem_params["mode"] = config.sampling or problems.WITH_REPLACEMENT
    elif problem == "smooth":
        problem_params["dim"] = config.dim or 10
        problem_params["sigma"] = config.sigma if config.sigma is not None else 0.5

    specs = []
    cell_ids = []
    for opt in opts:
        for b1 in beta1s:
            for b2 in beta2s:
                for lr in lrs:
                    for eps in epss:
                        for seed in seeds:
                            forced = {}
                            if b1 is not None:
                                forced["beta1"] = b1
                            if b2 is not None:
                                forced["beta2"] = b2
                            if eps is not None:
                                forced["epsilon"] = eps
                            opt_config = _optimizer_config(opt, config, **forced)
                            schedule = (parse_schedule_spec(config.schedule)
                                        if config.schedule
                                        else Schedule.inv_sqrt(lr))
                            if config.clip is not None:
                                clip = parse_clip_spec(config.clip)
                            elif opt == "adopt-clipped":
                                clip = ClipSchedule.power_quarter(1.0)
                            else:
                                clip = ClipSchedule.none()
                            parts = [opt]
                            if b1 is not None:
                                parts.append(f"b1-{_fmt(b1)}")
                            if b2 is not None:
                                parts.append(f"b2-{_fmt(b2)}")
                            parts.append(f"lr-{_fmt(lr)}")
                            if eps is not None:
                                parts.append(f"eps-{_fmt(eps)}")
                            parts.append(f"seed-{seed}")
                            cell_ids.append("-".join(parts))
                            specs.append(harness.RunSpec(
                                problem=problem,
                                problem_params=problem_params,
                                optimizer=opt, config=opt_config,
                                schedule=schedule, clip=clip, steps=steps,
                                theta0=theta0, seed=seed,
                            ))
    records = harness.sweep(specs, workers=config.workers)
    cell_summaries = []
    finals = []
    for cell_id, record in zip(cell_ids, records):
        summary = _write_cell(config.out, "sweep", cell_id, record, every)
        cell_summaries.append(summary)
        finals.append(summary.get("final_theta_or_norm"))
    fig_path = Path(config.out) / "sweep" / "finals.png"
    fig_path.parent.mkdir(parents=True, exist_ok=True)
    xs = list(range(len(finals)))
    ys = [f if f is not None else float("nan") for f in finals]
    reports.save_line_grid(
        [("final theta_or_norm by cell", [("final", xs, ys)])],
        fig_path, "cell index", "final value")
    return _finish("sweep", config.out, cell_summaries,
                   {"problem": problem}, "finals.png")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adopt-lab",
        description="Stochastic-optimization lab: counterexample problems, "
                    "adaptive-method variants, and reproducible run grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "toy": "two-point noise problem across optimizers and beta2 values",
        "reddi": "period-3 online problem with a dominant rare gradient",
        "ablation": "isolate which update reordering fixes the toy problem",
        "shuffle": "sampling-order drift with memoryless normalization",
        "mlp": "small classifier learning-rate sweep",
        "sweep": "generic config-driven grid",
        "rate-trend": "gradient-norm trend versus horizon on a smooth problem",
    }
    for name, helptext in descriptions.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--optimizer", choices=OPTIMIZER_KINDS)
        sp.add_argument("--beta1", type=float)
        sp.add_argument("--beta2", type=float)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--eps-mode", dest="eps_mode", choices=EPS_MODES)
        sp.add_argument("--m-init", dest="m_init", choices=M_INIT_MODES)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--schedule",
                        help="constant:a | inv-sqrt:a | toy-decay:a,rate")
        sp.add_argument("--clip", help="none | constant:c | power-quarter:c")
        sp.add_argument("--k", type=float)
        sp.add_argument("--C", type=float)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--seeds", help="comma-separated integers")
        sp.add_argument("--out")
        sp.add_argument("--sampling", choices=problems.SAMPLING_MODES)
        sp.add_argument("--data",
                        help="synthetic | idx:<images-path>,<labels-path>")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in ("optimizer", "beta1", "beta2", "eps", "eps_mode", "m_init",
                    "lr", "schedule", "clip", "k", "C", "steps", "seeds",
                    "out", "sampling", "data")
        if getattr(args, key, None) is not None
    }
    try:
        config, raw = parse_config(args.config, overrides)
        if args.command == "toy":
            return cmd_toy(config)
        if args.command == "reddi":
            return cmd_reddi(config)
        if args.command == "ablation":
            return cmd_ablation(config)
        if args.command == "shuffle":
            return cmd_shuffle(config)
        if args.command == "mlp":
            return cmd_mlp(config)
        if args.command == "sweep":
            return cmd_sweep(config, raw)
        if args.command == "rate-trend":
            return cmd_rate_trend(config)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
