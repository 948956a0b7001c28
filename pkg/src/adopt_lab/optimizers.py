"""First-order update rules sharing one stateful-step interface.

Every optimizer is a free function `*_step(config, state, theta, g, lr, ...)`
that consumes the gradient at the current iterate, mutates its state, and
returns the next iterate. States are per-run values; clone config/state per
run when sweeping.

Update-order conventions that matter here:

* adopt_step normalizes the current gradient by the second-moment estimate
  from BEFORE this step (v_{t-1}), folds the normalized gradient into
  momentum, moves the parameters, and only then updates v. The denominator
  never sees the gradient it is dividing.
* adopt_ablation_step isolates each half of that recipe: DecorrelateOnly
  keeps Adam's momentum-on-raw-gradients but divides by the stale v;
  ChangeOrderOnly updates v first and normalizes the current gradient by the
  fresh v before the momentum update.
* The first real ADOPT step either takes the full normalized gradient as
  momentum (FullFirstStep) or starts the recurrence from m=0 (ZeroInit).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .vectors import (
    ParamVector,
    all_finite,
    clip_elementwise,
    max_scalar,
    vabs,
    vsqrt,
)

# eps placement in the denominator
EPS_MAX_FLOOR = "max_floor"      # max(sqrt(v), eps)
EPS_INSIDE_SQRT = "inside_sqrt"  # sqrt(v + eps^2)

# first ADOPT momentum step
M_INIT_FULL_FIRST_STEP = "full_first_step"
M_INIT_ZERO = "zero_init"

# weight decay placement
WD_NONE = "none"
WD_COUPLED = "coupled"
WD_DECOUPLED = "decoupled"
WD_MODES = (WD_NONE, WD_COUPLED, WD_DECOUPLED)

ABLATION_DECORRELATE_ONLY = "decorrelate-only"
ABLATION_CHANGE_ORDER_ONLY = "change-order-only"

OPTIMIZER_KINDS = (
    "sgd",
    "adagrad",
    "rmsprop",
    "adam",
    "amsgrad",
    "adamax",
    "adashift",
    "adopt",
    "adopt-clipped",
    ABLATION_DECORRELATE_ONLY,
    ABLATION_CHANGE_ORDER_ONLY,
)

# Optimizers that consume one gradient at theta_0 to seed v before the
# first parameter update.
INIT_GRADIENT_KINDS = frozenset(
    {"adopt", "adopt-clipped", ABLATION_DECORRELATE_ONLY, ABLATION_CHANGE_ORDER_ONLY}
)


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    eps_mode: str = EPS_INSIDE_SQRT
    bias_correction: bool = True
    m_init_mode: str = M_INIT_FULL_FIRST_STEP
    weight_decay: float = 0.0
    wd_mode: str = WD_NONE
    adashift_window: int = 10

    def __post_init__(self):
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 <= 1.0:
            raise ValueError(f"beta2 must be in [0, 1], got {self.beta2}")
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.eps_mode not in (EPS_MAX_FLOOR, EPS_INSIDE_SQRT):
            raise ValueError(f"unknown eps_mode {self.eps_mode!r}")
        if self.m_init_mode not in (M_INIT_FULL_FIRST_STEP, M_INIT_ZERO):
            raise ValueError(f"unknown m_init_mode {self.m_init_mode!r}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.wd_mode not in (WD_NONE, WD_COUPLED, WD_DECOUPLED):
            raise ValueError(f"unknown wd_mode {self.wd_mode!r}")
        if self.adashift_window < 1:
            raise ValueError(f"adashift_window must be >= 1, got {self.adashift_window}")


_KIND_DEFAULTS = {
    "sgd": {},
    "adagrad": {"epsilon": 1e-8},
    "rmsprop": {"beta2": 0.999, "epsilon": 1e-8},
    "adam": {"beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
    "amsgrad": {"beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
    "adamax": {"beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
    "adashift": {"beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8, "adashift_window": 10},
    "adopt": {
        "beta1": 0.9,
        "beta2": 0.9999,
        "epsilon": 1e-6,
        "eps_mode": EPS_MAX_FLOOR,
        "m_init_mode": M_INIT_FULL_FIRST_STEP,
    },
    "adopt-clipped": {
        "beta1": 0.9,
        "beta2": 0.9999,
        "epsilon": 1e-6,
        "eps_mode": EPS_MAX_FLOOR,
        "m_init_mode": M_INIT_ZERO,
    },
    ABLATION_DECORRELATE_ONLY: {
        "beta1": 0.9,
        "beta2": 0.9999,
        "epsilon": 1e-6,
        "eps_mode": EPS_MAX_FLOOR,
    },
    ABLATION_CHANGE_ORDER_ONLY: {
        "beta1": 0.9,
        "beta2": 0.9999,
        "epsilon": 1e-6,
        "eps_mode": EPS_MAX_FLOOR,
    },
}


def default_config(kind: str, **overrides) -> OptimizerConfig:
    """Per-optimizer recommended defaults, overridable field by field."""
    if kind not in _KIND_DEFAULTS:
        raise ValueError(f"unknown optimizer kind {kind!r}")
    fields = dict(_KIND_DEFAULTS[kind])
    fields.update(overrides)
    return OptimizerConfig(**fields)


@dataclass
class OptimizerState:
    """Mutable per-run accumulator state.

    t counts parameter updates performed so far (the ADOPT v-seeding step
    does not count). Moment vectors mirror the parameter representation:
    floats for scalar problems, arrays otherwise.
    """

    t: int = 0
    m: ParamVector = 0.0
    v: ParamVector = 0.0
    v_hat: ParamVector = 0.0
    u: ParamVector = 0.0
    grad_buffer: deque = field(default_factory=deque)
    v0_initialized: bool = False


def init_state(theta: ParamVector) -> OptimizerState:
    zero = 0.0 if type(theta) is float else theta * 0.0
    return OptimizerState(m=zero, v=zero, v_hat=zero, u=zero)


def state_finite(state: OptimizerState, theta: ParamVector) -> bool:
    return all_finite(theta) and all_finite(state.m) and all_finite(state.v)


def _vmax(a: ParamVector, b: ParamVector) -> ParamVector:
    if type(a) is float and type(b) is float:
        return a if a >= b else b
    return np.maximum(a, b)


def _coupled_grad(config: OptimizerConfig, theta: ParamVector, g: ParamVector) -> ParamVector:
    if config.wd_mode == WD_COUPLED and config.weight_decay != 0.0:
        return g + config.weight_decay * theta
    return g


def _decoupled_decay(
    config: OptimizerConfig, new_theta: ParamVector, old_theta: ParamVector, lr: float
) -> ParamVector:
    if config.wd_mode == WD_DECOUPLED and config.weight_decay != 0.0:
        return new_theta - lr * config.weight_decay * old_theta
    return new_theta


def _denom(config: OptimizerConfig, v: ParamVector) -> ParamVector:
    """eps-protected sqrt of the second-moment estimate."""
    if config.eps_mode == EPS_MAX_FLOOR:
        return max_scalar(vsqrt(v), config.epsilon)
    eps = config.epsilon
    return vsqrt(v + eps * eps)


def sgd_step(config, state, theta, g, lr):
    g = _coupled_grad(config, theta, g)
    new_theta = theta - lr * g
    state.t += 1
    return _decoupled_decay(config, new_theta, theta, lr)


def adagrad_step(config, state, theta, g, lr):
    g = _coupled_grad(config, theta, g)
    state.v = state.v + g * g
    new_theta = theta - lr * (g / _denom(config, state.v))
    state.t += 1
    return _decoupled_decay(config, new_theta, theta, lr)


def rmsprop_step(config, state, theta, g, lr):
    g = _coupled_grad(config, theta, g)
    b2 = config.beta2
    state.v = b2 * state.v + (1.0 - b2) * (g * g)
    new_theta = theta - lr * (g / _denom(config, state.v))
    state.t += 1
    return _decoupled_decay(config, new_theta, theta, lr)


def adam_family_step(config, state, theta, g, lr, t, amsgrad=False):
    """Adam, AMSGrad (amsgrad=True), and AdamW (wd_mode decoupled).

    t is the 1-based update clock used for bias correction; pass state.t + 1
    when stepping manually. With beta2 = 1 the v estimate is frozen and its
    bias correction is skipped (it would divide by zero).
    """
    g = _coupled_grad(config, theta, g)
    b1, b2 = config.beta1, config.beta2
    state.m = b1 * state.m + (1.0 - b1) * g
    state.v = b2 * state.v + (1.0 - b2) * (g * g)
    if amsgrad:
        state.v_hat = _vmax(state.v_hat, state.v)
        v_used = state.v_hat
    else:
        v_used = state.v
    m_used = state.m
    if config.bias_correction:
        m_used = m_used / (1.0 - b1**t)
        if b2 < 1.0:
            v_used = v_used / (1.0 - b2**t)
    new_theta = theta - lr * (m_used / _denom(config, v_used))
    state.t += 1
    return _decoupled_decay(config, new_theta, theta, lr)


def adamax_step(config, state, theta, g, lr):
    """Infinity-norm Adam variant; m is always bias-corrected."""
    g = _coupled_grad(config, theta, g)
    b1, b2 = config.beta1, config.beta2
    state.m = b1 * state.m + (1.0 - b1) * g
    state.u = _vmax(b2 * state.u, vabs(g))
    t = state.t + 1
    m_hat = state.m / (1.0 - b1**t)
    new_theta = theta - lr * (m_hat / (state.u + config.epsilon))
    state.t = t
    return _decoupled_decay(config, new_theta, theta, lr)


def adashift_step(config, state, theta, g, lr):
    """Temporally decorrelated Adam: v is built from the gradient n steps
    back, momentum from the newest n gradients. No parameter update until
    n+1 gradients have been seen (warm-up)."""
    g = _coupled_grad(config, theta, g)
    n = config.adashift_window
    buf = state.grad_buffer
    buf.append(g)
    state.t += 1
    if len(buf) < n + 1:
        return theta
    g_old = buf.popleft()
    b1, b2 = config.beta1, config.beta2
    state.v = b2 * state.v + (1.0 - b2) * (g_old * g_old)
    num = 0.0
    den = 0.0
    w = 1.0
    for gk in reversed(buf):
        num = num + w * gk
        den += w
        w *= b1
    m = num / den
    eps = config.epsilon
    new_theta = theta - lr * (m / vsqrt(state.v + eps * eps))
    return _decoupled_decay(config, new_theta, theta, lr)


def adopt_step(config, state, theta, g, lr):
    """Decorrelated, order-swapped adaptive step.

    The first call only seeds v with g*g and leaves theta untouched. Every
    later call normalizes g by the previous step's v, updates momentum,
    moves theta, then updates v.
    """
    g = _coupled_grad(config, theta, g)
    if not state.v0_initialized:
        state.v = g * g
        state.v0_initialized = True
        return theta
    normalized = g / _denom(config, state.v)
    if state.t == 0 and config.m_init_mode == M_INIT_FULL_FIRST_STEP:
        state.m = normalized
    else:
        b1 = config.beta1
        state.m = b1 * state.m + (1.0 - b1) * normalized
    new_theta = theta - lr * state.m
    b2 = config.beta2
    state.v = b2 * state.v + (1.0 - b2) * (g * g)
    state.t += 1
    return _decoupled_decay(config, new_theta, theta, lr)


def adopt_clipped_step(config, state, theta, g, lr, c):
    """adopt_step with the normalized gradient clamped into [-c, c] before
    the momentum update. c = +inf with ZeroInit reproduces adopt_step
    bit for bit."""
    g = _coupled_grad(config, theta, g)
    if not state.v0_initialized:
        state.v = g * g
        state.v0_initialized = True
        return theta
    normalized = clip_elementwise(g / _denom(config, state.v), c)
    if state.t == 0 and config.m_init_mode == M_INIT_FULL_FIRST_STEP:
        state.m = normalized
    else:
        b1 = config.beta1
        state.m = b1 * state.m + (1.0 - b1) * normalized
    new_theta = theta - lr * state.m
    b2 = config.beta2
    state.v = b2 * state.v + (1.0 - b2) * (g * g)
    state.t += 1
    return _decoupled_decay(config, new_theta, theta, lr)


def adopt_ablation_step(config, state, theta, g, lr, variant):
    """One algorithmic change at a time, from the same v0 = g0*g0 seed.

    DecorrelateOnly: Adam-style momentum on raw gradients, but the
    denominator is the stale v from before this step (v updated after).
    ChangeOrderOnly: v updated first, current gradient normalized by the
    fresh v, then folded into momentum. Momentum always starts from m=0.
    """
    g = _coupled_grad(config, theta, g)
    if not state.v0_initialized:
        state.v = g * g
        state.v0_initialized = True
        return theta
    b1, b2 = config.beta1, config.beta2
    if variant == ABLATION_DECORRELATE_ONLY:
        state.m = b1 * state.m + (1.0 - b1) * g
        new_theta = theta - lr * (state.m / _denom(config, state.v))
        state.v = b2 * state.v + (1.0 - b2) * (g * g)
    elif variant == ABLATION_CHANGE_ORDER_ONLY:
        state.v = b2 * state.v + (1.0 - b2) * (g * g)
        state.m = b1 * state.m + (1.0 - b1) * (g / _denom(config, state.v))
        new_theta = theta - lr * state.m
    else:
        raise ValueError(f"unknown ablation variant {variant!r}")
    state.t += 1
    return _decoupled_decay(config, new_theta, theta, lr)


def resolve_stepper(kind: str, config: OptimizerConfig, state: OptimizerState):
    """Bind an optimizer kind to a uniform `step(theta, g, lr, t, c)` callable.

    t is the 1-based update clock, c the clip bound for this step; kinds
    that do not use them ignore them. Resolved once per run so the hot loop
    pays a single indirect call.
    """
    if kind == "sgd":
        return lambda theta, g, lr, t, c: sgd_step(config, state, theta, g, lr)
    if kind == "adagrad":
        return lambda theta, g, lr, t, c: adagrad_step(config, state, theta, g, lr)
    if kind == "rmsprop":
        return lambda theta, g, lr, t, c: rmsprop_step(config, state, theta, g, lr)
    if kind == "adam":
        return lambda theta, g, lr, t, c: adam_family_step(config, state, theta, g, lr, t)
    if kind == "amsgrad":
        return lambda theta, g, lr, t, c: adam_family_step(
            config, state, theta, g, lr, t, amsgrad=True
        )
    if kind == "adamax":
        return lambda theta, g, lr, t, c: adamax_step(config, state, theta, g, lr)
    if kind == "adashift":
        return lambda theta, g, lr, t, c: adashift_step(config, state, theta, g, lr)
    if kind == "adopt":
        return lambda theta, g, lr, t, c: adopt_step(config, state, theta, g, lr)
    if kind == "adopt-clipped":
        return lambda theta, g, lr, t, c: adopt_clipped_step(config, state, theta, g, lr, c)
    if kind in (ABLATION_DECORRELATE_ONLY, ABLATION_CHANGE_ORDER_ONLY):
        return lambda theta, g, lr, t, c: adopt_ablation_step(
            config, state, theta, g, lr, kind
        )
    raise ValueError(f"unknown optimizer kind {kind!r}")
