"""Stochastic gradient oracles for the analytic benchmark problems.

Each oracle yields unbiased gradient samples at a query point, optionally
exposes the true gradient/loss, and declares its feasible box. Oracles own
any per-run sampling state (period counters, epoch permutations), so build
one oracle per run.
"""
from __future__ import annotations

import itertools
import math
from typing import Optional, Tuple

import numpy as np

from .vectors import ParamVector

# sampling modes for the finite-sum problem
WITH_REPLACEMENT = "with"
WITHOUT_REPLACEMENT = "without"
SAMPLING_MODES = (WITH_REPLACEMENT, WITHOUT_REPLACEMENT)

# fixed component gradients of the finite-sum problem; their sum is -0.1,
# so the full objective decreases toward theta = +1 on [-1, 1]
SHUFFLE_COMPONENTS = (1.9, -1.0, -1.0)

Box = Tuple[float, float]


def reddi_online_grad(t: int, C: float) -> float:
    """Period-3 online gradient: C on steps 1, 4, 7, ..., else -1.

    With C > 2 the cycle-average gradient is (C - 2) / 3 > 0, so the
    long-run objective decreases toward theta = -1.
    """
    if C <= 2:
        raise ValueError(f"C must exceed 2, got {C}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    return float(C) if t % 3 == 1 else -1.0


def toy_stochastic_grad(k: float, rng) -> float:
    """Two-point gradient: k^2 with probability 1/k, else -k.

    Unbiased with mean exactly 1 for any k >= 1; the second moment
    k^3 + k^2 - k grows with k, which is the whole point of the problem.
    One uniform draw per sample keeps trajectories reproducible.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return k * k if rng.random() < 1.0 / k else -k


class ShuffleEpochState:
    """Per-run position within the current epoch's component order."""

    __slots__ = ("order", "pos")

    def __init__(self):
        self.order = []
        self.pos = 0


def finite_sum_shuffle_grad(epoch_state: ShuffleEpochState, mode: str, rng) -> float:
    """Draw one component gradient from {1.9, -1, -1}.

    WITH_REPLACEMENT picks a component uniformly each call;
    WITHOUT_REPLACEMENT walks a fresh uniform permutation every epoch of
    three draws.
    """
    if mode == WITH_REPLACEMENT:
        return SHUFFLE_COMPONENTS[rng.randrange(3)]
    if mode != WITHOUT_REPLACEMENT:
        raise ValueError(f"unknown sampling mode {mode!r}")
    if epoch_state.pos >= len(epoch_state.order):
        order = list(SHUFFLE_COMPONENTS)
        rng.shuffle(order)
        epoch_state.order = order
        epoch_state.pos = 0
    g = epoch_state.order[epoch_state.pos]
    epoch_state.pos += 1
    return g


def smooth_nonconvex_grad(theta: ParamVector, sigma: float, rng) -> ParamVector:
    """Noisy gradient of f(theta) = sum_i log(1 + theta_i^2).

    Adds independent uniform noise on [-sigma, sigma] per coordinate; the
    noiseless gradient magnitude is at most 1 per coordinate, so samples
    stay bounded by 1 + sigma.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if type(theta) is float:
        g = 2.0 * theta / (1.0 + theta * theta)
        if sigma > 0.0:
            g += rng.uniform(-sigma, sigma)
        return g
    base = 2.0 * theta / (1.0 + theta * theta)
    if sigma > 0.0:
        noise = np.array([rng.uniform(-sigma, sigma) for _ in range(base.size)])
        base = base + noise
    return base


def project(theta: ParamVector, box: Box) -> ParamVector:
    """Coordinate-wise clamp into [lo, hi]."""
    lo, hi = box
    if lo > hi:
        raise ValueError(f"invalid box: lo {lo} > hi {hi}")
    if type(theta) is float:
        if theta < lo:
            return lo
        if theta > hi:
            return hi
        return theta
    return np.clip(theta, lo, hi)


def shuffle_update_expectation(mode: str) -> float:
    """Exact expected per-step update -g_t/|g_{t-1}| for beta1 = beta2 = 0.

    Brute-force enumeration over all (g_{t-1}, g_t) pairs weighted by their
    occurrence probability under the sampling mode. A positive value means
    theta drifts toward +1 (the true optimum), negative toward -1.
    """
    comps = SHUFFLE_COMPONENTS
    if mode == WITH_REPLACEMENT:
        total = 0.0
        for g_prev in comps:
            for g_cur in comps:
                total += -g_cur / abs(g_prev)
        return total / 9.0
    if mode != WITHOUT_REPLACEMENT:
        raise ValueError(f"unknown sampling mode {mode!r}")
    perms = list(itertools.permutations(comps))
    # two within-epoch transitions per permutation
    within = 0.0
    for p in perms:
        within += -p[1] / abs(p[0]) + -p[2] / abs(p[1])
    within /= len(perms)
    # one epoch-boundary transition: last element of one permutation to the
    # first element of an independently drawn next permutation
    boundary = 0.0
    for prev in perms:
        for cur in perms:
            boundary += -cur[0] / abs(prev[2])
    boundary /= len(perms) ** 2
    return (within + boundary) / 3.0


class GradientOracle:
    """Base oracle: dim, sampling, and optional exact quantities.

    sample(theta, rng) must return an unbiased gradient estimate wherever a
    true gradient is declared. convergence_target marks problems whose
    interesting outcome is "did theta settle at this value".
    """

    dim: int = 1
    feasible_box: Optional[Box] = None
    convergence_target: Optional[float] = None
    label: str = "oracle"

    def sample(self, theta: ParamVector, rng) -> ParamVector:
        raise NotImplementedError

    def true_gradient(self, theta: ParamVector) -> Optional[ParamVector]:
        return None

    def true_loss(self, theta: ParamVector) -> Optional[float]:
        return None


class ToyOracle(GradientOracle):
    """Scalar two-point noise problem with noise scale k on [-1, 1]."""

    def __init__(self, k: float):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.k = float(k)
        self.dim = 1
        self.feasible_box = (-1.0, 1.0)
        self.convergence_target = -1.0
        self.label = f"toy-k{k:g}"

    def sample(self, theta, rng):
        k = self.k
        return k * k if rng.random() < 1.0 / k else -k

    def true_gradient(self, theta):
        return 1.0

    def true_loss(self, theta):
        return theta


class ReddiOnlineOracle(GradientOracle):
    """Deterministic period-3 online problem on [-1, 1]; stateful clock."""

    def __init__(self, C: float):
        if C <= 2:
            raise ValueError(f"C must exceed 2, got {C}")
        self.C = float(C)
        self.dim = 1
        self.feasible_box = (-1.0, 1.0)
        self.convergence_target = -1.0
        self.label = f"reddi-C{C:g}"
        self._t = 0

    def sample(self, theta, rng):
        self._t += 1
        return reddi_online_grad(self._t, self.C)

    def true_gradient(self, theta):
        # cycle-average gradient
        return (self.C - 2.0) / 3.0

    def true_loss(self, theta):
        return (self.C - 2.0) / 3.0 * theta


class ShuffleOracle(GradientOracle):
    """Finite sum with components {1.9, -1, -1} on [-1, 1]; optimum +1."""

    def __init__(self, mode: str):
        if mode not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {mode!r}")
        self.mode = mode
        self.dim = 1
        self.feasible_box = (-1.0, 1.0)
        self.convergence_target = 1.0
        self.label = f"shuffle-{mode}"
        self._epoch = ShuffleEpochState()

    def sample(self, theta, rng):
        return finite_sum_shuffle_grad(self._epoch, self.mode, rng)

    def true_gradient(self, theta):
        return sum(SHUFFLE_COMPONENTS)

    def true_loss(self, theta):
        return sum(SHUFFLE_COMPONENTS) * theta


class SmoothNonconvexOracle(GradientOracle):
    """log(1 + theta^2) landscape with bounded uniform gradient noise."""

    def __init__(self, dim: int, sigma: float):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {sigma}")
        self.dim = int(dim)
        self.sigma = float(sigma)
        self.feasible_box = None
        self.label = f"smooth-d{dim}-s{sigma:g}"

    def sample(self, theta, rng):
        return smooth_nonconvex_grad(theta, self.sigma, rng)

    def true_gradient(self, theta):
        return 2.0 * theta / (1.0 + theta * theta)

    def true_loss(self, theta):
        if type(theta) is float:
            return math.log1p(theta * theta)
        return float(np.sum(np.log1p(theta * theta)))


def make_oracle(problem: str, **params) -> GradientOracle:
    """Name-based oracle factory used by the sweep runner and the CLI."""
    if problem == "toy":
        return ToyOracle(params.get("k", 10.0))
    if problem == "reddi":
        return ReddiOnlineOracle(params.get("C", 3.0))
    if problem == "shuffle":
        return ShuffleOracle(params.get("mode", WITH_REPLACEMENT))
    if problem == "smooth":
        return SmoothNonconvexOracle(params.get("dim", 10), params.get("sigma", 0.5))
    raise ValueError(f"unknown problem {problem!r}")
