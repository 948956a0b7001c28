import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adopt_lab import problems
from adopt_lab.problems import (
    SHUFFLE_COMPONENTS,
    WITH_REPLACEMENT,
    WITHOUT_REPLACEMENT,
    GradientOracle,
    ShuffleEpochState,
    finite_sum_shuffle_grad,
    make_oracle,
    project,
    reddi_online_grad,
    shuffle_update_expectation,
    smooth_nonconvex_grad,
    toy_stochastic_grad,
)


# ----------------------------------------------------------------- reddi


def test_reddi_values_and_period():
    assert reddi_online_grad(1, 3.0) == 3.0
    assert reddi_online_grad(2, 3.0) == -1.0
    assert reddi_online_grad(3, 3.0) == -1.0
    assert reddi_online_grad(4, 3.0) == 3.0
    for t in range(1, 40):
        assert reddi_online_grad(t, 5.0) == reddi_online_grad(t + 3, 5.0)


def test_reddi_validation():
    with pytest.raises(ValueError):
        reddi_online_grad(1, 2.0)
    with pytest.raises(ValueError):
        reddi_online_grad(0, 3.0)


def test_reddi_cycle_average():
    C = 3.0
    avg = sum(reddi_online_grad(t, C) for t in (1, 2, 3)) / 3.0
    assert avg == pytest.approx((C - 2.0) / 3.0)


def test_reddi_oracle_is_stateful_clock():
    oracle = make_oracle("reddi", C=3.0)
    rng = random.Random(0)
    draws = [oracle.sample(0.0, rng) for _ in range(6)]
    assert draws == [3.0, -1.0, -1.0, 3.0, -1.0, -1.0]


# ------------------------------------------------------------------- toy


def test_toy_noiseless_k1():
    rng = random.Random(0)
    assert all(toy_stochastic_grad(1.0, rng) == 1.0 for _ in range(100))


def test_toy_support():
    rng = random.Random(7)
    k = 10.0
    seen = {toy_stochastic_grad(k, rng) for _ in range(5000)}
    assert seen == {k * k, -k}


def test_toy_mean_and_second_moment():
    # one-million-draw statistical check at k=10
    k = 10.0
    rng = random.Random(123)
    n = 1_000_000
    total = 0.0
    total_sq = 0.0
    for _ in range(n):
        g = toy_stochastic_grad(k, rng)
        total += g
        total_sq += g * g
    mean = total / n
    second = total_sq / n
    assert abs(mean - 1.0) < 0.05
    expected_second = k**3 + k**2 - k
    assert abs(second - expected_second) / expected_second < 0.05


def test_toy_validation():
    with pytest.raises(ValueError):
        toy_stochastic_grad(0.5, random.Random(0))
    with pytest.raises(ValueError):
        make_oracle("toy", k=0.0)


# ----------------------------------------------------------------- shuffle


def test_shuffle_with_replacement_mean():
    rng = random.Random(11)
    state = ShuffleEpochState()
    n = 300_000
    total = sum(finite_sum_shuffle_grad(state, WITH_REPLACEMENT, rng)
                for _ in range(n))
    assert abs(total / n - (-0.1 / 3.0)) < 0.01


def test_shuffle_without_replacement_epochs_uniform():
    rng = random.Random(5)
    state = ShuffleEpochState()
    for _ in range(200):
        epoch = [finite_sum_shuffle_grad(state, WITHOUT_REPLACEMENT, rng)
                 for _ in range(3)]
        assert sorted(epoch) == sorted(SHUFFLE_COMPONENTS)


def test_shuffle_permutations_vary():
    rng = random.Random(5)
    state = ShuffleEpochState()
    epochs = set()
    for _ in range(60):
        epochs.add(tuple(
            finite_sum_shuffle_grad(state, WITHOUT_REPLACEMENT, rng)
            for _ in range(3)))
    assert len(epochs) == 3     # all distinct arrangements of {1.9, -1, -1}


def test_shuffle_mode_validation():
    with pytest.raises(ValueError):
        finite_sum_shuffle_grad(ShuffleEpochState(), "sometimes",
                                random.Random(0))
    with pytest.raises(ValueError):
        make_oracle("shuffle", mode="sometimes")


def _exact_update_expectation(mode):
    # Fraction mirror of the enumeration, as an independent exact oracle
    comps = (Fraction(19, 10), Fraction(-1), Fraction(-1))
    if mode == WITH_REPLACEMENT:
        total = Fraction(0)
        for gp in comps:
            for gc in comps:
                total += -gc / abs(gp)
        return total / 9
    perms = list(itertools.permutations(comps))
    within = Fraction(0)
    for p in perms:
        within += -p[1] / abs(p[0]) + -p[2] / abs(p[1])
    within /= len(perms)
    boundary = Fraction(0)
    for prev in perms:
        for cur in perms:
            boundary += -cur[0] / abs(prev[2])
    boundary /= len(perms) ** 2
    return (within + boundary) / 3


def test_shuffle_update_expectation_exact_values():
    exact_with = _exact_update_expectation(WITH_REPLACEMENT)
    exact_without = _exact_update_expectation(WITHOUT_REPLACEMENT)
    assert exact_with == Fraction(8, 285)
    assert exact_without == Fraction(-7, 95)
    got_with = shuffle_update_expectation(WITH_REPLACEMENT)
    got_without = shuffle_update_expectation(WITHOUT_REPLACEMENT)
    assert math.isclose(got_with, float(exact_with), rel_tol=1e-12)
    assert math.isclose(got_without, float(exact_without), rel_tol=1e-12)
    # drift directions: with-replacement pushes theta up, shuffling down
    assert got_with > 0
    assert got_without < 0


def test_shuffle_update_expectation_monte_carlo():
    # simulate the -g_t/|g_{t-1}| update stream and compare means
    for mode, expected in ((WITH_REPLACEMENT,
                            shuffle_update_expectation(WITH_REPLACEMENT)),
                           (WITHOUT_REPLACEMENT,
                            shuffle_update_expectation(WITHOUT_REPLACEMENT))):
        rng = random.Random(42)
        state = ShuffleEpochState()
        prev = finite_sum_shuffle_grad(state, mode, rng)
        n = 200_000
        total = 0.0
        for _ in range(n):
            g = finite_sum_shuffle_grad(state, mode, rng)
            total += -g / abs(prev)
            prev = g
        assert abs(total / n - expected) < 0.01


# ------------------------------------------------------------------ smooth


def test_smooth_noiseless_values():
    assert smooth_nonconvex_grad(0.0, 0.0, random.Random(0)) == 0.0
    assert smooth_nonconvex_grad(1.0, 0.0, random.Random(0)) == 1.0


def test_smooth_vector_and_loss():
    oracle = make_oracle("smooth", dim=3, sigma=0.0)
    theta = np.array([0.0, 1.0, 3.0])
    g = oracle.true_gradient(theta)
    assert g == pytest.approx([0.0, 1.0, 0.6])
    assert oracle.true_loss(theta) == pytest.approx(
        math.log(2.0) + math.log(10.0))


def test_smooth_noise_mean():
    rng = random.Random(3)
    n = 100_000
    total = sum(smooth_nonconvex_grad(3.0, 0.5, rng) for _ in range(n))
    assert abs(total / n - 0.6) < 0.01


def test_smooth_gradient_bound():
    rng = random.Random(9)
    sigma = 0.5
    for _ in range(2000):
        theta = rng.uniform(-50.0, 50.0)
        g = smooth_nonconvex_grad(theta, sigma, rng)
        assert abs(g) <= 1.0 + sigma + 1e-12


def test_smooth_validation():
    with pytest.raises(ValueError):
        smooth_nonconvex_grad(0.0, -1.0, random.Random(0))
    with pytest.raises(ValueError):
        make_oracle("smooth", dim=0)


# ----------------------------------------------------------------- project


def test_project_clamps():
    assert project(1.3, (-1.0, 1.0)) == 1.0
    assert project(-2.0, (-1.0, 1.0)) == -1.0
    assert project(-0.2, (-1.0, 1.0)) == -0.2


def test_project_idempotent_and_array():
    out = project(np.array([-3.0, 0.5, 3.0]), (-1.0, 1.0))
    assert np.array_equal(out, [-1.0, 0.5, 1.0])
    assert np.array_equal(project(out, (-1.0, 1.0)), out)


def test_project_bad_box():
    with pytest.raises(ValueError):
        project(0.0, (1.0, -1.0))


@given(st.floats(allow_nan=False, allow_infinity=False,
                 min_value=-1e9, max_value=1e9),
       st.floats(allow_nan=False, allow_infinity=False,
                 min_value=-1e6, max_value=1e6),
       st.floats(min_value=0.0, max_value=1e6, allow_nan=False))
@settings(max_examples=100)
def test_project_containment_property(x, lo, width):
    hi = lo + width
    out = project(x, (lo, hi))
    assert lo <= out <= hi


# ----------------------------------------------------------- oracle shape


def test_oracle_metadata():
    toy = make_oracle("toy", k=10.0)
    assert toy.dim == 1
    assert toy.feasible_box == (-1.0, 1.0)
    assert toy.convergence_target == -1.0
    assert toy.true_gradient(0.3) == 1.0

    shuffle = make_oracle("shuffle", mode=WITHOUT_REPLACEMENT)
    assert shuffle.convergence_target == 1.0
    assert shuffle.true_gradient(0.0) == pytest.approx(-0.1)

    smooth = make_oracle("smooth", dim=5, sigma=0.5)
    assert smooth.dim == 5
    assert smooth.feasible_box is None


def test_make_oracle_unknown():
    with pytest.raises(ValueError):
        make_oracle("nonexistent")


def test_base_oracle_contract():
    base = GradientOracle()
    with pytest.raises(NotImplementedError):
        base.sample(0.0, random.Random(0))
    assert base.true_gradient(0.0) is None
    assert base.true_loss(0.0) is None


def test_oracles_are_per_run_stateful():
    # two oracles never share epoch state
    a = make_oracle("shuffle", mode=WITHOUT_REPLACEMENT)
    b = make_oracle("shuffle", mode=WITHOUT_REPLACEMENT)
    rng = random.Random(0)
    [a.sample(0.0, rng) for _ in range(2)]
    assert b._epoch.pos == 0


def test_toy_oracle_unbiased_at_k50():
    oracle = make_oracle("toy", k=50.0)
    rng = random.Random(77)
    n = 1_000_000
    total = sum(oracle.sample(0.0, rng) for _ in range(n))
    # variance is huge at k=50; five standard errors of the mean
    se = math.sqrt(50.0**3 + 50.0**2 - 50.0 - 1.0) / math.sqrt(n)
    assert abs(total / n - 1.0) < 5.0 * se
