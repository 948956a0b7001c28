import math
import random
import struct

import numpy as np
import pytest

from adopt_lab.models import (
    Dataset,
    MLPBatchOracle,
    MLPSpec,
    accuracy,
    finite_diff_check,
    mlp_init,
    mlp_loss,
    mlp_loss_and_grad,
    parse_idx,
    render_idx,
    synth_gaussian_classes,
    unpack_params,
)


def small_batch(seed=0, n=16, spec=MLPSpec(4, 8, 3)):
    rng = np.random.default_rng(seed)
    inputs = rng.standard_normal((n, spec.input_dim))
    labels = rng.integers(0, spec.output_dim, size=n)
    return spec, inputs, labels


# ------------------------------------------------------------------- spec


def test_param_count():
    spec = MLPSpec(4, 8, 3)
    assert spec.param_count == 4 * 8 + 8 + 8 * 3 + 3


def test_spec_validation():
    with pytest.raises(ValueError):
        MLPSpec(0, 8, 3)


def test_unpack_params_views():
    spec = MLPSpec(2, 3, 2)
    params = np.zeros(spec.param_count)
    w1, b1, w2, b2 = unpack_params(spec, params)
    w1[0, 0] = 5.0
    b2[-1] = 7.0
    assert params[0] == 5.0
    assert params[-1] == 7.0
    with pytest.raises(ValueError):
        unpack_params(spec, np.zeros(3))


# ------------------------------------------------------------------- init


def test_mlp_init_deterministic():
    spec = MLPSpec(4, 8, 3)
    assert np.array_equal(mlp_init(spec, 42), mlp_init(spec, 42))
    assert not np.array_equal(mlp_init(spec, 42), mlp_init(spec, 43))


def test_mlp_init_bias_zero_and_weight_bounds():
    spec = MLPSpec(2, 3, 2)
    params = mlp_init(spec, 0)
    w1, b1, w2, b2 = unpack_params(spec, params)
    assert np.all(b1 == 0.0)
    assert np.all(b2 == 0.0)
    assert np.all(np.abs(w1) <= math.sqrt(6.0 / (2 + 3)))
    assert np.all(np.abs(w2) <= math.sqrt(6.0 / (3 + 2)))


# ---------------------------------------------------------------- loss/grad


def test_zero_network_loss_is_log_num_classes():
    spec, inputs, labels = small_batch()
    params = np.zeros(spec.param_count)
    loss, _ = mlp_loss_and_grad(spec, params, inputs, labels)
    assert loss == pytest.approx(math.log(3.0), rel=1e-12)
    spec10 = MLPSpec(4, 8, 10)
    loss10 = mlp_loss(spec10, np.zeros(spec10.param_count), inputs,
                      np.zeros(len(inputs), dtype=np.int64))
    assert loss10 == pytest.approx(2.302585, abs=1e-6)


def test_true_class_bias_gradient_negative_at_zero_net():
    spec = MLPSpec(4, 8, 3)
    rng = np.random.default_rng(1)
    inputs = rng.standard_normal((8, 4))
    labels = np.full(8, 2, dtype=np.int64)
    _, grad = mlp_loss_and_grad(spec, np.zeros(spec.param_count), inputs, labels)
    _, _, _, gb2 = unpack_params(spec, grad)
    assert gb2[2] < 0.0
    # and the rows of the softmax gradient sum to zero across classes
    assert sum(gb2) == pytest.approx(0.0, abs=1e-12)


def test_softmax_gradient_single_sample_sums_to_zero():
    spec = MLPSpec(4, 8, 3)
    params = mlp_init(spec, 3)
    rng = np.random.default_rng(4)
    for label in range(3):
        inputs = rng.standard_normal((1, 4))
        _, grad = mlp_loss_and_grad(spec, params, inputs,
                                    np.array([label], dtype=np.int64))
        _, _, _, gb2 = unpack_params(spec, grad)
        assert sum(gb2) == pytest.approx(0.0, abs=1e-12)


def test_empty_batch_rejected():
    spec = MLPSpec(4, 8, 3)
    with pytest.raises(ValueError):
        mlp_loss_and_grad(spec, np.zeros(spec.param_count),
                          np.zeros((0, 4)), np.zeros(0, dtype=np.int64))


def test_finite_diff_small_network():
    spec, inputs, labels = small_batch(seed=7)
    params = mlp_init(spec, 7)
    err = finite_diff_check(spec, params, inputs, labels, h=1e-5)
    assert err < 1e-5


def test_finite_diff_zero_network():
    spec, inputs, labels = small_batch(seed=2)
    err = finite_diff_check(spec, np.zeros(spec.param_count), inputs, labels,
                            h=1e-5)
    assert err < 1e-5


def test_finite_diff_coarse_h_degrades():
    spec, inputs, labels = small_batch(seed=11)
    params = mlp_init(spec, 11)
    fine = finite_diff_check(spec, params, inputs, labels, h=1e-5)
    coarse = finite_diff_check(spec, params, inputs, labels, h=1e-2)
    assert coarse > fine


# ------------------------------------------------------------------- data


def test_synth_gaussian_shapes_and_determinism():
    ds = synth_gaussian_classes(100, 16, 3, 6.0, seed=0)
    assert len(ds) == 300
    assert ds.inputs.shape == (300, 16)
    counts = np.bincount(ds.labels, minlength=3)
    assert np.array_equal(counts, [100, 100, 100])
    ds2 = synth_gaussian_classes(100, 16, 3, 6.0, seed=0)
    assert np.array_equal(ds.inputs, ds2.inputs)


def test_synth_gaussian_nearest_centroid_separates():
    ds = synth_gaussian_classes(100, 8, 2, 6.0, seed=5)
    centers = np.stack([ds.inputs[ds.labels == c].mean(axis=0)
                        for c in range(2)])
    d = ((ds.inputs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    predicted = np.argmin(d, axis=1)
    assert np.mean(predicted == ds.labels) >= 0.99


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(inputs=np.zeros(3), labels=np.zeros(3, dtype=np.int64),
                num_classes=2)
    with pytest.raises(ValueError):
        Dataset(inputs=np.zeros((3, 2)), labels=np.zeros(4, dtype=np.int64),
                num_classes=2)


# -------------------------------------------------------------------- idx


def test_parse_idx_labels_by_hand():
    data = struct.pack(">I", 0x00000801) + struct.pack(">i", 2) + bytes([5, 9])
    dims, values = parse_idx(data)
    assert dims == (2,)
    assert values.tolist() == [5, 9]
    assert values.dtype == np.int64


def test_parse_idx_images_by_hand():
    header = struct.pack(">I", 0x00000803) + struct.pack(">iii", 1, 2, 2)
    payload = bytes([0, 51, 102, 255])
    dims, values = parse_idx(header + payload)
    assert dims == (1, 2, 2)
    assert values.shape == (1, 2, 2)
    assert values.dtype == np.float64
    assert values.ravel().tolist() == pytest.approx(
        [0.0, 51 / 255, 102 / 255, 1.0])


def test_parse_idx_errors():
    with pytest.raises(ValueError):
        parse_idx(b"\x00\x00")
    with pytest.raises(ValueError):
        parse_idx(struct.pack(">I", 0x00000999) + b"\x00" * 8)
    truncated = (struct.pack(">I", 0x00000801) + struct.pack(">i", 5)
                 + bytes([1, 2]))
    with pytest.raises(ValueError):
        parse_idx(truncated)


def test_idx_round_trip():
    labels = np.array([3, 1, 4, 1, 5], dtype=np.int64)
    blob = render_idx((5,), labels)
    dims, back = parse_idx(blob)
    assert dims == (5,)
    assert np.array_equal(back, labels)
    assert render_idx(dims, back) == blob

    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(2, 3, 3)).astype(np.float64) / 255.0
    blob = render_idx((2, 3, 3), imgs)
    dims, back = parse_idx(blob)
    assert render_idx(dims, back) == blob
    assert np.allclose(back, imgs)


# ---------------------------------------------------------------- accuracy


def test_accuracy_tie_break_toward_class_zero():
    spec = MLPSpec(2, 3, 2)
    params = np.zeros(spec.param_count)
    inputs = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
    labels = np.array([0, 0, 1, 1], dtype=np.int64)
    ds = Dataset(inputs=inputs, labels=labels, num_classes=2)
    # all logits equal, so everything is predicted class 0
    assert accuracy(spec, params, ds) == 0.5


def test_accuracy_perfect_single_sample():
    spec = MLPSpec(2, 3, 2)
    ds = Dataset(inputs=np.array([[1.0, 1.0]]),
                 labels=np.array([1], dtype=np.int64), num_classes=2)
    params = np.zeros(spec.param_count)
    _, _, _, b2 = unpack_params(spec, params)
    b2[1] = 5.0
    assert accuracy(spec, params, ds) == 1.0


# ------------------------------------------------------------ batch oracle


def test_batch_oracle_contract():
    ds = synth_gaussian_classes(20, 4, 3, 6.0, seed=1)
    spec = MLPSpec(4, 8, 3)
    oracle = MLPBatchOracle(spec, ds, batch_size=8)
    assert oracle.dim == spec.param_count
    assert oracle.last_loss is None
    rng = random.Random(0)
    g = oracle.sample(mlp_init(spec, 1), rng)
    assert g.shape == (spec.param_count,)
    assert oracle.last_loss is not None and oracle.last_loss > 0.0


def test_batch_oracle_clamps_batch_size():
    ds = synth_gaussian_classes(2, 4, 2, 6.0, seed=1)
    oracle = MLPBatchOracle(MLPSpec(4, 8, 2), ds, batch_size=100)
    assert oracle.batch_size == 4
    with pytest.raises(ValueError):
        MLPBatchOracle(MLPSpec(4, 8, 2), ds, batch_size=0)
