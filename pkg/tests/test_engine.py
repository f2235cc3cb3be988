import numpy as np
import pytest

from mshidden.engine import AdamState, DimensionError, Tape, Tensor, adam_step, finite_diff_check, ops
from mshidden.engine.tensor import reference_precision

from oracles import adam_trace, conv2d_loop, conv_transpose2d_loop

SEEDS = range(5)
TOL = 1e-3


def _away_from_zero(a, margin=0.05):
    return np.sign(a) * (np.abs(a) + margin)


def _probs(rng, shape):
    return rng.uniform(0.05, 0.95, size=shape)


# (op, input factory) pairs; each factory takes an rng and returns the input arrays
GRAD_CASES = {
    "conv2d_s1": (lambda x, w, b: ops.conv2d(x, w, b, stride=1),
                  lambda r: [r.standard_normal((2, 2, 5, 4)), r.standard_normal((3, 2, 3, 3)), r.standard_normal(3)]),
    "conv2d_s2": (lambda x, w, b: ops.conv2d(x, w, b, stride=2),
                  lambda r: [r.standard_normal((2, 2, 6, 4)), r.standard_normal((3, 2, 3, 3)), r.standard_normal(3)]),
    "conv_transpose2d": (ops.conv_transpose2d,
                         lambda r: [r.standard_normal((2, 3, 3, 2)), r.standard_normal((3, 2, 3, 3)),
                                    r.standard_normal(2)]),
    "linear": (ops.linear, lambda r: [r.standard_normal((3, 5)), r.standard_normal((4, 5)), r.standard_normal(4)]),
    "global_avg_pool": (ops.global_avg_pool, lambda r: [r.standard_normal((2, 3, 4, 5))]),
    "concat_channels": (ops.concat_channels,
                        lambda r: [r.standard_normal((2, 2, 3, 3)), r.standard_normal((2, 3, 3, 3))]),
    "expand_planes": (lambda v: ops.expand_planes(v, 3, 2), lambda r: [r.standard_normal((2, 4))]),
    "relu": (ops.relu, lambda r: [_away_from_zero(r.standard_normal((3, 4)))]),
    "sigmoid": (ops.sigmoid, lambda r: [3 * r.standard_normal((3, 4))]),
    "add": (ops.add, lambda r: [r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
    "sub": (ops.sub, lambda r: [r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
    "mul": (ops.mul, lambda r: [r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
    "scale": (lambda x: ops.scale(x, -1.7), lambda r: [r.standard_normal((2, 3))]),
    "shift": (lambda x: ops.shift(x, 0.3), lambda r: [r.standard_normal((2, 3))]),
    "clamp": (lambda x: ops.clamp(x, -0.5, 0.5),
              lambda r: [np.where(np.abs(a := r.uniform(-1, 1, (3, 4))) - 0.5 < 0.05, a * 0.5, a)]),
    "log": (ops.log, lambda r: [r.uniform(0.2, 3.0, (3, 4))]),
    "mean": (ops.mean, lambda r: [r.standard_normal((2, 3, 2))]),
    "sum_all": (ops.sum_all, lambda r: [r.standard_normal((2, 3, 2))]),
    "mse_loss": (ops.mse_loss, lambda r: [r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
    "adversarial_d": (lambda pc, ps: ops.adversarial_losses(pc, ps)[0],
                      lambda r: [_probs(r, (4, 1)), _probs(r, (4, 1))]),
    "adversarial_g": (lambda pc, ps: ops.adversarial_losses(pc, ps)[1],
                      lambda r: [_probs(r, (4, 1)), _probs(r, (4, 1))]),
    "generator_loss": (ops.generator_loss, lambda r: [_probs(r, (4, 1))]),
}


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_op_gradients_match_finite_differences(name, seed):
    op, make = GRAD_CASES[name]
    inputs = make(np.random.default_rng(seed))
    assert finite_diff_check(op, inputs, seed=seed) < TOL


def test_generator_loss_gradient_at_point_three():
    p = Tensor(np.array([[0.3]], dtype=np.float32), requires_grad=True)
    with Tape() as tape:
        loss = ops.generator_loss(p)
    (g,) = tape.gradient(loss, [p])
    h = 1e-4
    numeric = (np.log(1 - (0.3 + h)) - np.log(1 - (0.3 - h))) / (2 * h)
    assert abs(g.item() - numeric) < 1e-3
    assert g.item() == pytest.approx(-1 / 0.7, rel=1e-5)


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conv2d_matches_loop_oracle(stride, seed):
    r = np.random.default_rng(seed)
    x, w, b = r.standard_normal((2, 3, 6, 8)), r.standard_normal((4, 3, 3, 3)), r.standard_normal(4)
    with reference_precision():
        got = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride).data
    np.testing.assert_allclose(got, conv2d_loop(x, w, b, stride), atol=1e-10)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conv_transpose2d_matches_loop_oracle(seed):
    r = np.random.default_rng(seed)
    x, w, b = r.standard_normal((2, 3, 3, 4)), r.standard_normal((3, 2, 3, 3)), r.standard_normal(2)
    with reference_precision():
        got = ops.conv_transpose2d(Tensor(x), Tensor(w), Tensor(b)).data
    assert got.shape == (2, 2, 6, 8)
    np.testing.assert_allclose(got, conv_transpose2d_loop(x, w, b), atol=1e-10)


def test_conv_transpose_is_adjoint_of_strided_conv():
    r = np.random.default_rng(3)
    x, y = r.standard_normal((2, 3, 8, 6)), r.standard_normal((2, 5, 4, 3))
    w = r.standard_normal((5, 3, 3, 3))
    with reference_precision():
        fwd = ops.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(5)), stride=2).data
        back = ops.conv_transpose2d(Tensor(y), Tensor(w), Tensor(np.zeros(3))).data
    assert np.sum(fwd * y) == pytest.approx(np.sum(x * back), rel=1e-12)


def test_conv2d_shape_errors():
    x = Tensor(np.zeros((1, 3, 8, 8)))
    with pytest.raises(DimensionError):
        ops.conv2d(x, Tensor(np.zeros((4, 2, 3, 3))), Tensor(np.zeros(4)))
    with pytest.raises(DimensionError):
        ops.conv2d(Tensor(np.zeros((1, 3, 7, 8))), Tensor(np.zeros((4, 3, 3, 3))), Tensor(np.zeros(4)), stride=2)


def test_sigmoid_is_stable_and_bounded():
    y = ops.sigmoid(Tensor(np.array([-1000.0, -30.0, 0.0, 30.0, 1000.0]))).data
    assert np.all(np.isfinite(y))
    assert np.all((y >= 0) & (y <= 1))
    assert y[2] == 0.5


def test_adversarial_losses_clamp_extremes():
    l_d, l_g = ops.adversarial_losses(Tensor(np.array([[1.0]])), Tensor(np.array([[1.0]])))
    assert np.isfinite(l_d.item()) and np.isfinite(l_g.item())
    assert l_g.item() == pytest.approx(np.log(1e-6), rel=1e-3)


def test_unused_source_gets_zero_gradient():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((3,)), requires_grad=True)
    with Tape() as tape:
        y = ops.sum_all(ops.scale(a, 2.0))
    ga, gb = tape.gradient(y, [a, b])
    np.testing.assert_array_equal(ga, 2 * np.ones((2, 2)))
    np.testing.assert_array_equal(gb, np.zeros(3))


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    with Tape() as tape:
        y = ops.sum_all(ops.mul(x, x))
    (g,) = tape.gradient(y, [x])
    np.testing.assert_allclose(g, [3.0, -4.0])


def test_untracked_ops_are_not_recorded():
    x = Tensor(np.ones(3))
    with Tape() as tape:
        ops.relu(x)
    assert tape.records == []


def test_empty_dimension_rejected():
    with pytest.raises(DimensionError):
        Tensor(np.zeros((2, 0, 3)))


def test_adam_matches_hand_trace():
    grads = [0.5, -1.0, 0.25, 2.0, 0.0, -0.3]
    with reference_precision():
        p = Tensor(np.array([1.0]), requires_grad=True)
    state = AdamState.for_params([p])
    got = []
    for g in grads:
        adam_step([p], [np.array([g])], state)
        got.append(p.data[0])
    np.testing.assert_allclose(got, adam_trace(1.0, grads), rtol=0, atol=1e-12)
    assert state.t == len(grads)


def test_adam_first_step_moves_by_lr():
    p = Tensor(np.array([0.0, 0.0]), requires_grad=True)
    adam_step([p], [np.array([3.0, -0.01])], AdamState.for_params([p]))
    np.testing.assert_allclose(p.data, [-0.001, 0.001], rtol=1e-5)


def test_adam_zero_lr_keeps_params():
    p = Tensor(np.array([0.25, -1.0], dtype=np.float32), requires_grad=True)
    before = p.data.copy()
    state = AdamState.for_params([p], lr=0.0)
    adam_step([p], [np.array([1.0, 2.0], dtype=np.float32)], state)
    np.testing.assert_array_equal(p.data, before)


def test_adam_shape_mismatch():
    p = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(DimensionError):
        adam_step([p], [np.zeros(4)], AdamState.for_params([p]))


def test_relu_propagates_nan():
    y = ops.relu(Tensor(np.array([np.nan, -1.0, 2.0]))).data
    assert np.isnan(y[0]) and y[1] == 0 and y[2] == 2
