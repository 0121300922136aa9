import numpy as np
import pytest

from ranlab.core.exceptions import DimensionMismatchError
from ranlab.services.neural import (
    AdamState,
    DenseNet,
    NetTrainer,
    UniformQuantizer,
    adam_step,
    dequantize,
    forward,
    gradient_check,
    gradients,
    init_net,
    load_checkpoint,
    quantize,
    save_checkpoint,
    straight_through,
)
from tests.conftest import linear_net


def test_forward_identity():
    net = linear_net(np.eye(2), [0.0, 0.0])
    assert np.allclose(forward(net, [1.0, 2.0]), [1.0, 2.0])


def test_forward_affine():
    net = linear_net([[2.0]], [1.0])
    assert np.allclose(forward(net, [3.0]), [7.0])


def test_forward_relu_all_negative():
    net = DenseNet(
        layer_sizes=[2, 3],
        activations=["relu"],
        weights=[-np.ones((3, 2))],
        biases=[-np.ones(3)],
    )
    assert np.array_equal(forward(net, [1.0, 2.0]), np.zeros(3))


def test_forward_batch_matches_rows(rng):
    net = init_net([4, 8, 3], ["tanh", "linear"], rng)
    x = rng.standard_normal((5, 4))
    batch = forward(net, x)
    assert batch.shape == (5, 3)
    for i in range(5):
        assert np.allclose(batch[i], forward(net, x[i]))


def test_forward_rejects_wrong_length(rng):
    net = init_net([4, 3], ["linear"], rng)
    with pytest.raises(DimensionMismatchError):
        forward(net, np.ones(5))


def test_dense_net_rejects_inconsistent_shapes():
    with pytest.raises(DimensionMismatchError):
        DenseNet(layer_sizes=[2, 3], activations=["linear"], weights=[np.ones((2, 2))], biases=[np.zeros(3)])
    with pytest.raises(ValueError):
        DenseNet(layer_sizes=[2, 3], activations=["softplus"], weights=[np.ones((3, 2))], biases=[np.zeros(3)])


def test_linear_gradient_is_outer_product():
    W = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    net = linear_net(W, [0.0, 0.0])
    x = np.array([0.5, -1.0, 2.0])
    grads, dx = gradients(net, x, [0.0, 1.0])
    assert np.allclose(grads.weights[0], np.outer([0.0, 1.0], x))
    assert np.allclose(grads.biases[0], [0.0, 1.0])
    assert np.allclose(dx, W[1])


def test_zero_output_gradient(rng):
    net = init_net([3, 5, 2], ["sigmoid", "tanh"], rng)
    grads, dx = gradients(net, rng.standard_normal(3), np.zeros(2))
    assert all(not np.any(g) for g in grads.as_list())
    assert not np.any(dx)


@pytest.mark.parametrize("case", range(20))
def test_gradient_check_random_nets(case):
    rng = np.random.default_rng([7, case])
    depth = int(rng.integers(2, 5))
    sizes = [int(n) for n in rng.integers(1, 33, size=depth + 1)]
    kinds = ["relu", "tanh", "sigmoid", "linear"]
    activations = [kinds[(case + i) % 4] for i in range(depth)]
    net = init_net(sizes, activations, rng)
    for b in net.biases:
        b += rng.uniform(-0.1, 0.1, size=b.shape)
    x = rng.standard_normal(sizes[0])
    assert gradient_check(net, x, rng) <= 1e-4


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, -2.0])]
    state = AdamState.for_params(p)
    adam_step(state, p, [np.zeros(2)])
    assert np.array_equal(p[0], [1.0, -2.0])
    assert state.step == 1


def test_adam_first_step_moves_by_lr_sign():
    p = [np.array([0.0, 0.0, 0.0])]
    state = AdamState.for_params(p, lr=0.01)
    adam_step(state, p, [np.array([3.0, -0.2, 50.0])])
    assert np.allclose(p[0], [-0.01, 0.01, -0.01], atol=1e-8)


def test_adam_converges_on_quadratic():
    w = [np.array([0.0])]
    state = AdamState.for_params(w, lr=0.1)
    for _ in range(300):
        adam_step(state, w, [2.0 * (w[0] - 3.0)])
    assert abs(w[0][0] - 3.0) < 1e-2


def test_adam_rejects_shape_mismatch():
    p = [np.zeros(2)]
    state = AdamState.for_params(p)
    with pytest.raises(DimensionMismatchError):
        adam_step(state, p, [np.zeros(3)])


def test_net_trainer_fits_constant(rng):
    net = init_net([2, 1], ["linear"], rng)
    trainer = NetTrainer(net, lr=0.05)
    x = rng.standard_normal((32, 2))
    for _ in range(500):
        y = forward(net, x)
        grads, _ = gradients(net, x, 2.0 * (y - 4.0) / len(x))
        trainer.step(grads)
    assert np.allclose(forward(net, x), 4.0, atol=1e-2)


def test_quantizer_examples():
    q = UniformQuantizer(bits=2)
    assert np.allclose(dequantize(q, np.arange(4)), [-0.75, -0.25, 0.25, 0.75])
    codes, level = quantize(q, [0.3, 5.0, -5.0])
    assert np.allclose(level, [0.25, 0.75, -0.75])
    assert list(codes) == [2, 3, 0]


def test_quantizer_error_bound(rng):
    q = UniformQuantizer(bits=5, lo=-2.0, hi=3.0)
    v = rng.uniform(-2.0, 3.0, size=1000)
    codes, levels = quantize(q, v)
    assert np.all(np.abs(levels - v) <= q.step / 2 + 1e-12)
    assert np.array_equal(dequantize(q, codes), levels)
    assert codes.min() >= 0 and codes.max() < q.levels


def test_quantizer_validation():
    with pytest.raises(ValueError):
        UniformQuantizer(bits=0)
    with pytest.raises(ValueError):
        UniformQuantizer(bits=2, lo=1.0, hi=1.0)
    with pytest.raises(ValueError):
        dequantize(UniformQuantizer(bits=2), [4])


def test_straight_through_matches_unquantized_gradient(rng):
    q = UniformQuantizer(bits=3)
    z = rng.uniform(-0.9, 0.9, size=(4, 6))
    g = rng.standard_normal((4, 6))
    assert np.array_equal(straight_through(q, z, g), g)
    clipped = straight_through(q, np.array([1.5, -0.2, -3.0]), np.ones(3))
    assert list(clipped) == [0.0, 1.0, 0.0]


def test_checkpoint_round_trip(tmp_path, rng):
    net = init_net([3, 4, 2], ["relu", "linear"], rng)
    path = tmp_path / "net.json"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    assert loaded.layer_sizes == net.layer_sizes
    assert loaded.activations == net.activations
    for a, b in zip(loaded.parameters(), net.parameters()):
        assert np.array_equal(a, b)


def test_init_net_is_seeded():
    a = init_net([5, 7, 2], ["relu", "linear"], np.random.default_rng(3))
    b = init_net([5, 7, 2], ["relu", "linear"], np.random.default_rng(3))
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)
    limit = np.sqrt(6.0 / 12.0)
    assert np.all(np.abs(a.weights[0]) <= limit)
