import numpy as np
import pytest

from cnnscope.network import (
    Conv,
    Dense,
    MaxPool,
    Network,
    NetworkSpec,
    ShapeError,
    SoftmaxOutput,
    conv2d,
    default_spec,
    maxpool,
    relu,
    softmax,
)

from conftest import toy_spec


def loop_conv2d(x, kernel, bias):
    """Naive quintuple-loop convolution oracle."""
    b, h, w, c = x.shape
    kh, kw, _, f = kernel.shape
    oh, ow = h - kh + 1, w - kw + 1
    out = np.zeros((b, oh, ow, f))
    for s in range(b):
        for i in range(oh):
            for j in range(ow):
                for k in range(f):
                    acc = bias[k]
                    for p in range(kh):
                        for q in range(kw):
                            for r in range(c):
                                acc += x[s, i + p, j + q, r] * kernel[p, q, r, k]
                    out[s, i, j, k] = acc
    return out


def loop_maxpool(x, size=2):
    b, h, w, f = x.shape
    oh, ow = h // size, w // size
    out = np.empty((b, oh, ow, f))
    for s in range(b):
        for i in range(oh):
            for j in range(ow):
                for k in range(f):
                    out[s, i, j, k] = x[s, i * size : (i + 1) * size, j * size : (j + 1) * size, k].max()
    return out


class TestRelu:
    def test_negative_clipped(self):
        assert relu(-1.5) == 0

    def test_zero(self):
        assert relu(0) == 0

    def test_positive_passthrough(self):
        assert relu(2.25) == 2.25


class TestConv2d:
    def test_all_ones(self):
        x = np.ones((1, 3, 3, 1))
        k = np.ones((3, 3, 1, 1))
        out = conv2d(x, k, np.zeros(1))
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 9.0

    def test_delta_kernel_crops_input(self, rng):
        x = rng.uniform(0, 1, (1, 4, 4, 1))
        k = np.zeros((2, 2, 1, 1))
        k[0, 0, 0, 0] = 1.0
        out = conv2d(x, k, np.zeros(1))
        np.testing.assert_array_equal(out[0, :, :, 0], x[0, :3, :3, 0])

    def test_matches_loop_oracle(self, rng):
        x = rng.uniform(-1, 1, (1, 4, 4, 2))
        k = rng.uniform(-1, 1, (3, 3, 2, 2))
        b = rng.uniform(-1, 1, 2)
        np.testing.assert_allclose(conv2d(x, k, b), loop_conv2d(x, k, b), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv2d(np.zeros((1, 4, 4, 2)), np.zeros((3, 3, 1, 1)), np.zeros(1))


class TestMaxpool:
    def test_max_of_four(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
        assert maxpool(x).ravel().tolist() == [4.0]

    def test_constant_input(self):
        x = np.full((1, 4, 4, 2), 3.5)
        np.testing.assert_array_equal(maxpool(x), np.full((1, 2, 2, 2), 3.5))

    def test_matches_loop_oracle(self, rng):
        x = rng.uniform(-1, 1, (1, 6, 6, 3))
        np.testing.assert_array_equal(maxpool(x), loop_maxpool(x))

    def test_odd_trailing_dropped(self, rng):
        x = rng.uniform(0, 1, (2, 5, 5, 1))
        np.testing.assert_array_equal(maxpool(x), loop_maxpool(x))
        assert maxpool(x).shape == (2, 2, 2, 1)

    def test_too_small(self):
        with pytest.raises(ShapeError):
            maxpool(np.zeros((1, 1, 1, 1)))


class TestNetworkSpec:
    def test_default_chain(self):
        spec = default_spec()
        # 28 -> 26 -> 13 -> 11 -> 5 gives a flatten width of 800
        shapes = spec.chain_shapes()
        assert (5, 5, 32) in shapes
        assert (800, 512) in shapes

    def test_inconsistent_chain_rejected(self):
        with pytest.raises(ShapeError):
            NetworkSpec(layers=(Conv(4, 9), SoftmaxOutput(2)), input_shape=(8, 8, 1))

    def test_must_end_in_softmax(self):
        with pytest.raises(ShapeError):
            NetworkSpec(layers=(Conv(4, 3), Dense(8)), input_shape=(8, 8, 1))


class TestTrainStep:
    def test_lr_zero_keeps_weights(self, toy_net, rng):
        x = rng.uniform(0, 1, (4, 8, 8, 1))
        y = rng.integers(0, 4, 4)
        before = [p.copy() for layer in toy_net.layers for p in layer.params().values()]
        toy_net.train_step(x, y, 0.0)
        after = [p for layer in toy_net.layers for p in layer.params().values()]
        for b, a in zip(before, after):
            np.testing.assert_array_equal(b, a)

    def test_overfits_single_sample(self, toy_net, rng):
        x = rng.uniform(0, 1, (1, 8, 8, 1))
        y = np.array([2])
        first, _ = toy_net.train_step(x, y, 0.01)
        for _ in range(49):
            last, _ = toy_net.train_step(x, y, 0.01)
        assert last < first

    def test_step_counter_counts(self, toy_net, rng):
        x = rng.uniform(0, 1, (2, 8, 8, 1))
        y = rng.integers(0, 4, 2)
        for expected in range(1, 6):
            _, record = toy_net.train_step(x, y, 0.001)
            assert toy_net.step_counter == expected
            assert record.step == expected

    def test_record_activations_nonnegative(self, toy_net, rng):
        x = rng.uniform(0, 1, (3, 8, 8, 1))
        y = rng.integers(0, 4, 3)
        _, record = toy_net.train_step(x, y, 0.001)
        assert set(record.activations) == {0, 1}
        for acts in record.activations.values():
            assert acts.min() >= 0

    def test_empty_batch_rejected(self, toy_net):
        with pytest.raises(ValueError):
            toy_net.train_step(np.zeros((0, 8, 8, 1)), np.zeros(0, dtype=int), 0.001)


class TestGradients:
    def test_every_parameter_matches_finite_differences(self, toy_net, rng):
        # 1e-6 relative with a 1e-9 absolute floor: central differences carry
        # ~loss*eps_f64/eps of arithmetic noise (~2e-10 here), which would
        # dominate the ratio for near-zero gradients; a real gradient bug errs
        # at the scale of the gradient itself and is still caught.
        x = rng.uniform(0, 1, (5, 8, 8, 1))
        y = rng.integers(0, 4, 5)
        _, grads = toy_net.loss_and_grads(x, y)
        eps = 1e-5
        for idx, layer_grads in grads.items():
            params = toy_net.layers[idx].params()
            for name, g in layer_grads.items():
                flat = params[name].ravel()
                gflat = g.ravel()
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + eps
                    lp, _ = toy_net.loss_and_grads(x, y)
                    flat[i] = orig - eps
                    lm, _ = toy_net.loss_and_grads(x, y)
                    flat[i] = orig
                    fd = (lp - lm) / (2 * eps)
                    tol = 1e-9 + 1e-6 * max(abs(fd), abs(gflat[i]))
                    assert abs(fd - gflat[i]) <= tol, f"layer {idx} {name}[{i}]: analytic {gflat[i]} vs fd {fd}"


class TestSoftmaxAndEvaluate:
    def test_softmax_rows_sum_to_one(self, rng):
        logits = rng.uniform(-5, 5, (20, 10))
        sums = softmax(logits).sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_untrained_net_near_chance(self, rng):
        net = Network.from_spec(default_spec(), seed=0)
        x = rng.uniform(0, 1, (200, 28, 28, 1))
        y = np.repeat(np.arange(10), 20)
        acc = net.evaluate(x, y)
        assert 0.0 <= acc <= 0.3  # chance is 0.1; random nets are not informative

    def test_memorized_samples_perfect(self, rng):
        # needs enough capacity to drive the loss to ~0 on 10 noise images
        spec = NetworkSpec(layers=(Conv(8, 3), Dense(32), SoftmaxOutput(4)), input_shape=(8, 8, 1))
        net = Network.from_spec(spec, seed=5)
        x = rng.uniform(0, 1, (10, 8, 8, 1))
        y = rng.integers(0, 4, 10)
        loss = None
        for _ in range(300):
            loss, _ = net.train_step(x, y, 0.02)
        assert loss < 0.05
        assert net.evaluate(x, y) == 1.0

    def test_accuracy_matches_manual_count(self, rng):
        net = Network.from_spec(toy_spec(), seed=1)
        x = rng.uniform(0, 1, (100, 8, 8, 1))
        y = rng.integers(0, 4, 100)
        preds = np.array([int(net.forward(x[i : i + 1]).argmax()) for i in range(100)])
        manual = sum(1 for i in range(100) if preds[i] == y[i]) / 100
        assert net.evaluate(x, y) == manual

    def test_empty_dataset_rejected(self, toy_net):
        with pytest.raises(ValueError):
            toy_net.evaluate(np.zeros((0, 8, 8, 1)), np.zeros(0, dtype=int))
