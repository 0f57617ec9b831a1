import numpy as np
from pytest import raises

from rbdet import ConfigError
from rbdet.gradcore import (Tensor, Graph, leaky_relu, sigmoid, exp, log,
                            arctan, clamp, maximum, minimum, concat, matmul,
                            conv2d, max_pool2d, resize, resize_array,
                            interpolation_matrix, bce, gradcheck)

rng = np.random.default_rng(20)


def away_from_zero(*shape, lo=0.1, hi=1.):
    return rng.uniform(lo, hi, shape) * rng.choice([-1., 1.], shape)


class TestBackward:
    def test_shared_node(self):
        """d(x^2 + x)/dx = 2 x + 1"""
        x = Tensor([1., -2., 3.], requires_grad=True)
        (x * x + x).sum().backward()
        np.testing.assert_array_equal(x.grad, [3., -3., 7.])

    def test_accumulates(self):
        x = Tensor([2.], requires_grad=True)
        for _ in range(2):
            (3 * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [6.])
        x.zero_grad()
        assert x.grad is None

    def test_broadcast(self):
        """summing a (3, 1) + (1, 4) grid: each entry of a is used
        4 times, each of b 3 times"""
        a = Tensor(np.zeros((3, 1)), requires_grad=True)
        b = Tensor(np.zeros((1, 4)), requires_grad=True)
        (a + b).sum().backward()
        np.testing.assert_array_equal(a.grad, np.full((3, 1), 4.))
        np.testing.assert_array_equal(b.grad, np.full((1, 4), 3.))

    def test_ndarray_on_the_left(self):
        x = Tensor([1., 2.], requires_grad=True)
        y = np.array([3., 4.]) * x
        assert isinstance(y, Tensor)
        y.sum().backward()
        np.testing.assert_array_equal(x.grad, [3., 4.])

    def test_constant_leaves_untouched(self):
        x = Tensor([1.], requires_grad=True)
        c = Tensor([5.])
        (x * c).sum().backward()
        assert c.grad is None

    def test_non_scalar(self):
        with raises(ConfigError):
            Tensor([1., 2.], requires_grad=True).backward()

    def test_graph_order(self):
        x = Tensor([1.], requires_grad=True)
        y = x * 2
        z = (y + y).sum()
        nodes = Graph.from_output(z).nodes
        assert nodes[-1] is z
        assert nodes.index(x) < nodes.index(y)
        assert Graph.from_output(z).leaves == [x]

    def test_deep_chain(self):
        x = Tensor([1.], requires_grad=True)
        y = x
        for _ in range(5000):
            y = y + 0.
        y.sum().backward()
        np.testing.assert_array_equal(x.grad, [1.])


class TestElementwise:
    def test_arithmetic(self):
        gradcheck(lambda a, b: ((a * b - a / b) ** 2 + (-a)).sum(),
                  [rng.normal(size=(2, 3)), away_from_zero(2, 3, lo=0.5)])

    def test_transcendental(self):
        gradcheck(lambda a: (exp(a) + log(a * a + 1.) + sigmoid(a)
                             + arctan(a)).mean(),
                  [rng.normal(size=(4,))])

    def test_leaky_relu(self):
        x = away_from_zero(5)
        gradcheck(lambda a: (leaky_relu(a, 0.1) ** 2).sum(), [x])
        np.testing.assert_allclose(leaky_relu(Tensor([-2., 3.])).numpy(),
                                   [-0.2, 3.])

    def test_clamp(self):
        x = np.array([-2., -0.3, 0.4, 1.7])
        gradcheck(lambda a: (clamp(a, -1., 1.) ** 2).sum(), [x])
        t = Tensor(x, requires_grad=True)
        clamp(t, -1., 1.).sum().backward()
        np.testing.assert_array_equal(t.grad, [0., 1., 1., 0.])

    def test_maximum_minimum(self):
        a, b = np.array([1., -1., 2.]), np.array([0., 0.5, 3.])
        gradcheck(lambda p, q: (maximum(p, q) * minimum(p, q)).sum(), [a, b])


class TestStructural:
    def test_reductions(self):
        gradcheck(lambda a: (a.sum(axis=0) * a.mean(axis=1,
                                                     keepdims=True).sum()
                             ).sum(), [rng.normal(size=(3, 3))])

    def test_reshape_transpose(self):
        gradcheck(lambda a: (a.reshape(2, 6).transpose() ** 2
                             * np.arange(12.).reshape(6, 2)).sum(),
                  [rng.normal(size=(3, 4))])

    def test_getitem(self):
        x = Tensor(np.arange(6.).reshape(2, 3), requires_grad=True)
        (x[:, 1] * 2).sum().backward()
        np.testing.assert_array_equal(x.grad, [[0, 2, 0], [0, 2, 0]])
        gradcheck(lambda a: (a[1:, ::2] ** 3).sum(),
                  [rng.normal(size=(3, 4))])

    def test_concat(self):
        gradcheck(lambda a, b: (concat([a, b], axis=1) ** 2
                                * np.arange(10.).reshape(2, 5)).sum(),
                  [rng.normal(size=(2, 2)), rng.normal(size=(2, 3))])

    def test_matmul(self):
        gradcheck(lambda a, b: ((a @ b) ** 2).sum(),
                  [rng.normal(size=(2, 3)), rng.normal(size=(3, 4))])
        with raises(ConfigError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


def brute_force_conv(x, kernel, stride, pad):
    n, _, h, w = x.shape
    c_out, _, k, _ = kernel.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1
    out = np.zeros((n, c_out, ho, wo))
    for b in range(n):
        for o in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    window = xp[b, :, i * stride:i * stride + k,
                                j * stride:j * stride + k]
                    out[b, o, i, j] = (window * kernel[o]).sum()
    return out


class TestConv2d:
    x = rng.normal(size=(2, 3, 6, 6))
    kernel = rng.normal(size=(4, 3, 3, 3))

    def test_forward(self):
        """cross-correlation, as written out in loops"""
        for stride, pad in [(1, 1), (1, 0), (3, 0)]:
            np.testing.assert_allclose(
                conv2d(self.x, self.kernel, stride=stride, pad=pad).numpy(),
                brute_force_conv(self.x, self.kernel, stride, pad))

    def test_single_image(self):
        out = conv2d(self.x[0], self.kernel, pad=1)
        assert out.shape == (4, 6, 6)
        np.testing.assert_allclose(
            out.numpy(), conv2d(self.x, self.kernel, pad=1).numpy()[0])

    def test_bias(self):
        bias = np.arange(4.)
        np.testing.assert_allclose(
            conv2d(self.x, self.kernel, bias, pad=1).numpy()
            - conv2d(self.x, self.kernel, pad=1).numpy(),
            np.broadcast_to(bias[:, None, None], (2, 4, 6, 6)))

    def test_gradient(self):
        gradcheck(lambda x, k, b: (conv2d(x, k, b, pad=1) ** 2).mean(),
                  [self.x[:1], self.kernel, rng.normal(size=4)])

    def test_gradient_strided(self):
        gradcheck(lambda x, k: (conv2d(x, k, stride=3) ** 2).sum(),
                  [self.x[:1], self.kernel])

    def test_bad_shapes(self):
        with raises(ConfigError):
            conv2d(self.x, rng.normal(size=(4, 3, 2, 2)))
        with raises(ConfigError):
            conv2d(self.x, rng.normal(size=(4, 2, 3, 3)))
        with raises(ConfigError):
            conv2d(self.x, self.kernel, stride=2)

    def test_random_shapes(self):
        """sixty seeded shapes, strides and pads against the loops"""
        draw = np.random.default_rng(2024)
        for _ in range(60):
            k = int(draw.choice([1, 3, 5]))
            stride = int(draw.integers(1, 4))
            pad = int(draw.integers(0, k // 2 + 1))
            h_out, w_out = draw.integers(1, 5, size=2)
            h = (h_out - 1) * stride + k - 2 * pad
            w = (w_out - 1) * stride + k - 2 * pad
            n, c_in, c_out = draw.integers(1, 4, size=3)
            x = draw.normal(size=(n, c_in, h, w))
            kernel = draw.normal(size=(c_out, c_in, k, k))
            out = conv2d(x, kernel, stride=stride, pad=pad).numpy()
            assert out.shape == (n, c_out, h_out, w_out)
            np.testing.assert_allclose(
                out, brute_force_conv(x, kernel, stride, pad),
                rtol=1e-9, atol=1e-12)


class TestMaxPool:
    def test_forward(self):
        x = np.arange(16.).reshape(1, 4, 4)
        np.testing.assert_array_equal(max_pool2d(x).numpy(),
                                      [[[5., 7.], [13., 15.]]])

    def test_gradient(self):
        gradcheck(lambda x: (max_pool2d(x) ** 2).sum(),
                  [rng.permutation(32).reshape(2, 4, 4) / 4.])

    def test_routes_to_winner(self):
        x = Tensor(np.array([[1., 4.], [2., 3.]]), requires_grad=True)
        max_pool2d(x).sum().backward()
        np.testing.assert_array_equal(x.grad, [[0., 1.], [0., 0.]])

    def test_odd_side(self):
        with raises(ConfigError):
            max_pool2d(np.zeros((3, 4)))


class TestResize:
    def test_rows_sum_to_one(self):
        for method in ('nearest', 'bilinear'):
            for n_out, n_in in [(7, 3), (3, 7), (5, 5)]:
                np.testing.assert_allclose(
                    interpolation_matrix(n_out, n_in, method).sum(axis=1), 1.)

    def test_identity(self):
        np.testing.assert_allclose(interpolation_matrix(4, 4), np.eye(4))

    def test_nearest_doubling(self):
        """each pixel becomes a 2 x 2 block"""
        x = np.array([[1., 2.], [3., 4.]])
        np.testing.assert_array_equal(
            resize_array(x, (4, 4), 'nearest'),
            np.kron(x, np.ones((2, 2))))

    def test_constant(self):
        x = np.full((3, 5, 3), 0.7)
        np.testing.assert_allclose(resize_array(x, (8, 2)), 0.7)

    def test_matches_array(self):
        x = rng.uniform(size=(5, 6, 3))
        np.testing.assert_allclose(resize(x, (9, 4)).numpy(),
                                   resize_array(x, (9, 4)))

    def test_gradient(self):
        gradcheck(lambda x: (resize(x, (7, 3)) ** 2).sum(),
                  [rng.uniform(size=(4, 5, 3))])

    def test_unknown_method(self):
        with raises(ConfigError):
            interpolation_matrix(2, 3, 'bicubic')


class TestBCE:
    def test_value(self):
        """-log(1/2) = log 2 whatever the target"""
        np.testing.assert_allclose(
            bce(np.full(3, 0.5), [0., 1., 0.3]).item(), np.log(2))

    def test_reductions(self):
        p, t = np.array([0.2, 0.9]), np.array([0., 1.])
        each = -np.log([0.8, 0.9])
        np.testing.assert_allclose(bce(p, t, 'none').numpy(), each)
        np.testing.assert_allclose(bce(p, t, 'sum').item(), each.sum())
        with raises(ConfigError):
            bce(p, t, 'max')

    def test_clamped(self):
        p = Tensor([0., 1.], requires_grad=True)
        loss = bce(p, [1., 0.], 'sum')
        assert np.isfinite(loss.item())
        loss.backward()
        np.testing.assert_array_equal(p.grad, [0., 0.])

    def test_gradient(self):
        gradcheck(lambda z: bce(sigmoid(z), [0., 1., 0.25, 1.]),
                  [rng.normal(size=4)])

    def test_shape_mismatch(self):
        with raises(ConfigError):
            bce(np.full(3, 0.5), np.zeros(2))
