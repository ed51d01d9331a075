import numpy as np
import pytest

from precisionfit.net import (
    GadgetConfig,
    assemble_boosted,
    backward_from_output,
    forward,
    forward_batch,
    grad,
    grad_xy,
    hessian,
    mlp_from_json,
    mlp_init,
    mlp_to_json,
    modular_forward_batch,
    modular_grad_xy,
    modular_net_build,
    modular_params,
    modular_with_params,
    mse_loss,
    multiplication_gadget,
    n_params_for,
    pack_params,
    parallel_gadget_network,
    relu_depth_bound,
    with_params,
)
from precisionfit.targets import Dataset, box, parse_expression


def _random_data(rng, n, d):
    return rng.uniform(-1, 1, (n, d)), rng.normal(size=n)


def _fd_grad(net, xs, ys):
    g = np.zeros(net.n_params)
    for i in range(net.n_params):
        step = 1e-6 * (1.0 + abs(net.params[i]))
        plus = net.params.copy()
        plus[i] += step
        minus = net.params.copy()
        minus[i] -= step
        g[i] = (
            mse_loss(with_params(net, plus), xs, ys)
            - mse_loss(with_params(net, minus), xs, ys)
        ) / (2 * step)
    return g


class TestMlpInit:
    def test_param_count_width40_depth3(self):
        net = mlp_init((1, 40, 40, 1), "tanh", 0)
        assert net.depth == 3
        assert net.n_params == n_params_for((1, 40, 40, 1)) == 1761

    def test_param_count_width12(self):
        assert mlp_init((6, 12, 1), "tanh", 0).n_params == 6 * 12 + 12 + 12 + 1 == 97

    def test_seed_determinism(self):
        a = mlp_init((2, 8, 1), "relu", 5)
        b = mlp_init((2, 8, 1), "relu", 5)
        assert np.array_equal(a.params, b.params)

    def test_biases_zero(self):
        net = mlp_init((3, 4, 1), "tanh", 1)
        assert np.array_equal(net.params[12:16], np.zeros(4))

    def test_invalid_dims(self):
        with pytest.raises(ValueError):
            mlp_init((3,), "tanh", 0)


class TestForward:
    def test_zero_params_zero_output(self):
        net = with_params(mlp_init((3, 5, 1), "tanh", 0), np.zeros(26))
        assert forward(net, (1.0, -2.0, 0.5)) == 0.0

    def test_depth1_is_affine(self):
        w = np.array([[2.0, -1.0]])
        b = np.array([0.5])
        net = with_params(mlp_init((2, 1), "relu", 0), pack_params([(w, b)]))
        assert forward(net, (3.0, 4.0)) == 2 * 3 - 4 + 0.5

    def test_relu_absolute_value(self):
        w1 = np.array([[1.0], [-1.0]])
        w2 = np.array([[1.0, 1.0]])
        net = with_params(
            mlp_init((1, 2, 1), "relu", 0),
            pack_params([(w1, np.zeros(2)), (w2, np.zeros(1))]),
        )
        for x in (-2.5, -0.1, 0.0, 1.75):
            assert forward(net, (x,)) == abs(x)

    def test_dimension_mismatch(self):
        net = mlp_init((2, 3, 1), "tanh", 0)
        with pytest.raises(ValueError):
            forward_batch(net, np.zeros((4, 3)))


class TestGrad:
    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    @pytest.mark.parametrize("dims", [(2, 1), (3, 8, 1), (2, 6, 6, 1), (1, 5, 5, 5, 1)])
    def test_matches_finite_differences(self, activation, dims):
        rng = np.random.default_rng(hash((activation, dims)) % 2**32)
        net = mlp_init(dims, activation, 1)
        net = with_params(net, net.params + 0.05 * rng.normal(size=net.n_params))
        xs, ys = _random_data(rng, 30, dims[0])
        g = grad_xy(net, xs, ys)
        fd = _fd_grad(net, xs, ys)
        scale = np.abs(fd).max() + 1e-12
        assert np.abs(g - fd).max() / scale <= 1e-6

    def test_zero_at_exact_interpolation(self):
        # fit y = x exactly with a linear net: global minimum of MSE
        net = with_params(
            mlp_init((1, 1), "tanh", 0), np.array([1.0, 0.0])
        )
        xs = np.linspace(-1, 1, 20).reshape(-1, 1)
        g = grad_xy(net, xs, xs[:, 0])
        assert np.linalg.norm(g) <= 1e-12

    def test_depth1_closed_form(self):
        rng = np.random.default_rng(3)
        net = mlp_init((4, 1), "tanh", 2)
        xs, ys = _random_data(rng, 50, 4)
        w = net.params[:4]
        b = net.params[4]
        resid = xs @ w + b - ys
        want_w = 2.0 * xs.T @ resid / len(ys)
        want_b = 2.0 * resid.mean()
        g = grad_xy(net, xs, ys)
        assert np.allclose(g[:4], want_w, rtol=1e-12)
        assert np.isclose(g[4], want_b, rtol=1e-12)


class TestHessian:
    def test_depth1_weight_block(self):
        rng = np.random.default_rng(4)
        net = mlp_init((3, 1), "tanh", 1)
        xs, ys = _random_data(rng, 40, 3)
        data = Dataset(xs, ys, 0, box(-1, 1, 3))
        h = hessian(net, data)
        want = 2.0 * xs.T @ xs / len(ys)
        assert np.allclose(h[:3, :3], want, rtol=1e-6)

    def test_symmetric(self):
        rng = np.random.default_rng(5)
        net = mlp_init((2, 4, 1), "tanh", 0)
        xs, ys = _random_data(rng, 25, 2)
        h = hessian(net, Dataset(xs, ys, 0, box(-1, 1, 2)))
        assert np.array_equal(h, h.T)

    def test_constant_for_linear_model(self):
        rng = np.random.default_rng(6)
        net = mlp_init((2, 1), "tanh", 1)
        xs, ys = _random_data(rng, 30, 2)
        data = Dataset(xs, ys, 0, box(-1, 1, 2))
        h1 = hessian(net, data)
        shifted = with_params(net, net.params + rng.normal(size=net.n_params))
        h2 = hessian(shifted, data)
        assert np.allclose(h1, h2, atol=1e-6 * np.abs(h1).max())

    def test_psd_at_interpolating_minimum(self):
        net = with_params(mlp_init((1, 1), "tanh", 0), np.array([2.0, 1.0]))
        xs = np.linspace(-1, 1, 15).reshape(-1, 1)
        data = Dataset(xs, 2 * xs[:, 0] + 1, 0, box(-1, 1, 1))
        h = hessian(net, data)
        eig = np.linalg.eigvalsh(h)
        assert eig.min() >= -1e-6 * eig.max()

    def test_size_bound(self):
        net = mlp_init((1, 100, 100, 1), "tanh", 0)
        data = Dataset(np.zeros((2, 1)), np.zeros(2), 0, box(-1, 1, 1))
        with pytest.raises(ValueError):
            hessian(net, data)


class TestReluDepthBound:
    @pytest.mark.parametrize("d,want", [(1, 2), (3, 3), (7, 4), (2, 3), (8, 5)])
    def test_values(self, d, want):
        assert relu_depth_bound(d) == want


class TestMultiplicationGadget:
    def test_near_zero_on_axis(self):
        cfg = GadgetConfig(a=1e-2)
        net = multiplication_gadget(cfg)
        for y in np.linspace(-1, 1, 21):
            assert abs(forward(net, (0.0, y))) <= 10 * cfg.a**2

    def test_symmetry_in_arguments(self):
        net = multiplication_gadget(GadgetConfig(a=3e-3))
        rng = np.random.default_rng(7)
        for x, y in rng.uniform(-1, 1, (50, 2)):
            a, b = forward(net, (x, y)), forward(net, (y, x))
            assert abs(a - b) <= 1e-9 * (abs(a) + 1e-9)

    def test_error_quarters_when_a_halves(self):
        grid = np.linspace(-1, 1, 101)
        xs = np.column_stack([m.ravel() for m in np.meshgrid(grid, grid)])
        want = xs[:, 0] * xs[:, 1]

        def max_err(a):
            return np.abs(forward_batch(multiplication_gadget(GadgetConfig(a=a)), xs) - want).max()

        ratio = max_err(1e-2) / max_err(5e-3)
        assert ratio == pytest.approx(4.0, abs=0.4)

    def test_error_slope_is_quadratic(self):
        grid = np.linspace(-1, 1, 51)
        xs = np.column_stack([m.ravel() for m in np.meshgrid(grid, grid)])
        want = xs[:, 0] * xs[:, 1]
        scales = np.array([1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
        errs = [
            np.abs(forward_batch(multiplication_gadget(GadgetConfig(a=a)), xs) - want).max()
            for a in scales
        ]
        slope = np.polyfit(np.log(scales), np.log(errs), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.1)

    def test_degenerate_expansion_point_rejected(self):
        with pytest.raises(ValueError):
            GadgetConfig(a=1e-3, b=0.0)  # tanh''(0) = 0

    def test_parallel_gadget_dot3(self):
        net = parallel_gadget_network([(0, 3), (1, 4), (2, 5)], 6, GadgetConfig(a=1e-4))
        rng = np.random.default_rng(8)
        xs = rng.uniform(1, 5, (2000, 6))
        want = (xs[:, :3] * xs[:, 3:]).sum(axis=1)
        rel = np.sqrt(((forward_batch(net, xs) - want) ** 2).sum() / (want**2).sum())
        assert rel <= 1e-6


class TestModularNet:
    def test_gadget_subnets_match_target(self):
        graph = parse_expression("x1*x2*x3", 3)
        mnet = modular_net_build(graph, (4,), "tanh", 0)
        gadget = multiplication_gadget(GadgetConfig(a=1e-3))
        subnets = {i: gadget for i in mnet.subnets}
        mnet = type(mnet)(graph, subnets)
        rng = np.random.default_rng(9)
        xs = rng.uniform(-1, 1, (500, 3))
        want = xs.prod(axis=1)
        err = np.abs(modular_forward_batch(mnet, xs) - want).max()
        assert err <= 1e-3

    def test_single_node_graph_is_plain_subnet(self):
        graph = parse_expression("sin(x1)", 1)
        mnet = modular_net_build(graph, (6,), "tanh", 2)
        xs = np.random.default_rng(10).uniform(-1, 1, (50, 1))
        sub = mnet.subnets[max(mnet.subnets)]
        assert np.array_equal(modular_forward_batch(mnet, xs), forward_batch(sub, xs))

    def test_param_count_is_sum(self):
        graph = parse_expression("x1*x2+x3", 3)
        mnet = modular_net_build(graph, (5, 5), "tanh", 0)
        assert mnet.n_params == sum(s.n_params for s in mnet.subnets.values())

    def test_modular_grad_matches_fd(self):
        graph = parse_expression("x1*x2+x3", 3)
        mnet = modular_net_build(graph, (4,), "tanh", 3)
        rng = np.random.default_rng(11)
        xs, ys = rng.uniform(-1, 1, (20, 3)), rng.normal(size=20)
        theta = modular_params(mnet)
        g = modular_grad_xy(mnet, xs, ys)
        fd = np.zeros_like(theta)
        for i in range(len(theta)):
            step = 1e-6 * (1 + abs(theta[i]))
            for sign, out in ((1, 0), (-1, 1)):
                t = theta.copy()
                t[i] += sign * step
                m = modular_with_params(mnet, t)
                loss = np.mean((modular_forward_batch(m, xs) - ys) ** 2)
                fd[i] += sign * loss
            fd[i] /= 2 * step
        assert np.abs(g - fd).max() / (np.abs(fd).max() + 1e-12) <= 1e-6


class TestAssembleBoosted:
    def test_zero_scale_returns_first_stage(self):
        f1 = mlp_init((2, 5, 5, 1), "tanh", 0)
        f2 = mlp_init((2, 5, 5, 1), "tanh", 1)
        asm = assemble_boosted(f1, f2, 0.0)
        xs = np.random.default_rng(12).uniform(-2, 2, (200, 2))
        a, b = forward_batch(asm, xs), forward_batch(f1, xs)
        assert np.abs(a - b).max() <= 1e-15 * np.abs(b).max()

    def test_sum_identity(self):
        f1 = mlp_init((3, 9, 9, 1), "tanh", 2)
        f2 = mlp_init((3, 4, 4, 1), "tanh", 3)
        c = 1e-5
        asm = assemble_boosted(f1, f2, c)
        xs = np.random.default_rng(13).uniform(-1, 1, (1000, 3))
        want = forward_batch(f1, xs) + c * forward_batch(f2, xs)
        rel = np.abs(forward_batch(asm, xs) - want).max() / np.abs(want).max()
        assert rel <= 1e-12

    def test_combined_width(self):
        f1 = mlp_init((1, 20, 20, 1), "tanh", 0)
        f2 = mlp_init((1, 20, 20, 1), "tanh", 1)
        asm = assemble_boosted(f1, f2, 0.5)
        assert asm.layer_dims == (1, 40, 40, 1)
        assert asm.n_params == n_params_for((1, 40, 40, 1))

    def test_shape_mismatch_rejected(self):
        f1 = mlp_init((2, 5, 1), "tanh", 0)
        f2 = mlp_init((2, 5, 5, 1), "tanh", 0)
        with pytest.raises(ValueError):
            assemble_boosted(f1, f2, 1.0)


class TestSerialization:
    def test_bit_exact_round_trip(self):
        net = mlp_init((2, 7, 7, 1), "tanh", 42)
        back = mlp_from_json(mlp_to_json(net))
        assert back.layer_dims == net.layer_dims
        assert back.activation == net.activation
        assert np.array_equal(back.params, net.params)


class TestReluPiecewiseLinearity:
    def test_second_difference_vanishes_off_corners(self):
        rng = np.random.default_rng(14)
        net = mlp_init((1, 8, 8, 1), "relu", 6)
        net = with_params(net, net.params + 0.3 * rng.normal(size=net.n_params))
        xs = np.linspace(-2, 2, 1001)
        ys = forward_batch(net, xs.reshape(-1, 1))
        h = xs[1] - xs[0]
        second = np.abs(ys[2:] - 2 * ys[1:-1] + ys[:-2]) / h**2
        # flat except at the finitely many corner points
        assert np.median(second) <= 1e-9
        assert (second > 1e-6).sum() <= 2 * 16  # at most 2 grid cells per corner
