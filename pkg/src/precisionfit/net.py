"""Multilayer perceptrons with exact gradients and dense Hessians.

Networks are immutable: a flat f64 parameter vector plus layer shapes.
Optimizers produce new Mlp values via `with_params`.  Also provides the
four-neuron multiplication gadget, computation-graph-shaped modular
networks, and block-diagonal assembly of boosted stages.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .targets import LEAF_OPS

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class Mlp:
    layer_dims: tuple
    activation: str
    params: np.ndarray

    def __post_init__(self):
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ValueError("layer_dims needs >= 2 positive entries")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if len(self.params) != n_params_for(self.layer_dims):
            raise ValueError("params length does not match layer_dims")

    @property
    def depth(self):
        """Number of affine maps (one more than hidden layer count)."""
        return len(self.layer_dims) - 1

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def n_params(self):
        return len(self.params)


def n_params_for(layer_dims):
    return sum(
        layer_dims[i] * layer_dims[i + 1] + layer_dims[i + 1]
        for i in range(len(layer_dims) - 1)
    )


def with_params(net, params):
    params = np.asarray(params, dtype=np.float64)
    return replace(net, params=params)


def unpack_params(net):
    """Split the flat vector into per-layer (W, b), W shaped (out, in)."""
    layers = []
    offset = 0
    dims = net.layer_dims
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = net.params[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in)
        offset += fan_in * fan_out
        b = net.params[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def pack_params(layers):
    chunks = []
    for w, b in layers:
        chunks.append(np.asarray(w, dtype=np.float64).ravel())
        chunks.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(chunks)


def mlp_init(layer_dims, activation, seed):
    """Weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero."""
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(layer_dims) - 1):
        fan_in, fan_out = layer_dims[i], layer_dims[i + 1]
        bound = 1.0 / math.sqrt(fan_in)
        layers.append(
            (rng.uniform(-bound, bound, size=(fan_out, fan_in)), np.zeros(fan_out))
        )
    return Mlp(tuple(layer_dims), activation, pack_params(layers))


def _act(activation, z):
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_deriv(activation, z, a):
    """Derivative from preactivation z and activation a = act(z)."""
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


def forward_batch(net, xs):
    """Network output for each row of xs; shape (m,)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != net.in_dim:
        raise ValueError(f"expected inputs of shape (m, {net.in_dim})")
    a = xs
    layers = unpack_params(net)
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = _act(net.activation, z) if i < len(layers) - 1 else z
    return a[:, 0] if a.shape[1] == 1 else a


def forward(net, x):
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(forward_batch(net, x)[0])


def backward_from_output(net, xs, dout):
    """Reverse-mode pass seeded with d(objective)/d(output) per sample.

    Returns (flat parameter gradient, gradient w.r.t. the inputs).
    """
    xs = np.asarray(xs, dtype=np.float64)
    layers = unpack_params(net)
    acts = [xs]
    zs = []
    a = xs
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        zs.append(z)
        a = _act(net.activation, z) if i < len(layers) - 1 else z
        acts.append(a)
    delta = np.asarray(dout, dtype=np.float64).reshape(-1, 1)
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _b = layers[i]
        gw = delta.T @ acts[i]
        gb = delta.sum(axis=0)
        grads[i] = (gw, gb)
        delta = delta @ w
        if i > 0:
            delta = delta * _act_deriv(net.activation, zs[i - 1], acts[i])
    return pack_params(grads), delta


def mse_loss(net, xs, ys):
    residual = forward_batch(net, xs) - np.asarray(ys, dtype=np.float64)
    return float(np.mean(residual * residual))


def grad(net, data):
    """Exact gradient of mean squared error over the dataset."""
    return grad_xy(net, data.inputs, data.targets)


def grad_xy(net, xs, ys):
    preds = forward_batch(net, xs)
    dout = 2.0 * (preds - np.asarray(ys, dtype=np.float64)) / len(preds)
    g, _ = backward_from_output(net, xs, dout)
    return g


HESSIAN_MAX_PARAMS = 5000


def hessian(net, data, step_scale=1e-5):
    """Dense Hessian of the MSE loss by central differences of the gradient."""
    n = net.n_params
    if n > HESSIAN_MAX_PARAMS:
        raise ValueError(f"parameter count {n} exceeds dense bound {HESSIAN_MAX_PARAMS}")
    xs, ys = data.inputs, data.targets
    theta = net.params
    h = np.empty((n, n))
    for i in range(n):
        step = step_scale * (1.0 + abs(theta[i]))
        plus = theta.copy()
        plus[i] += step
        minus = theta.copy()
        minus[i] -= step
        gp = grad_xy(with_params(net, plus), xs, ys)
        gm = grad_xy(with_params(net, minus), xs, ys)
        h[:, i] = (gp - gm) / (2.0 * step)
    return 0.5 * (h + h.T)


def relu_depth_bound(d):
    """Depth sufficient for a ReLU net to express any piecewise-linear f on R^d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return math.ceil(math.log2(d + 1)) + 1


# ----------------------------------------------------------------------
# Multiplication gadget
# ----------------------------------------------------------------------

def tanh_d2(b):
    t = math.tanh(b)
    return -2.0 * t * (1.0 - t * t)


@dataclass(frozen=True)
class GadgetConfig:
    a: float = 1e-3
    b: float = 1.0  # tanh''(0) = 0, so expand off-origin

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError("scale a must be positive")
        if abs(tanh_d2(self.b)) <= 1e-3:
            raise ValueError("second derivative at b too small")


def multiplication_gadget(cfg=GadgetConfig()):
    """[2, 4, 1] tanh network computing x*y with O(a^2) error.

    Hidden units see b + a*(±x ± y); the even second-order Taylor term
    isolates the cross term 4*a^2*x*y, removed constants cancel pairwise.
    """
    a, b = cfg.a, cfg.b
    scale = 1.0 / (4.0 * a * a * tanh_d2(b))
    w1 = np.array([[a, a], [-a, -a], [a, -a], [-a, a]])
    b1 = np.array([b, b, b, b])
    w2 = np.array([[scale, scale, -scale, -scale]])
    b2 = np.zeros(1)
    return Mlp((2, 4, 1), "tanh", pack_params([(w1, b1), (w2, b2)]))


def parallel_gadget_network(pairs, in_dim, cfg=GadgetConfig()):
    """One-hidden-layer tanh net summing gadget products over index pairs.

    pairs is a sequence of (i, j) input-coordinate pairs; the network
    computes sum_k x[i_k] * x[j_k] with 4 hidden units per pair.
    """
    a, b = cfg.a, cfg.b
    scale = 1.0 / (4.0 * a * a * tanh_d2(b))
    width = 4 * len(pairs)
    w1 = np.zeros((width, in_dim))
    b1 = np.full(width, b)
    w2 = np.zeros((1, width))
    for k, (i, j) in enumerate(pairs):
        rows = slice(4 * k, 4 * k + 4)
        w1[4 * k + 0, i] = a
        w1[4 * k + 0, j] = a
        w1[4 * k + 1, i] = -a
        w1[4 * k + 1, j] = -a
        w1[4 * k + 2, i] = a
        w1[4 * k + 2, j] = -a
        w1[4 * k + 3, i] = -a
        w1[4 * k + 3, j] = a
        w2[0, rows] = (scale, scale, -scale, -scale)
    return Mlp((in_dim, width, 1), "tanh", pack_params([(w1, b1), (w2, np.zeros(1))]))


# ----------------------------------------------------------------------
# Modular networks
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ModularNet:
    """One subnet per non-leaf graph node, wired per the computation graph."""

    graph: object  # TargetSpec
    subnets: dict  # node index -> Mlp

    @property
    def n_params(self):
        return sum(sub.n_params for sub in self.subnets.values())

    @property
    def in_dim(self):
        return self.graph.dim


def modular_net_build(graph, hidden_dims, activation, seed):
    """Create an independently seeded subnet for every non-leaf node."""
    subnets = {}
    for i, node in enumerate(graph.nodes):
        if node.op in LEAF_OPS:
            continue
        arity = len(node.inputs)
        dims = (arity, *hidden_dims, 1)
        subnets[i] = mlp_init(dims, activation, seed + i)
    if not subnets:
        raise ValueError("graph has no non-leaf nodes to model")
    return ModularNet(graph, subnets)


def _modular_node_values(mnet, xs):
    values = {}
    for i, node in enumerate(mnet.graph.nodes):
        if node.op == "var":
            values[i] = xs[:, node.payload]
        elif node.op == "const":
            values[i] = np.full(xs.shape[0], float(node.payload))
        else:
            cols = np.column_stack([values[j] for j in node.inputs])
            values[i] = forward_batch(mnet.subnets[i], cols)
    return values


def modular_forward_batch(mnet, xs):
    xs = np.asarray(xs, dtype=np.float64)
    return _modular_node_values(mnet, xs)[mnet.graph.output_node]


def modular_params(mnet):
    keys = sorted(mnet.subnets)
    return np.concatenate([mnet.subnets[k].params for k in keys])


def modular_with_params(mnet, flat):
    keys = sorted(mnet.subnets)
    subnets = {}
    offset = 0
    for k in keys:
        sub = mnet.subnets[k]
        subnets[k] = with_params(sub, flat[offset : offset + sub.n_params])
        offset += sub.n_params
    return ModularNet(mnet.graph, subnets)


def modular_grad_xy(mnet, xs, ys):
    """MSE gradient over the concatenated subnet parameter vector."""
    xs = np.asarray(xs, dtype=np.float64)
    values = _modular_node_values(mnet, xs)
    preds = values[mnet.graph.output_node]
    adjoint = {i: None for i in range(len(mnet.graph.nodes))}
    adjoint[mnet.graph.output_node] = 2.0 * (preds - ys) / len(preds)
    grads = {}
    for i in range(len(mnet.graph.nodes) - 1, -1, -1):
        node = mnet.graph.nodes[i]
        d_i = adjoint[i]
        if d_i is None or node.op in LEAF_OPS:
            continue
        cols = np.column_stack([values[j] for j in node.inputs])
        gflat, gin = backward_from_output(mnet.subnets[i], cols, d_i)
        grads[i] = gflat
        for slot, j in enumerate(node.inputs):
            contrib = gin[:, slot]
            adjoint[j] = contrib if adjoint[j] is None else adjoint[j] + contrib
    keys = sorted(mnet.subnets)
    zero = {k: np.zeros(mnet.subnets[k].n_params) for k in keys}
    return np.concatenate([grads.get(k, zero[k]) for k in keys])


# ----------------------------------------------------------------------
# Boosted assembly
# ----------------------------------------------------------------------

def assemble_boosted(f1, f2, c):
    """Merge two stages into one net computing f1(x) + c*f2(x).

    Hidden weight matrices become block-diagonal; the second block's
    output weights and bias are scaled by c.
    """
    if f1.layer_dims[0] != f2.layer_dims[0]:
        raise ValueError("stages must share input dimension")
    if f1.depth != f2.depth:
        raise ValueError("stages must share depth")
    if f1.activation != f2.activation:
        raise ValueError("stages must share activation")
    l1 = unpack_params(f1)
    l2 = unpack_params(f2)
    merged = []
    for i, ((w1, b1), (w2, b2)) in enumerate(zip(l1, l2)):
        first = i == 0
        last = i == len(l1) - 1
        if first and last:
            merged.append((w1 + c * w2, b1 + c * b2))
        elif first:
            merged.append((np.vstack([w1, w2]), np.concatenate([b1, b2])))
        elif last:
            merged.append((np.hstack([w1, c * w2]), b1 + c * b2))
        else:
            top = np.hstack([w1, np.zeros((w1.shape[0], w2.shape[1]))])
            bottom = np.hstack([np.zeros((w2.shape[0], w1.shape[1])), w2])
            merged.append((np.vstack([top, bottom]), np.concatenate([b1, b2])))
    dims = tuple(
        f1.layer_dims[i] + f2.layer_dims[i] if 0 < i < f1.depth else f1.layer_dims[i]
        for i in range(len(f1.layer_dims))
    )
    return Mlp(dims, f1.activation, pack_params(merged))


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------

def mlp_to_json(net):
    """JSON encoding; repr-precision floats round-trip bit-exactly."""
    return json.dumps(
        {
            "layer_dims": list(net.layer_dims),
            "activation": net.activation,
            "params": [float(p) for p in net.params],
        }
    )


def mlp_from_json(text):
    obj = json.loads(text)
    return Mlp(
        tuple(obj["layer_dims"]),
        obj["activation"],
        np.array(obj["params"], dtype=np.float64),
    )
