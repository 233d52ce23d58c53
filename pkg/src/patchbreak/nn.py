"""Minimal dense MLP with reverse-mode gradients and Adam.

Everything is float64 and built on numpy matmul; there is no autodiff graph,
just the one fixed topology the rest of the package needs: affine layers with
ReLU between them and none after the last. forward/backward accept a single
vector or a leading batch dimension.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import rng, serialize
from .errors import ConfigError, ShapeError

ACTIVATIONS = ("relu", "identity")


@dataclass
class MlpParams:
    """layers[t] = (W, b) with W of shape (fan_out, fan_in); activation sits
    between layers, never after the last."""

    layers: list
    activation: str = "relu"

    @property
    def dims(self):
        return [self.layers[0][0].shape[1]] + [W.shape[0] for W, _ in self.layers]


def init_mlp(dims, scale, seed):
    """Fresh parameters: weights N(0, scale^2/fan_in), biases N(0, scale^2).

    The 1/fan_in factor keeps activations O(scale) at any depth; callers that
    want unscaled Normal(0, v^2) weights pass scale = v*sqrt(fan_in).
    """
    if len(dims) < 2:
        raise ConfigError(f"need at least input and output widths, got dims={dims}")
    if any(d < 1 for d in dims):
        raise ConfigError(f"layer widths must be positive, got dims={dims}")
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    gen = rng.stream(seed, "nn.init")
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = gen.normal(0.0, scale / np.sqrt(fan_in), size=(fan_out, fan_in))
        b = gen.normal(0.0, scale, size=fan_out)
        layers.append((W, b))
    return MlpParams(layers=layers)


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    want = params.layers[0][0].shape[1]
    if x.shape[-1] != want:
        raise ShapeError(f"input width {x.shape[-1]} != first layer fan_in {want}")
    return x


def forward(params, x):
    """Apply the stack: affine, activation, ..., affine. Batch-safe on the
    leading axes."""
    x = _check_input(params, x)
    h = x
    last = len(params.layers) - 1
    for t, (W, b) in enumerate(params.layers):
        h = h @ W.T + b
        if t < last and params.activation == "relu":
            h = np.maximum(h, 0.0)
    return h


def _forward_cached(params, x):
    # pre-activations per layer, plus the post-activation inputs each layer saw
    inputs = [x]
    pre = []
    h = x
    last = len(params.layers) - 1
    for t, (W, b) in enumerate(params.layers):
        z = h @ W.T + b
        pre.append(z)
        if t < last and params.activation == "relu":
            h = np.maximum(z, 0.0)
        else:
            h = z
        if t < last:
            inputs.append(h)
    return inputs, pre, h


def backward(params, x, grad_out, with_input_grad=False):
    """Gradients of grad_out . forward(params, x) w.r.t. every parameter.

    Returns a list of (dW, db) mirroring params.layers; gradients are summed
    over any batch axes. With with_input_grad=True also returns d/dx.
    """
    x = _check_input(params, x)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    inputs, pre, out = _forward_cached(params, x)
    if grad_out.shape != out.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != output shape {out.shape}")

    flatten = lambda a: a.reshape(-1, a.shape[-1])
    grads = [None] * len(params.layers)
    g = grad_out
    for t in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[t]
        gf, af = flatten(g), flatten(inputs[t])
        grads[t] = (gf.T @ af, gf.sum(axis=0))
        g = g @ W
        if t > 0 and params.activation == "relu":
            g = g * (pre[t - 1] > 0)
    if with_input_grad:
        return grads, g
    return grads


@dataclass
class OptimState:
    """Adam accumulators mirroring MlpParams, plus hyperparameters."""

    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    zeros = lambda: [(np.zeros_like(W), np.zeros_like(b)) for W, b in params.layers]
    return OptimState(m=zeros(), v=zeros(), lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def opt_step(params, grads, state):
    """One bias-corrected adaptive-moment update. Functional: returns fresh
    (params, state)."""
    if len(grads) != len(params.layers):
        raise ShapeError("gradient list does not mirror parameter layers")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_layers, new_m, new_v = [], [], []
    for (W, b), (gW, gb), (mW, mb), (vW, vb) in zip(
        params.layers, grads, state.m, state.v
    ):
        if gW.shape != W.shape or gb.shape != b.shape:
            raise ShapeError("gradient shape does not mirror parameter shape")
        upd = []
        for theta, g, m_a, v_a in ((W, gW, mW, vW), (b, gb, mb, vb)):
            m_n = b1 * m_a + (1 - b1) * g
            v_n = b2 * v_a + (1 - b2) * g * g
            m_hat = m_n / (1 - b1**t)
            v_hat = v_n / (1 - b2**t)
            upd.append((theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps), m_n, v_n))
        new_layers.append((upd[0][0], upd[1][0]))
        new_m.append((upd[0][1], upd[1][1]))
        new_v.append((upd[0][2], upd[1][2]))
    return (
        MlpParams(layers=new_layers, activation=params.activation),
        replace(state, m=new_m, v=new_v, step=t),
    )


def save_mlp(params, json_path, meta=None):
    """Checkpoint: JSON manifest + little-endian float64 blob."""
    arrays = {}
    for t, (W, b) in enumerate(params.layers):
        arrays[f"W{t}"] = W
        arrays[f"b{t}"] = b
    info = {"kind": "mlp", "dims": params.dims, "activation": params.activation}
    info.update(meta or {})
    return serialize.write_arrays(json_path, arrays, meta=info)


def load_mlp(json_path):
    meta, arrays = serialize.read_arrays(json_path)
    if meta.get("kind") != "mlp":
        raise ConfigError(f"not an mlp checkpoint: {json_path}")
    n_layers = len(meta["dims"]) - 1
    layers = [(arrays[f"W{t}"], arrays[f"b{t}"]) for t in range(n_layers)]
    return MlpParams(layers=layers, activation=meta["activation"])
