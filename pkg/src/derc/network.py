"""Minimal dense-network engine with exact reverse-mode gradients.

All arithmetic is double precision so finite-difference checks stay tight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

INIT_SCALE = 1.0 / 3.0  # s in the uniform bound l = sqrt(3 * s / n_input)


def init_bound(n_input: int) -> float:
    return float(np.sqrt(3.0 * INIT_SCALE / n_input))


def init_uniform(shape, n_input: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform weights on [-l, l] with l = sqrt(3*s/n_input), s = 1/3."""
    if n_input < 1:
        raise ValidationError("n_input must be >= 1")
    l = init_bound(n_input)
    return rng.uniform(-l, l, size=shape)


def relu(z):
    return np.maximum(z, 0.0)


def sigmoid(z):
    # branch form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, name):
    if name == "relu":
        return relu(z)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "linear":
        return z
    raise ValidationError(f"unknown activation {name!r}")


def _activation_grad(z, a, name):
    # derivative w.r.t. pre-activation; relu'(0) defined as 0
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "linear":
        return np.ones_like(z)
    raise ValidationError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    """Dense layer y = act(x @ W.T + b), weights stored n_out x n_in."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @classmethod
    def create(cls, n_in: int, n_out: int, activation: str,
               rng: np.random.Generator) -> "DenseLayer":
        return cls(
            weights=init_uniform((n_out, n_in), n_in, rng),
            bias=np.zeros(n_out),
            activation=activation,
        )

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class NetworkParams:
    """Encoder/decoder stacks of dense layers with chained shapes."""

    encoder_layers: list[DenseLayer] = field(default_factory=list)
    decoder_layers: list[DenseLayer] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0].n_in

    @property
    def latent_dim(self) -> int:
        return self.encoder_layers[-1].n_out

    def all_layers(self) -> list[DenseLayer]:
        return [*self.encoder_layers, *self.decoder_layers]


def forward_layers(layers: list[DenseLayer], x: np.ndarray):
    """Run a stack, caching (input, pre-activation, activation) per layer."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError("batch must be 2-D (samples x features)")
    if layers and x.shape[1] != layers[0].n_in:
        raise ValidationError(
            f"batch width {x.shape[1]} does not match layer fan-in {layers[0].n_in}"
        )
    cache = []
    a = x
    for layer in layers:
        z = a @ layer.weights.T + layer.bias
        a_next = _activate(z, layer.activation)
        cache.append((a, z, a_next))
        a = a_next
    return a, cache


def backward_layers(layers: list[DenseLayer], cache, grad_out: np.ndarray):
    """Reverse-mode gradients for a stack.

    Returns ([(dW, db)] aligned with layers, gradient w.r.t. the stack input).
    """
    grads = [None] * len(layers)
    g = grad_out
    for idx in range(len(layers) - 1, -1, -1):
        x_in, z, a = cache[idx]
        dz = g * _activation_grad(z, a, layers[idx].activation)
        grads[idx] = (dz.T @ x_in, dz.sum(axis=0))
        g = dz @ layers[idx].weights
    return grads, g


def mse_loss(x: np.ndarray, r: np.ndarray):
    """Per-element mean squared error and its gradient w.r.t. r."""
    if x.shape != r.shape:
        raise ValidationError(f"shape mismatch {x.shape} vs {r.shape}")
    diff = r - x
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


class SgdMomentum:
    """Classical-momentum SGD: v <- m*v - lr*g; p <- p + v."""

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValidationError("gradient list does not match parameter list")
        for p, v, g in zip(self.params, self.velocity, grads):
            if g.shape != p.shape:
                raise ValidationError(
                    f"gradient shape {g.shape} does not match parameter {p.shape}"
                )
            v *= self.momentum
            v -= self.lr * g
            p += v


def collect_params(layers: list[DenseLayer]) -> list[np.ndarray]:
    out = []
    for layer in layers:
        out.append(layer.weights)
        out.append(layer.bias)
    return out


def flatten_grads(grads) -> list[np.ndarray]:
    out = []
    for dw, db in grads:
        out.append(dw)
        out.append(db)
    return out
