import numpy as np


def jitter_biases(layers, rng, scale=0.1):
    """Move biases off zero so no ReLU sits exactly at its kink during checks."""
    for layer in layers:
        layer.bias += rng.normal(0.0, scale, size=layer.bias.shape)


def finite_diff(loss_fn, tensors, grads, eps=1e-5):
    """Max relative error between analytic grads and central differences."""
    worst = 0.0
    for t, g in zip(tensors, grads):
        it = np.nditer(t, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = t[i]
            t[i] = old + eps
            lp = loss_fn()
            t[i] = old - eps
            lm = loss_fn()
            t[i] = old
            num = (lp - lm) / (2.0 * eps)
            denom = max(abs(num), abs(g[i]), 1e-8)
            worst = max(worst, abs(num - g[i]) / denom)
    return worst
