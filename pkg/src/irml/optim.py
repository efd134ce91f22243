"""Small first-order optimizers over dicts of numpy parameter arrays."""
from __future__ import annotations

import numpy as np


def copy_params(params):
    return {k: np.array(v, copy=True) for k, v in params.items()}


def flatten(params):
    """Concatenate parameters in sorted-key order."""
    return np.concatenate([np.ravel(params[k]) for k in sorted(params)])


def unflatten(vec, like):
    out, i = {}, 0
    for k in sorted(like):
        n = like[k].size
        out[k] = np.asarray(vec[i:i + n], dtype=np.float64).reshape(like[k].shape)
        i += n
    return out


class SGD:
    def __init__(self, lr=0.01):
        self.lr = float(lr)

    def step(self, params, grads, ascend=False):
        sign = 1.0 if ascend else -1.0
        for k in params:
            params[k] += sign * self.lr * grads[k]


class Adam:
    """Adam with bias correction; ``step`` updates ``params`` in place."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = float(lr), beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params, grads, ascend=False):
        self.t += 1
        sign = 1.0 if ascend else -1.0
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] += sign * self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
