"""Adaptive-moment optimizer and global gradient-norm clipping."""

import numpy as np

from .tensor import Tensor


def global_grad_norm(params):
    """L2 norm over the concatenation of all parameter gradients."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_global_norm(params, max_norm=1.0):
    """Scale all gradients so their global L2 norm is at most `max_norm`.

    Returns the pre-clip norm.  Gradients with norm <= max_norm (including
    all-zero) are left untouched.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class Adam:
    """Bias-corrected adaptive-moment gradient descent.

    Moment buffers match each parameter's shape; a single step counter is
    shared.  A NaN anywhere in the gradients aborts with a diagnostic naming
    the offending parameter, since continuing would corrupt every moment.
    """

    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        if isinstance(params, dict):
            self._names = list(params.keys())
            self.params = list(params.values())
        else:
            self.params = list(params)
            self._names = [f"param{i}" for i in range(len(self.params))]
        for p in self.params:
            if not isinstance(p, Tensor):
                raise TypeError("Adam expects Tensor parameters")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p, m, v in zip(self._names, self.params, self.m, self.v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(
                    f"non-finite gradient in '{name}' at step {t}; aborting update"
                )
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self):
        """Flat name -> array view of the moment buffers, for checkpointing."""
        out = {"step_count": np.array([self.step_count], dtype=np.float64)}
        for name, m, v in zip(self._names, self.m, self.v):
            out[f"m.{name}"] = m
            out[f"v.{name}"] = v
        return out

    def load_state_arrays(self, arrays):
        self.step_count = int(arrays["step_count"][0])
        for i, name in enumerate(self._names):
            self.m[i][...] = arrays[f"m.{name}"]
            self.v[i][...] = arrays[f"v.{name}"]
