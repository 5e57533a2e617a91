import numpy as np
import pytest

from sizerl.backbone import BackboneConfig
from sizerl.circuits import build_surrogates, registry


@pytest.fixture(scope="session")
def circuits():
    return registry()


@pytest.fixture(scope="session")
def surrogates(circuits):
    return build_surrogates(circuits, seed=7)


@pytest.fixture()
def tiny_cfg64():
    return BackboneConfig(d_model=8, d_state=4, conv_width=4, expand=2,
                          n_layers=2, dtype="float64")


def central_diff_grad(fn, tensors, h=1e-6, stride=1):
    """Finite-difference gradients for every element (or a strided subset).

    Returns worst relative error against the stored .grad of each tensor.
    `fn` rebuilds the graph and returns a scalar Tensor.
    """
    loss = fn()
    loss.backward()
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
             for t in tensors]
    for t in tensors:
        t.grad = None
    worst = 0.0
    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(0, flat.size, stride):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn().item()
            flat[i] = orig - h
            fm = fn().item()
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            worst = max(worst, abs(gflat[i] - num) / max(abs(num), 1e-4))
    return worst
