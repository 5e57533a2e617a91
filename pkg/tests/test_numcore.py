import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sizerl.numcore as nc
from sizerl.numcore import Adam, Tensor, clip_global_norm

from conftest import central_diff_grad


def test_matmul_shapes():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((3, 4)))
    assert nc.matmul(a, b).shape == (2, 4)
    with pytest.raises(ValueError):
        nc.matmul(a, Tensor(np.ones((2, 4))))


def test_tanh_odd():
    assert nc.tanh(Tensor([0.0])).data[0] == 0.0
    x = np.linspace(-2, 2, 9)
    assert np.allclose(nc.tanh(Tensor(x)).data, -nc.tanh(Tensor(-x)).data)


def test_grad_sum_x_squared():
    # d/dx sum(x*x) at [1, 2] -> [2, 4]; cross-checked by central differences
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = nc.sum_(nc.mul(x, x))
    loss.backward()
    assert np.allclose(x.grad, [2.0, 4.0])
    x.grad = None
    worst = central_diff_grad(lambda: nc.sum_(nc.mul(x, x)), [x])
    assert worst < 1e-7


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        nc.mul(x, 2.0).backward()


def test_backward_twice_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = nc.sum_(x)
    loss.backward()
    with pytest.raises(RuntimeError):
        loss.backward()


def test_backward_constant_graph_empty_grads():
    # no parameters requiring grad -> nothing accumulates anywhere
    a = Tensor(np.ones(4))
    loss = nc.sum_(nc.mul(a, a))
    loss.backward()
    assert a.grad is None


def test_linear_layer_grad_is_outer_product():
    rng = np.random.default_rng(0)
    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    x = rng.normal(size=(1, 3))
    loss = nc.sum_(nc.matmul(Tensor(x), w))
    loss.backward()
    assert np.allclose(w.grad, np.outer(x[0], np.ones(2)))


def test_composite_mlp_gradcheck():
    rng = np.random.default_rng(1)
    w1 = Tensor(rng.normal(size=(4, 8)) * 0.5, requires_grad=True)
    b1 = Tensor(rng.normal(size=8) * 0.1, requires_grad=True)
    w2 = Tensor(rng.normal(size=(8, 3)) * 0.5, requires_grad=True)
    x = rng.normal(size=(5, 4))

    def fn():
        h = nc.tanh(nc.add(nc.matmul(Tensor(x), w1), b1))
        y = nc.matmul(h, w2)
        return nc.mean(nc.mul(y, y))

    assert central_diff_grad(fn, [w1, b1, w2]) < 1e-4


@pytest.mark.parametrize("op", [nc.exp, nc.log, nc.tanh, nc.sigmoid, nc.softplus, nc.silu])
def test_elementwise_gradcheck(op):
    rng = np.random.default_rng(2)
    base = rng.uniform(0.5, 2.0, 12) if op is nc.log else rng.normal(size=12)
    x = Tensor(base, requires_grad=True)

    def fn():
        return nc.sum_(nc.mul(op(x), op(x)))

    assert central_diff_grad(fn, [x]) < 1e-4


def test_reductions_slices_concat_gradcheck():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(4, 6)), requires_grad=True)

    def fn():
        left = x[:, :3]
        right = x[:, 3:]
        cat = nc.concatenate([nc.mul(left, 2.0), right], axis=1)
        m = nc.mean(cat, axis=0)
        s = nc.cumsum(m, axis=0)
        return nc.sum_(nc.mul(s, s))

    assert central_diff_grad(fn, [x]) < 1e-4


def test_broadcast_grads():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)

    def fn():
        return nc.mean(nc.mul(nc.add(x, b), nc.add(x, b)))

    assert central_diff_grad(fn, [x, b]) < 1e-4


def test_minimum_and_clip_grads():
    a = Tensor(np.array([1.0, 3.0]), requires_grad=True)
    b = Tensor(np.array([2.0, 2.0]), requires_grad=True)
    loss = nc.sum_(nc.minimum(a, b))
    loss.backward()
    assert np.allclose(a.grad, [1.0, 0.0])
    assert np.allclose(b.grad, [0.0, 1.0])
    c = Tensor(np.array([-3.0, 0.5, 3.0]), requires_grad=True)
    nc.sum_(nc.clip(c, -1.0, 1.0)).backward()
    assert np.allclose(c.grad, [0.0, 1.0, 0.0])


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4),
       st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_gradcheck_randomized_shapes(rows, inner, cols, seed):
    # analytic gradients match central differences on randomized shapes
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(rows, inner)), requires_grad=True)
    b = Tensor(rng.normal(size=(inner, cols)), requires_grad=True)
    c = Tensor(rng.normal(size=(cols,)), requires_grad=True)

    def fn():
        y = nc.silu(nc.add(nc.matmul(a, b), c))
        return nc.mean(nc.mul(y, nc.tanh(y)))

    assert central_diff_grad(fn, [a, b, c]) < 1e-4


def test_forward_determinism():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 3))
    r1 = nc.silu(nc.matmul(Tensor(x), Tensor(x))).data
    r2 = nc.silu(nc.matmul(Tensor(x), Tensor(x))).data
    assert np.array_equal(r1, r2)


def test_no_grad_suppresses_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with nc.no_grad():
        y = nc.mul(x, x)
    assert not y.requires_grad and y._backward is None


# ---------------------------------------------------------------------------
# clip_global_norm
# ---------------------------------------------------------------------------

def _with_grads(arrays):
    out = []
    for a in arrays:
        t = Tensor(np.zeros_like(a), requires_grad=True)
        t.grad = np.array(a, dtype=np.float64)
        out.append(t)
    return out


def test_clip_below_threshold_unchanged():
    params = _with_grads([np.array([0.3, 0.4])])  # norm 0.5
    norm = clip_global_norm(params, 1.0)
    assert norm == pytest.approx(0.5)
    assert np.allclose(params[0].grad, [0.3, 0.4])


def test_clip_scales_to_max_norm():
    params = _with_grads([np.array([2.0, 0.0]), np.array([0.0])])  # norm 2
    norm = clip_global_norm(params, 1.0)
    assert norm == pytest.approx(2.0)
    assert np.allclose(params[0].grad, [1.0, 0.0])


def test_clip_zero_grads_unchanged():
    params = _with_grads([np.zeros(3)])
    clip_global_norm(params, 1.0)
    assert np.allclose(params[0].grad, 0.0)


def test_clip_requires_positive_max_norm():
    with pytest.raises(ValueError):
        clip_global_norm(_with_grads([np.ones(2)]), 0.0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8),
       st.floats(0.1, 5.0))
@settings(max_examples=60, deadline=None)
def test_clip_norm_bound_property(values, max_norm):
    params = _with_grads([np.array(values, dtype=np.float64)])
    clip_global_norm(params, max_norm)
    assert np.linalg.norm(params[0].grad) <= max_norm + 1e-12


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def test_adam_zero_grad_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p])
    p.grad = np.zeros(2)
    opt.step()
    assert np.allclose(p.data, [1.0, -2.0])
    assert opt.step_count == 1


def test_adam_first_step_magnitude():
    # single scalar, g=1 at step 1: update = lr * 1/(1 + eps)
    lr = 3e-4
    p = Tensor(np.array([0.5]), requires_grad=True)
    opt = Adam([p], lr=lr)
    p.grad = np.ones(1)
    opt.step()
    assert p.data[0] == pytest.approx(0.5 - lr / (1.0 + 1e-8), rel=1e-12)


def test_adam_constant_grad_update_approaches_lr():
    lr = 3e-4
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], lr=lr)
    prev = p.data[0]
    for _ in range(500):
        p.grad = np.ones(1)
        opt.step()
    last_step = prev - p.data[0]
    # magnitude of the k-th update converges to lr for constant gradients
    steps = []
    for _ in range(5):
        before = p.data[0]
        p.grad = np.ones(1)
        opt.step()
        steps.append(before - p.data[0])
    assert np.allclose(steps, lr, rtol=1e-3)


def test_adam_nan_grad_raises():
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam({"w": p})
    p.grad = np.array([np.nan])
    with pytest.raises(FloatingPointError, match="w"):
        opt.step()


def test_adam_moment_shapes_match_params():
    p1 = Tensor(np.zeros((2, 3)), requires_grad=True)
    p2 = Tensor(np.zeros(5), requires_grad=True)
    opt = Adam([p1, p2])
    assert opt.m[0].shape == (2, 3) and opt.v[1].shape == (5,)
