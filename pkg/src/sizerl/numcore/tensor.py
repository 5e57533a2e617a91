"""Dense tensors with tape-based reverse-mode differentiation.

Every op returns a new Tensor; when gradients are enabled and any operand
requires them, the result carries a closure that propagates the incoming
gradient to its parents.  `backward()` on a scalar walks the tape once in
reverse topological order.  First-order derivatives only.

Broadcasting follows NumPy rules: trailing dimensions are aligned, extents
must match or be 1.  Gradients of broadcast operands are sum-reduced back to
the operand shape.
"""

import numpy as np

_grad_enabled = True


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled():
    return _grad_enabled


def _unbroadcast(grad, shape):
    """Sum-reduce `grad` back to `shape` after a broadcast op."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_backward", "_prev", "_done")

    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._backward = None
        self._prev = ()
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def accumulate_grad(self, g, fresh=False):
        """Add `g` to the stored gradient.

        `fresh=True` asserts that `g` is a newly allocated array this node may
        take ownership of (skips the defensive copy); never pass a gradient
        buffer shared with another node as fresh.
        """
        if self.grad is None:
            if fresh and g.shape == self.data.shape and g.dtype == self.data.dtype:
                self.grad = g
                return
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Propagate d(self)/d(leaf) to every reachable tensor that requires grad.

        `self` must be scalar.  A second call on the same result without
        rebuilding the graph is an error: the tape is single-use.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        if self._done:
            raise RuntimeError("backward() already called on this tensor; rebuild the graph first")
        self._done = True

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # free tape references so intermediates can be collected
                node._backward = None
                node._prev = ()

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    """Wrap `data`; attach the closure only when the tape is recording."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def _is_scalar(x):
    return isinstance(x, (int, float))


def add(a, b):
    # plain-number operands stay weakly typed so float32 graphs stay float32
    if _is_scalar(b) or _is_scalar(a):
        t, s = (a, b) if _is_scalar(b) else (b, a)
        t = _as_tensor(t)
        out_data = t.data + s

        def bwd_s(g):
            if t.requires_grad:
                t.accumulate_grad(g)

        return _make(out_data, (t,), bwd_s)
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), bwd)


def sub(a, b):
    if _is_scalar(b):
        return add(a, -b)
    if _is_scalar(a):
        return add(mul(b, -1.0), a)
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape), fresh=True)

    return _make(out_data, (a, b), bwd)


def mul(a, b):
    if _is_scalar(b) or _is_scalar(a):
        t, s = (a, b) if _is_scalar(b) else (b, a)
        t = _as_tensor(t)
        out_data = t.data * s

        def bwd_s(g):
            if t.requires_grad:
                t.accumulate_grad(g * s, fresh=True)

        return _make(out_data, (t,), bwd_s)
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape), fresh=True)
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape), fresh=True)

    return _make(out_data, (a, b), bwd)


def div(a, b):
    if _is_scalar(b):
        return mul(a, 1.0 / b)
    if _is_scalar(a):
        return mul(pow_(b, -1.0), a)
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data / b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.shape), fresh=True)
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.shape), fresh=True)

    return _make(out_data, (a, b), bwd)


def pow_(a, exponent):
    """Elementwise a**exponent for a scalar exponent."""
    a = _as_tensor(a)
    out_data = a.data ** exponent

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * exponent * a.data ** (exponent - 1), fresh=True)

    return _make(out_data, (a,), bwd)


def matmul(a, b):
    """Matrix product via np.matmul; supports stacked (batched) operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 1:
        raise ValueError("matmul requires at least 1-D operands")
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else -1]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a.accumulate_grad(_unbroadcast(ga, a.shape), fresh=True)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b.accumulate_grad(_unbroadcast(gb, b.shape), fresh=True)

    return _make(out_data, (a, b), bwd)


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------

def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * out_data, fresh=True)

    return _make(out_data, (a,), bwd)


def log(a):
    a = _as_tensor(a)
    out_data = np.log(a.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g / a.data, fresh=True)

    return _make(out_data, (a,), bwd)


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - out_data * out_data), fresh=True)

    return _make(out_data, (a,), bwd)


def sigmoid(a):
    a = _as_tensor(a)
    out_data = _sigmoid_np(a.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * out_data * (1.0 - out_data), fresh=True)

    return _make(out_data, (a,), bwd)


def _sigmoid_np(x):
    # 0.5*(tanh(x/2)+1): one transcendental pass, saturates cleanly on both tails
    s = np.multiply(x, 0.5)
    np.tanh(s, out=s)
    s *= 0.5
    s += 0.5
    return s


def _softplus_np(x):
    # log(1 + e^x) without overflow
    t = np.abs(x)
    np.negative(t, out=t)
    np.exp(t, out=t)
    np.log1p(t, out=t)
    t += np.maximum(x, 0.0)
    return t


def softplus(a):
    a = _as_tensor(a)
    out_data = _softplus_np(a.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * _sigmoid_np(a.data), fresh=True)

    return _make(out_data, (a,), bwd)


def silu(a):
    """x * sigmoid(x), the smooth gated activation used throughout the nets."""
    a = _as_tensor(a)
    s = _sigmoid_np(a.data)
    out_data = a.data * s

    def bwd(g):
        if a.requires_grad:
            # d/dx = s * (1 + x*(1 - s))
            t = a.data - out_data  # x*(1-s)
            t += 1.0
            t *= s
            t *= g
            a.accumulate_grad(t, fresh=True)

    return _make(out_data, (a,), bwd)


def minimum(a, b):
    """Elementwise min; gradient routes to the smaller operand (ties to `a`)."""
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data <= b.data
    out_data = np.where(take_a, a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * take_a, a.shape), fresh=True)
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * ~take_a, b.shape), fresh=True)

    return _make(out_data, (a, b), bwd)


def clip(a, lo, hi):
    """Clamp with pass-through gradient strictly inside [lo, hi]."""
    a = _as_tensor(a)
    out_data = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * inside, fresh=True)

    return _make(out_data, (a,), bwd)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if a.requires_grad:
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            a.accumulate_grad(np.broadcast_to(gg, a.shape))

    return _make(out_data, (a,), bwd)


def mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size if axis is None else a.data.shape[axis]

    def bwd(g):
        if a.requires_grad:
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            a.accumulate_grad(np.broadcast_to(gg, a.shape) / n)

    return _make(out_data, (a,), bwd)


def cumsum(a, axis=0):
    """Cumulative scan along `axis`; backward is the reversed cumulative sum."""
    a = _as_tensor(a)
    out_data = np.cumsum(a.data, axis=axis)

    def bwd(g):
        if a.requires_grad:
            rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
            a.accumulate_grad(rev, fresh=True)

    return _make(out_data, (a,), bwd)


def reshape(a, shape):
    a = _as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out_data = a.data.reshape(shape)
    orig = a.data.shape

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(orig))

    return _make(out_data, (a,), bwd)


def transpose(a, axes=None):
    a = _as_tensor(a)
    out_data = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(np.transpose(g, inv))

    return _make(out_data, (a,), bwd)


def concatenate(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _make(out_data, tuple(tensors), bwd)


def _has_fancy_index(idx):
    if isinstance(idx, tuple):
        return any(isinstance(i, (np.ndarray, list)) for i in idx)
    return isinstance(idx, (np.ndarray, list))


def slice_(a, idx):
    """Slicing/indexing; gradient scatters back into the source shape."""
    a = _as_tensor(a)
    out_data = a.data[idx]

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            if _has_fancy_index(idx):
                np.add.at(full, idx, g)  # repeated indices must accumulate
            else:
                full[idx] += g
            a.accumulate_grad(full, fresh=True)

    return _make(out_data, (a,), bwd)


def causal_dconv1d(x, weight, bias):
    """Depthwise causal 1-D convolution over the leading (time) axis.

    x: (l, b, d); weight: (d, k); output position t sees x[t-k+1 .. t]
    (zero-padded on the left), so the op is strictly causal.
    """
    from ..kernels import dconv_bwd, dconv_fwd

    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    d = x.data.shape[2]
    if weight.data.shape[0] != d:
        raise ValueError(f"conv weight channels {weight.data.shape[0]} != input channels {d}")
    out_data = dconv_fwd(x.data, weight.data, bias.data)

    def bwd(g):
        gx, gw, gb = dconv_bwd(x.data, weight.data, g)
        if x.requires_grad:
            x.accumulate_grad(gx, fresh=True)
        if weight.requires_grad:
            weight.accumulate_grad(gw, fresh=True)
        if bias.requires_grad:
            bias.accumulate_grad(gb, fresh=True)

    return _make(out_data, (x, weight, bias), bwd)


def selective_scan(dt, a_diag, b_in, c_out, u, d_skip):
    """Input-dependent diagonal state-space recurrence (single tape node).

    dt: (l, b, d) positive step sizes; a_diag: (d, n) negative reals;
    b_in, c_out: (l, b, n); u: (l, b, d); d_skip: (d,).

    Discretization: Abar = exp(dt * a_diag), Bbar*u = dt * b_in * u.
    Recurrence h_t = Abar_t * h_{t-1} + dt_t * b_t * u_t,
    output y_t = sum_n c_t[n] * h_t[:, n] + d_skip * u_t.

    Forward/backward run through the compiled kernel when available, else
    the NumPy fallback (see sizerl.kernels).
    """
    from ..kernels import scan_bwd, scan_fwd, scan_release

    dt, a_diag, b_in = _as_tensor(dt), _as_tensor(a_diag), _as_tensor(b_in)
    c_out, u, d_skip = _as_tensor(c_out), _as_tensor(u), _as_tensor(d_skip)

    y, ctx = scan_fwd(dt.data, a_diag.data, b_in.data, u.data, c_out.data, d_skip.data)

    def bwd(g):
        d_dt, d_a, d_b, d_c, d_u, d_d = scan_bwd(ctx, g)
        if dt.requires_grad:
            dt.accumulate_grad(d_dt, fresh=True)
        if a_diag.requires_grad:
            a_diag.accumulate_grad(d_a, fresh=True)
        if b_in.requires_grad:
            b_in.accumulate_grad(d_b, fresh=True)
        if c_out.requires_grad:
            c_out.accumulate_grad(d_c, fresh=True)
        if u.requires_grad:
            u.accumulate_grad(d_u, fresh=True)
        if d_skip.requires_grad:
            d_skip.accumulate_grad(d_d, fresh=True)

    out = _make(y, (dt, a_diag, b_in, c_out, u, d_skip), bwd)
    if out._backward is None:
        scan_release(ctx)  # inference path: recycle the saved state now
    return out
