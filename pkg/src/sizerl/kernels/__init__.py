"""Scan-kernel backend selection.

Imports the compiled extension when it has been built (`python setup.py
build_ext --inplace`), otherwise falls back to the NumPy implementation.
`HAS_COMPILED` reports which path is active; `sizerl bench` compares them.

Interface: `scan_fwd(dt, a_diag, b_in, u, c_out, d_skip)` returns (y, ctx)
where ctx is backend-owned saved state; `scan_bwd(ctx, gy)` returns gradients
for (dt, a_diag, b_in, c_out, u, d_skip) and recycles the saved state.
Call `scan_release(ctx)` instead when no backward pass will run.

The state arrays (l, b, d, n) are by far the largest allocations in training;
a small free-list avoids re-faulting fresh pages for them on every call.
"""

import ctypes
import os
import threading

import numpy as np

# Training cycles many multi-MB arrays per step; glibc's default mmap
# threshold makes every cycle a munmap + page-fault refault.  Raising the
# thresholds keeps freed blocks on the heap (2-4x on scan-heavy passes).
if os.environ.get("SIZERL_NO_MALLOC_TUNE") != "1":
    try:
        _libc = ctypes.CDLL("libc.so.6")
        _libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        _libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except OSError:
        pass

from .reference import (
    scan_assoc_numpy,
    scan_bwd_numpy,
    scan_fwd_numpy,
    scan_naive,
)

try:
    from . import _scanext

    HAS_COMPILED = True
except ImportError:
    _scanext = None
    HAS_COMPILED = False

# parallel batch splitting helps only when cores outnumber the BLAS pool;
# default to 1 and let SIZERL_KERNEL_THREADS opt in on bigger machines
_N_THREADS = max(1, int(os.environ.get("SIZERL_KERNEL_THREADS", "1")))

_POOL_MAX = 16
_pool = {}
_pool_lock = threading.Lock()


def _pool_get(shape, dtype):
    key = (shape, np.dtype(dtype))
    with _pool_lock:
        lst = _pool.get(key)
        if lst:
            return lst.pop()
    return np.empty(shape, dtype)


def _pool_put(*arrays):
    with _pool_lock:
        for a in arrays:
            lst = _pool.setdefault((a.shape, a.dtype), [])
            if len(lst) < _POOL_MAX:
                lst.append(a)


def _contig(*arrays):
    return tuple(np.ascontiguousarray(a) for a in arrays)


def scan_fwd(dt, a_diag, b_in, u, c_out, d_skip, force_numpy=False):
    if HAS_COMPILED and not force_numpy:
        dt, b_in, u, c_out, d_skip = _contig(dt, b_in, u, c_out, d_skip)
        a_nd = np.ascontiguousarray(a_diag.T)  # (n, d)
        l, b, d = dt.shape
        n = a_nd.shape[0]
        # (l, b, n, d) layout keeps the hot inner loops contiguous over d
        da = _pool_get((l, b, n, d), dt.dtype)
        np.multiply(dt[:, :, None, :], a_nd, out=da)
        np.exp(da, out=da)
        y = np.empty_like(u)
        h_all = _pool_get((l, b, n, d), dt.dtype)
        scratch = np.empty((_N_THREADS, d), dtype=dt.dtype)
        _scanext.scan_fwd(da, dt, b_in, u, c_out, d_skip, y, h_all, scratch, _N_THREADS)
        return y, ("ext", da, dt, a_nd, b_in, u, c_out, d_skip, h_all)
    dt, b_in, u, c_out, d_skip = _contig(dt, b_in, u, c_out, d_skip)
    l, b, d = dt.shape
    n = a_diag.shape[1]
    da = _pool_get((l, b, d, n), dt.dtype)
    np.multiply(dt[..., None], a_diag, out=da)
    np.exp(da, out=da)
    h_all = _pool_get((l, b, d, n), dt.dtype)
    y, h_all = scan_fwd_numpy(da, dt, b_in, u, c_out, d_skip, h_all)
    return y, ("np", da, dt, np.asarray(a_diag), b_in, u, c_out, d_skip, h_all)


def scan_bwd(ctx, gy):
    tag, da, dt, a_arr, b_in, u, c_out, d_skip, h_all = ctx
    gy = np.ascontiguousarray(gy)
    if tag == "ext":
        l, b, n, d = da.shape
        d_dt = np.empty_like(dt)
        d_a_nd = np.zeros((_N_THREADS, n, d), dtype=a_arr.dtype)
        d_b = np.empty_like(b_in)
        d_c = np.empty_like(c_out)
        d_u = np.empty_like(u)
        d_d = np.zeros((_N_THREADS, d), dtype=d_skip.dtype)
        gh = np.zeros((b, n, d), dtype=da.dtype)
        scratch = np.empty((_N_THREADS, 3, d), dtype=da.dtype)
        _scanext.scan_bwd(
            da, dt, a_arr, b_in, u, c_out, d_skip, h_all, gy,
            d_dt, d_a_nd, d_b, d_c, d_u, d_d, gh, scratch, _N_THREADS,
        )
        _pool_put(da, h_all)
        return (
            d_dt,
            np.ascontiguousarray(d_a_nd.sum(axis=0).T),
            d_b,
            d_c,
            d_u,
            d_d.sum(axis=0),
        )
    grads = scan_bwd_numpy(da, dt, a_arr, b_in, u, c_out, d_skip, h_all, gy)
    _pool_put(da, h_all)
    return grads


def scan_release(ctx):
    """Recycle saved state when backward will not run (inference paths)."""
    _pool_put(ctx[1], ctx[8])


def dconv_fwd(x, weight, bias, force_numpy=False):
    """Causal depthwise conv over the leading axis; x (l,b,d), weight (d,k)."""
    if HAS_COMPILED and not force_numpy:
        x = np.ascontiguousarray(x)
        wk = np.ascontiguousarray(weight.T)
        y = np.empty_like(x)
        _scanext.dconv_fwd(x, wk, np.ascontiguousarray(bias), y)
        return y
    k = weight.shape[1]
    y = np.zeros_like(x)
    for j in range(k):
        shift = k - 1 - j
        if shift == 0:
            y += x * weight[:, j]
        else:
            y[shift:] += x[:-shift] * weight[:, j]
    return y + bias


def dconv_bwd(x, weight, gy, force_numpy=False):
    """Gradients (gx, gw, gb) of dconv_fwd."""
    if HAS_COMPILED and not force_numpy:
        x = np.ascontiguousarray(x)
        wk = np.ascontiguousarray(weight.T)
        gy = np.ascontiguousarray(gy)
        gx = np.zeros_like(x)
        gw = np.zeros_like(wk)
        gb = np.zeros(x.shape[2], dtype=x.dtype)
        _scanext.dconv_bwd(x, wk, gy, gx, gw, gb)
        return gx, np.ascontiguousarray(gw.T), gb
    k = weight.shape[1]
    gx = np.zeros_like(x)
    gw = np.zeros_like(weight)
    for j in range(k):
        shift = k - 1 - j
        if shift == 0:
            gx += gy * weight[:, j]
            gw[:, j] = (gy * x).sum(axis=(0, 1))
        else:
            gx[:-shift] += gy[shift:] * weight[:, j]
            gw[:, j] = (gy[shift:] * x[:-shift]).sum(axis=(0, 1))
    gb = gy.sum(axis=(0, 1))
    return gx, gw, gb


__all__ = [
    "HAS_COMPILED",
    "dconv_bwd",
    "dconv_fwd",
    "scan_assoc_numpy",
    "scan_bwd",
    "scan_bwd_numpy",
    "scan_fwd",
    "scan_fwd_numpy",
    "scan_naive",
    "scan_release",
]
