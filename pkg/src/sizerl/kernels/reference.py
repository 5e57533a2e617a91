"""NumPy implementations of the selective-scan recurrence.

Three evaluators:

* `scan_fwd_numpy` / `scan_bwd_numpy` — the fallback production path,
  vectorized over (batch, channel, state) with a Python loop over time.
* `scan_assoc_numpy` — associative (doubling) scan along time; used to check
  scan/sequential equivalence and as a second evaluation route.
* `scan_naive` — triple-loop oracle, only for small test sizes.

Shapes: da, h are (l, b, d, n); dt, u, y are (l, b, d); b_in, c_out are
(l, b, n); a_diag is (d, n); d_skip is (d,).
"""

import numpy as np


def scan_fwd_numpy(da, dt, b_in, u, c_out, d_skip, h_all=None):
    l, b, d, n = da.shape
    if h_all is None:
        h_all = np.empty_like(da)
    y = np.empty_like(u)
    h = np.zeros((b, d, n), dtype=da.dtype)
    for t in range(l):
        h = da[t] * h + (dt[t] * u[t])[..., None] * b_in[t][:, None, :]
        h_all[t] = h
        y[t] = np.einsum("bdn,bn->bd", h, c_out[t]) + d_skip * u[t]
    return y, h_all


def scan_bwd_numpy(da, dt, a_diag, b_in, u, c_out, d_skip, h_all, gy):
    l, b, d, n = da.shape
    d_dt = np.empty_like(dt)
    d_a = np.zeros_like(a_diag)
    d_b = np.empty_like(b_in)
    d_u = np.empty_like(u)
    gh = np.zeros((b, d, n), dtype=da.dtype)
    for t in range(l - 1, -1, -1):
        gh += gy[t][..., None] * c_out[t][:, None, :]
        h_prev = h_all[t - 1] if t > 0 else 0.0
        dda = gh * h_prev  # gradient w.r.t. da[t]
        dda_da = dda * da[t]
        d_dt[t] = np.einsum("bdn,dn->bd", dda_da, a_diag)
        d_a += np.einsum("bdn,bd->dn", dda_da, dt[t])
        ghb = np.einsum("bdn,bn->bd", gh, b_in[t])
        d_dt[t] += ghb * u[t]
        d_u[t] = ghb * dt[t] + gy[t] * d_skip
        d_b[t] = np.einsum("bdn,bd->bn", gh, dt[t] * u[t])
        gh = gh * da[t]
    d_c = np.einsum("lbdn,lbd->lbn", h_all, gy)
    d_d = (gy * u).sum(axis=(0, 1))
    return d_dt, d_a, d_b, d_c, d_u, d_d


def scan_assoc_numpy(da, dt, b_in, u, c_out, d_skip):
    """Doubling (Hillis-Steele) scan over the time axis.

    The recurrence h_t = a_t h_{t-1} + v_t composes associatively as
    (a1, v1) o (a2, v2) = (a2 a1, a2 v1 + v2); with h_{-1} = 0 the composed
    offset term is h_t directly.
    """
    l = da.shape[0]
    acc_a = da.copy()
    acc_v = (dt * u)[..., None] * b_in[:, :, None, :]
    offset = 1
    while offset < l:
        new_a = acc_a.copy()
        new_v = acc_v.copy()
        new_a[offset:] = acc_a[offset:] * acc_a[:-offset]
        new_v[offset:] = acc_a[offset:] * acc_v[:-offset] + acc_v[offset:]
        acc_a, acc_v = new_a, new_v
        offset *= 2
    y = np.einsum("lbdn,lbn->lbd", acc_v, c_out) + d_skip * u
    return y, acc_v


def scan_naive(da, dt, b_in, u, c_out, d_skip):
    """Scalar-loop oracle for the recurrence; O(l b d n) Python-level."""
    l, b, d, n = da.shape
    y = np.zeros((l, b, d), dtype=da.dtype)
    h = np.zeros((b, d, n), dtype=da.dtype)
    for t in range(l):
        for bi in range(b):
            for di in range(d):
                acc = 0.0
                for ni in range(n):
                    h[bi, di, ni] = (
                        da[t, bi, di, ni] * h[bi, di, ni]
                        + dt[t, bi, di] * b_in[t, bi, ni] * u[t, bi, di]
                    )
                    acc += c_out[t, bi, ni] * h[bi, di, ni]
                y[t, bi, di] = acc + d_skip[di] * u[t, bi, di]
    return y
