# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled selective-scan and depthwise-conv kernels (forward and backward).

State arrays use an (l, b, n, d) layout so every inner loop runs contiguously
over the channel axis d; batch rows are independent and split across OpenMP
threads.  Cross-batch reductions (d_a, d_d, conv weight grads) go to
per-thread slabs that the Python wrapper sums.
"""

import numpy as np

cimport cython
from cython.parallel cimport prange, threadid

ctypedef fused real:
    float
    double


def scan_fwd(real[:, :, :, ::1] da, real[:, :, ::1] dt, real[:, :, ::1] b_in,
             real[:, :, ::1] u, real[:, :, ::1] c_out, real[::1] d_skip,
             real[:, :, ::1] y, real[:, :, :, ::1] h_all, real[:, ::1] scratch,
             int n_threads):
    # da, h_all: (l, b, n, d); dt, u, y: (l, b, d); b_in, c_out: (l, b, n)
    # scratch: (n_threads, d)
    cdef Py_ssize_t l = da.shape[0], b = da.shape[1], n = da.shape[2], d = da.shape[3]
    cdef Py_ssize_t t, bi, ni, di, tid
    cdef real bn, cn
    cdef real *pda
    cdef real *ph
    cdef real *php
    cdef real *pdt
    cdef real *pu
    cdef real *py
    cdef real *dtu
    for bi in prange(b, nogil=True, num_threads=n_threads):
        tid = threadid()
        dtu = &scratch[tid, 0]
        for t in range(l):
            pdt = &dt[t, bi, 0]
            pu = &u[t, bi, 0]
            py = &y[t, bi, 0]
            for di in range(d):
                dtu[di] = pdt[di] * pu[di]
                py[di] = d_skip[di] * pu[di]
            for ni in range(n):
                bn = b_in[t, bi, ni]
                cn = c_out[t, bi, ni]
                ph = &h_all[t, bi, ni, 0]
                if t == 0:
                    for di in range(d):
                        ph[di] = dtu[di] * bn
                        py[di] += cn * ph[di]
                else:
                    pda = &da[t, bi, ni, 0]
                    php = &h_all[t - 1, bi, ni, 0]
                    for di in range(d):
                        ph[di] = pda[di] * php[di] + dtu[di] * bn
                        py[di] += cn * ph[di]


def scan_bwd(real[:, :, :, ::1] da, real[:, :, ::1] dt, real[:, ::1] a_nd,
             real[:, :, ::1] b_in, real[:, :, ::1] u, real[:, :, ::1] c_out,
             real[::1] d_skip, real[:, :, :, ::1] h_all, real[:, :, ::1] gy,
             real[:, :, ::1] d_dt, real[:, :, ::1] d_a_nd, real[:, :, ::1] d_b,
             real[:, :, ::1] d_c, real[:, :, ::1] d_u, real[:, ::1] d_d,
             real[:, :, ::1] gh, real[:, :, ::1] scratch, int n_threads):
    # a_nd: (n, d); d_a_nd: (n_threads, n, d); d_d: (n_threads, d);
    # gh: (b, n, d); scratch: (n_threads, 3, d)
    cdef Py_ssize_t l = da.shape[0], b = da.shape[1], n = da.shape[2], d = da.shape[3]
    cdef Py_ssize_t t, bi, ni, di, tid
    cdef real bn, cn, ghv, dda_da, db_acc, dc_acc
    cdef real *pda
    cdef real *ph
    cdef real *php
    cdef real *pgh
    cdef real *pg
    cdef real *pdt
    cdef real *pu
    cdef real *pa
    cdef real *pdand
    cdef real *pdd
    cdef real *dtu
    cdef real *ghb
    cdef real *dt_acc
    for bi in prange(b, nogil=True, num_threads=n_threads):
        tid = threadid()
        dtu = &scratch[tid, 0, 0]
        ghb = &scratch[tid, 1, 0]
        dt_acc = &scratch[tid, 2, 0]
        pdd = &d_d[tid, 0]
        for t in range(l - 1, -1, -1):
            pg = &gy[t, bi, 0]
            pdt = &dt[t, bi, 0]
            pu = &u[t, bi, 0]
            for di in range(d):
                dtu[di] = pdt[di] * pu[di]
                ghb[di] = 0
                dt_acc[di] = 0
                pdd[di] += pg[di] * pu[di]
            for ni in range(n):
                bn = b_in[t, bi, ni]
                cn = c_out[t, bi, ni]
                pa = &a_nd[ni, 0]
                pdand = &d_a_nd[tid, ni, 0]
                pgh = &gh[bi, ni, 0]
                ph = &h_all[t, bi, ni, 0]
                pda = &da[t, bi, ni, 0]
                db_acc = 0
                dc_acc = 0
                if t == 0:
                    for di in range(d):
                        ghv = pgh[di] + cn * pg[di]
                        ghb[di] += ghv * bn
                        db_acc = db_acc + ghv * dtu[di]
                        dc_acc = dc_acc + ph[di] * pg[di]
                        pgh[di] = ghv * pda[di]
                else:
                    php = &h_all[t - 1, bi, ni, 0]
                    for di in range(d):
                        ghv = pgh[di] + cn * pg[di]
                        dda_da = ghv * php[di] * pda[di]
                        dt_acc[di] += dda_da * pa[di]
                        pdand[di] += dda_da * pdt[di]
                        ghb[di] += ghv * bn
                        db_acc = db_acc + ghv * dtu[di]
                        dc_acc = dc_acc + ph[di] * pg[di]
                        pgh[di] = ghv * pda[di]
                d_b[t, bi, ni] = db_acc
                d_c[t, bi, ni] = dc_acc
            for di in range(d):
                d_dt[t, bi, di] = dt_acc[di] + ghb[di] * pu[di]
                d_u[t, bi, di] = ghb[di] * pdt[di] + pg[di] * d_skip[di]


def dconv_fwd(real[:, :, ::1] x, real[:, ::1] wk, real[::1] bias,
              real[:, :, ::1] y):
    # x, y: (l, b, d); wk: (k, d) tap-major weights; causal zero padding
    cdef Py_ssize_t l = x.shape[0], b = x.shape[1], d = x.shape[2], k = wk.shape[0]
    cdef Py_ssize_t t, bi, di, j, s
    cdef real *py
    cdef real *px
    cdef real *pw
    with nogil:
        for t in range(l):
            for bi in range(b):
                py = &y[t, bi, 0]
                for di in range(d):
                    py[di] = bias[di]
                for j in range(k):
                    s = t - (k - 1) + j
                    if s < 0:
                        continue
                    px = &x[s, bi, 0]
                    pw = &wk[j, 0]
                    for di in range(d):
                        py[di] += pw[di] * px[di]


def dconv_bwd(real[:, :, ::1] x, real[:, ::1] wk, real[:, :, ::1] gy,
              real[:, :, ::1] gx, real[:, ::1] gw, real[::1] gb):
    cdef Py_ssize_t l = x.shape[0], b = x.shape[1], d = x.shape[2], k = wk.shape[0]
    cdef Py_ssize_t t, bi, di, j, s
    cdef real *pg
    cdef real *px
    cdef real *pgx
    cdef real *pw
    cdef real *pgw
    with nogil:
        for t in range(l):
            for bi in range(b):
                pg = &gy[t, bi, 0]
                for di in range(d):
                    gb[di] += pg[di]
                for j in range(k):
                    s = t - (k - 1) + j
                    if s < 0:
                        continue
                    px = &x[s, bi, 0]
                    pgx = &gx[s, bi, 0]
                    pw = &wk[j, 0]
                    pgw = &gw[j, 0]
                    for di in range(d):
                        pgx[di] += pw[di] * pg[di]
                        pgw[di] += px[di] * pg[di]
