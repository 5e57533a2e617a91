"""Benchmark of the compiled scan kernel against the NumPy fallback."""

import time

import numpy as np

from . import kernels


def _time(fn, reps):
    fn()
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def run_bench(l=30, b=256, d=64, n=8, dtype="float32", reps=10):
    """Returns rows of (name, fwd_ms, bwd_ms) for both backends."""
    rng = np.random.default_rng(0)
    dt = rng.uniform(0.01, 0.2, (l, b, d)).astype(dtype)
    a = -rng.uniform(0.5, 3.0, (d, n)).astype(dtype)
    b_in = rng.normal(size=(l, b, n)).astype(dtype)
    c_out = rng.normal(size=(l, b, n)).astype(dtype)
    u = rng.normal(size=(l, b, d)).astype(dtype)
    d_skip = rng.normal(size=d).astype(dtype)
    gy = rng.normal(size=(l, b, d)).astype(dtype)

    rows = []
    variants = [("numpy-fallback", True)]
    if kernels.HAS_COMPILED:
        variants.insert(0, ("compiled", False))
    for name, force in variants:
        def fwd_only():
            _, ctx = kernels.scan_fwd(dt, a, b_in, u, c_out, d_skip, force_numpy=force)
            kernels.scan_release(ctx)

        def fwd_bwd():
            _, ctx = kernels.scan_fwd(dt, a, b_in, u, c_out, d_skip, force_numpy=force)
            kernels.scan_bwd(ctx, gy)

        fwd = _time(fwd_only, reps)
        both = _time(fwd_bwd, reps)
        rows.append((name, fwd, max(both - fwd, 0.0)))
    return rows


def format_bench(rows, shape):
    lines = [
        f"selective-scan kernel benchmark  shape (l,b,d,n) = {shape}",
        f"{'backend':16s} {'forward ms':>11s} {'backward ms':>12s}",
    ]
    for name, fwd, bwd in rows:
        lines.append(f"{name:16s} {fwd:11.2f} {bwd:12.2f}")
    if len(rows) == 2:
        lines.append(
            f"speedup: forward {rows[1][1] / rows[0][1]:.2f}x, "
            f"backward {rows[1][2] / rows[0][2]:.2f}x"
        )
    if not kernels.HAS_COMPILED:
        lines.append("compiled extension not built; run: python setup.py build_ext --inplace")
    return "\n".join(lines)
