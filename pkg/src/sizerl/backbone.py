"""Shared sequence architecture for the actor, critic, and dynamics networks.

A packed vector of length l is treated as a sequence of l scalar tokens:
affine embedding to d_model, a stack of selective state-space blocks, then a
readout head applied to the final position only.  The head output width is
the only thing that differs between network roles.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore import Tensor


@dataclass
class BackboneConfig:
    d_model: int = 64
    d_state: int = 16
    conv_width: int = 4
    expand: int = 2
    n_layers: int = 2
    dt_rank: int = 0          # 0 -> ceil(d_model / 16)
    dt_min: float = 1e-3
    dt_max: float = 1e-1
    # init gain on the state in/out projections; with a final-position
    # readout over short sequences, unit-scale init leaves early tokens
    # ~1e4x fainter than the last token, which stalls learning
    bc_init_gain: float = 6.0
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("d_model", "d_state", "conv_width", "expand", "n_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.dt_rank == 0:
            self.dt_rank = max(1, math.ceil(self.d_model / 16))

    @property
    def d_inner(self):
        return self.d_model * self.expand

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


def _uniform(rng, lo, hi, shape, dtype):
    return rng.uniform(lo, hi, size=shape).astype(dtype)


class Linear:
    """Affine map with fan-in-scaled uniform init; weight shape (in, out)."""

    def __init__(self, d_in, d_out, rng, dtype, bias=True):
        bound = 1.0 / math.sqrt(d_in)
        self.w = Tensor(_uniform(rng, -bound, bound, (d_in, d_out), dtype), requires_grad=True)
        self.b = None
        if bias:
            self.b = Tensor(_uniform(rng, -bound, bound, (d_out,), dtype), requires_grad=True)

    def __call__(self, x):
        y = nc.matmul(x, self.w)
        if self.b is not None:
            y = nc.add(y, self.b)
        return y

    def params(self, prefix):
        out = {f"{prefix}.w": self.w}
        if self.b is not None:
            out[f"{prefix}.b"] = self.b
        return out


class RMSNorm:
    def __init__(self, d, dtype, eps=1e-6):
        self.g = Tensor(np.ones(d, dtype=dtype), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        ms = nc.mean(nc.mul(x, x), axis=-1, keepdims=True)
        scale = nc.pow_(nc.add(ms, self.eps), -0.5)
        return nc.mul(nc.mul(x, scale), self.g)

    def params(self, prefix):
        return {f"{prefix}.g": self.g}


class SSMBlock:
    """Pre-norm selective-scan block with conv, gating, and residual.

    Structure: RMS norm -> linear expansion to d_inner on two branches ->
    (main) causal depthwise conv + SiLU -> per-position projections to
    (dt, B, C) -> softplus dt -> diagonal recurrence with Abar = exp(dt*A),
    skip D -> SiLU gate from the second branch -> projection back to d_model
    -> residual add.  Causal by construction.
    """

    def __init__(self, cfg: BackboneConfig, rng):
        d, di, n, k = cfg.d_model, cfg.d_inner, cfg.d_state, cfg.conv_width
        dtype = cfg.np_dtype
        self.cfg = cfg
        self.norm = RMSNorm(d, dtype)
        # expansion branches and the per-position (dt, B, C) projections are
        # separate linears so every tape node stays contiguous
        self.main_proj = Linear(d, di, rng, dtype, bias=False)
        self.gate_proj = Linear(d, di, rng, dtype, bias=False)
        cb = 1.0 / math.sqrt(k)
        self.conv_w = Tensor(_uniform(rng, -cb, cb, (di, k), dtype), requires_grad=True)
        self.conv_b = Tensor(_uniform(rng, -cb, cb, (di,), dtype), requires_grad=True)
        self.dt_low = Linear(di, cfg.dt_rank, rng, dtype, bias=False)
        self.b_proj = Linear(di, n, rng, dtype, bias=False)
        self.c_proj = Linear(di, n, rng, dtype, bias=False)
        self.b_proj.w.data *= cfg.bc_init_gain
        self.c_proj.w.data *= cfg.bc_init_gain
        self.dt_proj = Linear(cfg.dt_rank, di, rng, dtype, bias=True)
        # bias so that softplus(dt) lands log-uniformly in [dt_min, dt_max]
        dt_init = np.exp(rng.uniform(np.log(cfg.dt_min), np.log(cfg.dt_max), size=di))
        self.dt_proj.b.data[...] = np.log(np.expm1(dt_init)).astype(dtype)
        # A = -(1..d_state) per channel, stored as log for sign stability
        a_log = np.log(np.tile(np.arange(1, n + 1, dtype=np.float64), (di, 1)))
        self.a_log = Tensor(a_log.astype(dtype), requires_grad=True)
        self.d_skip = Tensor(np.ones(di, dtype=dtype), requires_grad=True)
        self.out_proj = Linear(di, d, rng, dtype, bias=False)

    def __call__(self, x):
        resid = x
        xn = self.norm(x)
        u = nc.silu(nc.causal_dconv1d(self.main_proj(xn), self.conv_w, self.conv_b))
        dt = nc.softplus(self.dt_proj(self.dt_low(u)))
        a_diag = nc.mul(nc.exp(self.a_log), -1.0)
        y = nc.selective_scan(dt, a_diag, self.b_proj(u), self.c_proj(u), u, self.d_skip)
        y = nc.mul(y, nc.silu(self.gate_proj(xn)))
        return nc.add(resid, self.out_proj(y))

    def params(self, prefix):
        out = {}
        out.update(self.norm.params(f"{prefix}.norm"))
        out.update(self.main_proj.params(f"{prefix}.main_proj"))
        out.update(self.gate_proj.params(f"{prefix}.gate_proj"))
        out[f"{prefix}.conv.w"] = self.conv_w
        out[f"{prefix}.conv.b"] = self.conv_b
        out.update(self.dt_low.params(f"{prefix}.dt_low"))
        out.update(self.b_proj.params(f"{prefix}.b_proj"))
        out.update(self.c_proj.params(f"{prefix}.c_proj"))
        out.update(self.dt_proj.params(f"{prefix}.dt_proj"))
        out[f"{prefix}.a_log"] = self.a_log
        out[f"{prefix}.d"] = self.d_skip
        out.update(self.out_proj.params(f"{prefix}.out_proj"))
        return out


class SequenceBackbone:
    """Embedding, n_layers selective-scan blocks, final-context readout."""

    def __init__(self, cfg: BackboneConfig, out_dim, rng):
        if out_dim < 1:
            raise ValueError("out_dim must be >= 1")
        self.cfg = cfg
        self.out_dim = out_dim
        dtype = cfg.np_dtype
        self.embed = Linear(1, cfg.d_model, rng, dtype, bias=True)
        self.blocks = [SSMBlock(cfg, rng) for _ in range(cfg.n_layers)]
        self.head = Linear(cfg.d_model, out_dim, rng, dtype, bias=True)

    def embed_tokens(self, x):
        """(b, l) scalar tokens -> (l, b, d_model) Tensor."""
        if isinstance(x, Tensor):
            t = nc.transpose(x, (1, 0))
            t = nc.reshape(t, (t.shape[0], t.shape[1], 1))
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError("non-finite token in embedding input")
            return self.embed(t)
        arr = np.asarray(x, dtype=self.cfg.np_dtype)
        if arr.ndim != 2:
            raise ValueError(f"expected (batch, length) input, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite token in embedding input")
        t = Tensor(arr.T[:, :, None])
        return self.embed(t)

    def trunk(self, x):
        """Embedding plus blocks; returns the full (l, b, d_model) sequence."""
        h = self.embed_tokens(x)
        for blk in self.blocks:
            h = blk(h)
        return h

    def readout(self, h):
        """Head applied to the final context vector only: (l,b,d) -> (b,out)."""
        last = h[h.shape[0] - 1]
        return self.head(nc.silu(last))

    def __call__(self, x):
        out = self.readout(self.trunk(x))
        if not np.all(np.isfinite(out.data)):
            raise FloatingPointError("non-finite value in backbone output")
        return out

    def parameters(self):
        out = {}
        out.update(self.embed.params("embed"))
        for i, blk in enumerate(self.blocks):
            out.update(blk.params(f"block{i}"))
        out.update(self.head.params("head"))
        return out

    def param_count(self):
        return sum(p.data.size for p in self.parameters().values())

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, arrays):
        params = self.parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters in state dict: {sorted(missing)}")
        for k, p in params.items():
            a = np.asarray(arrays[k], dtype=p.data.dtype)
            if a.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {a.shape} vs {p.data.shape}")
            p.data[...] = a


def copy_backbone(src: SequenceBackbone, rng=None):
    """Independent clone with identical weights (for target networks)."""
    dst = SequenceBackbone(src.cfg, src.out_dim, np.random.default_rng(0) if rng is None else rng)
    dst.load_state_dict(src.state_dict())
    return dst
