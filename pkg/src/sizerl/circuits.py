"""Benchmark circuit definitions, target sampling, and surrogate simulators.

Four circuits: two-stage op-amp (2SOA), its complementary variant (R2SOA),
a two-stage transimpedance amplifier (2STIA), and a comparator (Comp).
Each has parameter ranges, a spec set with directions, and a per-spec
normalizing factor g (geometric midpoint of the target range; fixed specs
use their fixed value).

The surrogate simulator is an analytic monotone log-linear map from
normalized parameters p in [0,1]^N to metrics:

    m_i(p) = g_i * exp( sum_j w_ij * (2 p_j - 1) )

Weight construction guarantees that every sampled target set is jointly
attainable: parameter 0 acts as a master knob whose weight sign matches each
spec's direction and whose magnitude covers half the target range in log
space, so p = (1, 0.5, ..., 0.5) meets every spec simultaneously.
"""

from dataclasses import dataclass

import numpy as np

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


@dataclass(frozen=True)
class ParamDef:
    name: str
    lo: float
    hi: float
    scale: str = "linear"  # "linear" | "log"
    integer: bool = False


@dataclass(frozen=True)
class SpecDef:
    name: str
    lo: float
    hi: float
    direction: str
    fixed: bool = False  # fixed target: lo == hi

    @property
    def g(self):
        """Normalizing factor: geometric midpoint, or the fixed value."""
        return self.lo if self.fixed else float(np.sqrt(self.lo * self.hi))


@dataclass(frozen=True)
class CircuitDef:
    cid: str
    params: tuple
    specs: tuple

    @property
    def n_params(self):
        return len(self.params)

    @property
    def n_specs(self):
        return len(self.specs)

    @property
    def raw_obs_dim(self):
        return self.n_params + 2 * self.n_specs

    @property
    def directions(self):
        return np.array([+1.0 if s.direction == MAXIMIZE else -1.0 for s in self.specs])

    @property
    def g_values(self):
        return np.array([s.g for s in self.specs])


def _mult6():
    return tuple(ParamDef(f"m{i+1}", 1, 100, "linear", integer=True) for i in range(6))


def registry():
    """The four benchmark circuits with their parameter and spec tables."""
    amp_specs = (
        SpecDef("gain", 2e2, 4e2, MAXIMIZE),
        SpecDef("bw", 1e6, 2.5e7, MAXIMIZE),
        SpecDef("pm", 60.0, 60.0, MAXIMIZE, fixed=True),
        SpecDef("ibias1", 1e-4, 1e-2, MINIMIZE),
    )
    return (
        CircuitDef(
            "2SOA",
            _mult6() + (ParamDef("c", 1e-13, 1e-11, "log"),),
            amp_specs
            + (
                SpecDef("ibias2", 1e-4, 1e-2, MINIMIZE),
                SpecDef("swing", 0.5, 0.5, MAXIMIZE, fixed=True),
            ),
        ),
        CircuitDef(
            "R2SOA",
            _mult6() + (ParamDef("c", 1e-13, 1e-11, "log"),),
            amp_specs,
        ),
        CircuitDef(
            "2STIA",
            _mult6(),
            (
                SpecDef("gain", 2.5e2, 5e2, MAXIMIZE),
                SpecDef("bw", 4.5e9, 1e10, MAXIMIZE),
                SpecDef("pm", 60.0, 60.0, MAXIMIZE, fixed=True),
                SpecDef("ibias", 4e-2, 2e-1, MINIMIZE),
            ),
        ),
        CircuitDef(
            "Comp",
            tuple(ParamDef(f"w{i+1}", 0.1, 100, "log") for i in range(6)),
            (
                SpecDef("delay", 4.5e-12, 9e-12, MINIMIZE),
                SpecDef("power", 2e-10, 2.5e-10, MINIMIZE),
            ),
        ),
    )


def circuit_index(circuits, cid):
    for i, c in enumerate(circuits):
        if c.cid == cid:
            return i
    raise KeyError(f"unknown circuit id {cid!r}; known: {[c.cid for c in circuits]}")


def sample_target(circuit, rng):
    """Draw one target per spec.

    Ranged specs spanning at least a decade are sampled log-uniformly,
    narrower ranges uniformly; fixed specs return their value verbatim.
    """
    out = np.empty(circuit.n_specs)
    for i, s in enumerate(circuit.specs):
        if s.fixed:
            out[i] = s.lo
        elif s.hi / s.lo >= 10.0:
            out[i] = np.exp(rng.uniform(np.log(s.lo), np.log(s.hi)))
        else:
            out[i] = rng.uniform(s.lo, s.hi)
    return out


def denormalize(circuit, p):
    """Map normalized p in [0,1]^N to physical parameter values.

    Linear scales map affinely, log scales exponentially between the bounds;
    integer parameters round half up after mapping.
    """
    p = np.asarray(p, dtype=np.float64)
    out = np.empty_like(p)
    for j, prm in enumerate(circuit.params):
        if prm.scale == "log":
            v = np.exp(np.log(prm.lo) + p[j] * (np.log(prm.hi) - np.log(prm.lo)))
        else:
            v = prm.lo + p[j] * (prm.hi - prm.lo)
        if prm.integer:
            v = np.floor(v + 0.5)
        out[j] = v
    return out


class Surrogate:
    """Seeded log-linear stand-in for the circuit simulator.

    `roughness` scales the non-master weights and tunes task difficulty.
    Construction invariants (asserted):
      * sum_j |w_ij| >= 0.5*ln(hi/lo) for every ranged spec (every sampled
        target is attainable), and
      * some parameter carries opposite-signed weights on two specs when
        K >= 2 (a real trade-off exists).
    """

    def __init__(self, circuit, seed, roughness=2.0, master_slack=0.05):
        self.circuit = circuit
        k, n = circuit.n_specs, circuit.n_params
        rng = np.random.default_rng(seed)
        w = rng.uniform(0.3, 1.0, size=(k, n)) * roughness
        # documented sign table: master column follows the spec direction,
        # the rest alternate so adjacent specs pull shared knobs both ways
        for i in range(k):
            for j in range(1, n):
                w[i, j] *= 1.0 if (i + j) % 2 == 0 else -1.0
        # master weight barely covers the worst-case target, so success needs
        # the master knob placed precisely and the trade-off knobs balanced
        dirs = circuit.directions
        for i, s in enumerate(circuit.specs):
            need = 0.0 if s.fixed else 0.5 * np.log(s.hi / s.lo)
            w[i, 0] = dirs[i] * (need + master_slack * (0.5 + 0.5 * rng.uniform()))
        self.w = w
        self.g = circuit.g_values
        for i, s in enumerate(circuit.specs):
            if not s.fixed:
                assert np.abs(w[i]).sum() >= 0.5 * np.log(s.hi / s.lo)
        if k >= 2 and n >= 2:
            assert np.any(w[:-1, 1:] * w[1:, 1:] < 0), "no trade-off parameter"

    def simulate(self, p):
        """Metrics at normalized parameters p in [0,1]^N; always positive."""
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.circuit.n_params,):
            raise ValueError(f"expected {self.circuit.n_params} parameters, got shape {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError(f"normalized parameters outside [0,1]: {p}")
        return self.g * np.exp(self.w @ (2.0 * p - 1.0))

    def feasible_point(self):
        """A normalized point meeting every spec for any in-range target."""
        p = np.full(self.circuit.n_params, 0.5)
        p[0] = 1.0
        return p


def build_surrogates(circuits, seed=7, roughness=2.0, master_slack=0.05):
    """One surrogate per circuit, derived deterministically from `seed`."""
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(circuits))
    return {
        c.cid: Surrogate(c, child, roughness, master_slack)
        for c, child in zip(circuits, children)
    }
