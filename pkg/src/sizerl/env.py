"""Multi-circuit sizing MDP: packed observations, reward, episode control.

One agent serves circuits of different dimensionality, so observations and
actions are packed into fixed-length, zero-padded vectors:

    obs  = [ one-hot(4) | p_1..p_N | d(m_1,g_1), d(n_1,g_1), ...,
             d(m_K,g_K), d(n_K,g_K) | zeros ]            length 23
    act  = [ a_1..a_N | zeros ]                           length 7

with d(x, y) = (x - y) / (x + y), a scale-free comparison.  The reward is
the clipped figure of merit

    FoM = sum_i min(dtilde_i, 0),   dtilde_i = d(m_i, n_i)  (maximize specs)
                                               d(n_i, m_i)  (minimize specs)

returned as-is while FoM < -0.02 and as 10 once FoM >= -0.02 (all specs met
within tolerance).  An episode ends on positive reward or after 30 steps.
"""

import numpy as np

from .circuits import denormalize

N_EMBED = 4      # one-hot circuit slots
MAX_RAW_DIM = 19
L_OBS = N_EMBED + MAX_RAW_DIM  # 23
L_ACT = 7
T_EP = 30
SUCCESS_REWARD = 10.0
FOM_TOLERANCE = -0.02


def d(x, y):
    """Relative difference (x - y) / (x + y); scale-invariant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s = x + y
    if np.any(s == 0.0):
        raise ZeroDivisionError(f"d(x, y) undefined where x + y = 0 (x={x}, y={y})")
    return (x - y) / s


def directional_d(m, n, directions):
    """d oriented so that a met spec gives a nonnegative value."""
    m = np.asarray(m, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    dirs = np.asarray(directions)
    return np.where(dirs > 0, d(m, n), d(n, m))


def reward(m, n, directions):
    """(reward, fom, dtilde) per the clipped figure of merit."""
    dt = directional_d(m, n, directions)
    fom = float(np.minimum(dt, 0.0).sum())
    r = SUCCESS_REWARD if fom >= FOM_TOLERANCE else fom
    return r, fom, dt


def pack_observation(circuit_idx, circuit, p, m, n):
    g = circuit.g_values
    obs = np.zeros(L_OBS)
    obs[circuit_idx] = 1.0
    k = N_EMBED
    obs[k : k + circuit.n_params] = p
    k += circuit.n_params
    pairs = np.empty(2 * circuit.n_specs)
    pairs[0::2] = d(m, g)
    pairs[1::2] = d(n, g)
    obs[k : k + pairs.size] = pairs
    return obs


def unpack_observation(obs, circuit):
    """Inverse of pack_observation: (circuit_idx, p, d(m,g) row, d(n,g) row)."""
    idx = int(np.argmax(obs[:N_EMBED]))
    k = N_EMBED
    p = obs[k : k + circuit.n_params].copy()
    k += circuit.n_params
    pairs = obs[k : k + 2 * circuit.n_specs]
    return idx, p, pairs[0::2].copy(), pairs[1::2].copy()


def valid_obs_len(circuit):
    return N_EMBED + circuit.raw_obs_dim


def pack_action(a, n_params):
    out = np.zeros(L_ACT)
    out[:n_params] = a[:n_params]
    return out


class SizingEnv:
    """The environment: reset rotates circuit and targets, step moves p.

    `simulators` maps circuit id to an object with
    simulate(p_normalized) -> metrics; pass surrogates or an adapter shim.
    `step_count` counts env.step() calls; `sim_calls` additionally counts
    the initial evaluation each reset needs.
    """

    def __init__(self, circuits, simulators, rng, episode_limit=T_EP):
        self.circuits = list(circuits)
        self.simulators = simulators
        self.rng = rng
        self.episode_limit = episode_limit
        self.step_count = 0
        self.sim_calls = 0
        self.clamp_warnings = 0
        self._state = None

    def reset(self, forced_circuit=None, forced_target=None, forced_p=None):
        if forced_circuit is None:
            idx = int(self.rng.integers(len(self.circuits)))
        else:
            idx = forced_circuit
            if isinstance(forced_circuit, str):
                idx = [c.cid for c in self.circuits].index(forced_circuit)
        circuit = self.circuits[idx]
        if forced_target is None:
            from .circuits import sample_target

            n = sample_target(circuit, self.rng)
        else:
            n = np.asarray(forced_target, dtype=np.float64)
        p = self.rng.uniform(0.0, 1.0, circuit.n_params) if forced_p is None else np.asarray(forced_p, dtype=np.float64).copy()
        m = self._simulate(circuit, p)
        self._state = {"idx": idx, "circuit": circuit, "p": p, "m": m, "n": n, "t": 0}
        return pack_observation(idx, circuit, p, m, n)

    def _simulate(self, circuit, p):
        self.sim_calls += 1
        return np.asarray(self.simulators[circuit.cid].simulate(p), dtype=np.float64)

    def step(self, action):
        if self._state is None:
            raise RuntimeError("step() before reset()")
        st = self._state
        circuit = st["circuit"]
        a = np.asarray(action, dtype=np.float64)[:L_ACT]
        if np.any(np.abs(a) > 1.0 + 1e-12):
            self.clamp_warnings += 1
            a = np.clip(a, -1.0, 1.0)
        st["p"] = np.clip(st["p"] + a[: circuit.n_params], 0.0, 1.0)
        st["m"] = self._simulate(circuit, st["p"])
        st["t"] += 1
        self.step_count += 1
        r, fom, dtilde = reward(st["m"], st["n"], circuit.directions)
        terminal = r > 0.0
        done = terminal or (st["t"] >= self.episode_limit)
        obs = pack_observation(st["idx"], circuit, st["p"], st["m"], st["n"])
        info = {
            "circuit": circuit.cid,
            "fom": fom,
            "dtilde": dtilde,
            "metrics": st["m"].copy(),
            "targets": st["n"].copy(),
            "success": terminal,
            # timeouts truncate the episode without ending the task; the
            # Bellman backup should bootstrap through them
            "terminal": terminal,
            "episode_step": st["t"],
        }
        return obs, r, done, info

    @property
    def current_circuit(self):
        return self._state["circuit"] if self._state else None


class AdapterSimulator:
    """Adapter-backed drop-in for a Surrogate: denormalizes and queries."""

    def __init__(self, circuit, client):
        self.circuit = circuit
        self.client = client

    def simulate(self, p):
        p = np.asarray(p, dtype=np.float64)
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError(f"normalized parameters outside [0,1]: {p}")
        physical = denormalize(self.circuit, p)
        return self.client.query(self.circuit.cid, physical, self.circuit.n_specs)
