"""Probabilistic dynamics ensemble: training, elite selection, rollouts.

Each member maps a packed (obs ⊕ action) sequence to a diagonal Gaussian over
(next-obs delta ⊕ reward).  Members train on their own shuffled split of the
real buffer with validation-based early stopping; the elites (lowest
validation loss) generate the synthetic rollouts.  Inputs and targets are
normalized by real-buffer statistics stored with the ensemble.
"""

import numpy as np

from . import numcore as nc
from .backbone import SequenceBackbone
from .env import L_OBS, N_EMBED, SUCCESS_REWARD
from .numcore import Adam, Tensor, clip_global_norm

LOG_VAR_MAX = 0.5
LOG_VAR_MIN = -6.0
# precision weight cap for the mean term of the NLL: without it, dims whose
# variance collapses to the floor outweigh the informative dims by e^|floor|
# on every shared weight and stall mean learning
PRECISION_CAP = float(np.exp(1.5))


class EnsembleConfig:
    def __init__(self, n_total=7, n_elite=5, val_ratio=0.2, patience=5,
                 lr=3e-4, batch=256, min_improvement=1e-3, max_epochs=200,
                 grad_clip=1.0):
        if not 1 <= n_elite <= n_total:
            raise ValueError("need 1 <= n_elite <= n_total")
        self.n_total = n_total
        self.n_elite = n_elite
        self.val_ratio = val_ratio
        self.patience = patience
        self.lr = lr
        self.batch = batch
        self.min_improvement = min_improvement
        self.max_epochs = max_epochs
        self.grad_clip = grad_clip


def select_elites(val_losses, n_elite):
    """Indices of the n_elite smallest losses; ties break toward lower index."""
    order = np.argsort(np.asarray(val_losses), kind="stable")
    return list(order[:n_elite])


class Ensemble:
    def __init__(self, circuits, backbone_cfg, ens_cfg, seed):
        self.circuits = list(circuits)
        self.cfg = ens_cfg
        self.bcfg = backbone_cfg
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        seeds = ss.spawn(ens_cfg.n_total + 1)
        self.members = [
            SequenceBackbone(backbone_cfg, 2 * (L_OBS + 1), np.random.default_rng(s))
            for s in seeds[:-1]
        ]
        self.opts = [Adam(m.parameters(), lr=ens_cfg.lr) for m in self.members]
        self.rng = np.random.default_rng(seeds[-1])
        self.val_losses = np.full(ens_cfg.n_total, np.inf)
        self.elites = list(range(ens_cfg.n_elite))
        self.in_mean = np.zeros(L_OBS + 7)
        self.in_std = np.ones(L_OBS + 7)
        self.out_mean = np.zeros(L_OBS + 1)
        self.out_std = np.ones(L_OBS + 1)
        self.trained = False
        self._n_params = np.array([c.n_params for c in self.circuits])

    # ------------------------------------------------------------------
    def _targets(self, batch):
        delta = batch["next_obs"] - batch["obs"]
        return np.concatenate([delta, batch["rew"][:, None]], axis=1)

    def _bounded_logvar(self, raw):
        lv = nc.sub(LOG_VAR_MAX, nc.softplus(nc.sub(LOG_VAR_MAX, raw)))
        return nc.add(LOG_VAR_MIN, nc.softplus(nc.sub(lv, LOG_VAR_MIN)))

    def _nll(self, member, x_norm, t_norm, training=False):
        """Gaussian negative log-likelihood with soft-bounded log-variance.

        The training objective clips the precision weight on the squared
        error (see PRECISION_CAP) and learns the variance against the
        detached residuals, which keeps the stationary point of the true NLL
        while stopping collapsed-variance dims from dominating shared
        weights.  With training=False this is the plain NLL, used for
        validation and elite selection.
        """
        out = member(x_norm)
        k = L_OBS + 1
        mu = out[:, :k]
        lv = self._bounded_logvar(out[:, k:])
        err = nc.sub(mu, Tensor(t_norm.astype(mu.data.dtype)))
        prec = nc.exp(nc.mul(lv, -1.0))
        if training:
            # detached, capped weights: the mean term must not contribute a
            # second -err^2*e^(-lv) pull on lv (that would double the
            # stationary variance), and the cap bounds the weight ratio
            # between collapsed and informative dims
            w = Tensor(np.minimum(np.exp(-lv.data), PRECISION_CAP))
            mean_term = nc.mul(nc.mul(err, err), w)
            var_term = nc.add(nc.mul(Tensor(err.data * err.data), prec), lv)
            per = nc.add(mean_term, var_term)
        else:
            per = nc.add(nc.mul(nc.mul(err, err), prec), lv)
        return nc.mean(nc.mul(nc.sum_(per, axis=1), 0.5))

    def train(self, buffer):
        """Fit every member on the buffer; returns per-member val losses.

        Per member: own shuffled split (val_ratio holdout), minibatch NLL
        epochs, stop after `patience` epochs without a relative improvement
        of at least `min_improvement`, restore the best snapshot.
        """
        n = len(buffer)
        if n < 10 * self.cfg.batch:
            raise ValueError(
                f"ensemble training needs >= {10 * self.cfg.batch} transitions, buffer has {n}"
            )
        data = buffer.all()
        x = np.concatenate([data["obs"], data["act"]], axis=1)
        t = self._targets(data)
        self.in_mean = x.mean(axis=0)
        # packed inputs are O(1) by construction; flooring the scale keeps
        # dims that happen to be constant in the buffer from exploding when
        # rollouts later probe them
        self.in_std = np.maximum(x.std(axis=0), 0.05)
        self.out_mean = t.mean(axis=0)
        self.out_std = np.maximum(t.std(axis=0), 1e-6)
        xn = ((x - self.in_mean) / self.in_std).astype(self.bcfg.np_dtype)
        tn = ((t - self.out_mean) / self.out_std).astype(self.bcfg.np_dtype)

        epochs_run = []
        for mi, (member, opt) in enumerate(zip(self.members, self.opts)):
            perm = self.rng.permutation(n)
            n_val = max(1, int(round(self.cfg.val_ratio * n)))
            val_idx, train_idx = perm[:n_val], perm[n_val:]
            best = self._val_loss(member, xn[val_idx], tn[val_idx])
            best_state = member.state_dict()
            stall = 0
            epoch = 0
            while epoch < self.cfg.max_epochs and stall < self.cfg.patience:
                epoch += 1
                order = self.rng.permutation(train_idx.size)
                for s in range(0, train_idx.size, self.cfg.batch):
                    idx = train_idx[order[s : s + self.cfg.batch]]
                    if idx.size < 2:
                        continue
                    opt.zero_grad()
                    loss = self._nll(member, xn[idx], tn[idx], training=True)
                    loss.backward()
                    clip_global_norm(opt.params, self.cfg.grad_clip)
                    opt.step()
                cur = self._val_loss(member, xn[val_idx], tn[val_idx])
                if best - cur > self.cfg.min_improvement * abs(best):
                    best = cur
                    best_state = member.state_dict()
                    stall = 0
                else:
                    stall += 1
            member.load_state_dict(best_state)
            self.val_losses[mi] = best
            epochs_run.append(epoch)

        self.elites = select_elites(self.val_losses, self.cfg.n_elite)
        self.trained = True
        return {"val_losses": self.val_losses.copy(), "elites": list(self.elites),
                "epochs": epochs_run}

    def _val_loss(self, member, xn, tn, chunk=1024):
        total = 0.0
        with nc.no_grad():
            for s in range(0, xn.shape[0], chunk):
                part = self._nll(member, xn[s : s + chunk], tn[s : s + chunk])
                total += float(part.data) * min(chunk, xn.shape[0] - s)
        return total / xn.shape[0]

    # ------------------------------------------------------------------
    def predict(self, obs, act, member_idx, rng, sample=True):
        """One-step prediction: (next_obs, reward) with packing invariants.

        Samples from the member's Gaussian unless sample=False; the next
        observation keeps the input's one-hot, clamps the parameter slots to
        [0, 1], and zeroes the padding.
        """
        obs = np.atleast_2d(obs)
        act = np.atleast_2d(act)
        x = np.concatenate([obs, act], axis=1)
        xn = ((x - self.in_mean) / self.in_std).astype(self.bcfg.np_dtype)
        k = L_OBS + 1
        with nc.no_grad():
            out = self.members[member_idx](xn).data.astype(np.float64)
        mu = out[:, :k]
        raw = out[:, k:]
        lv = LOG_VAR_MAX - _softplus(LOG_VAR_MAX - raw)
        lv = LOG_VAR_MIN + _softplus(lv - LOG_VAR_MIN)
        pred = mu
        if sample:
            pred = mu + np.exp(0.5 * lv) * rng.standard_normal(mu.shape)
        pred = pred * self.out_std + self.out_mean
        delta, rew = pred[:, :L_OBS], pred[:, L_OBS]
        nxt = obs + delta
        return self._project(nxt, obs), rew

    def _project(self, nxt, obs):
        nxt = nxt.copy()
        nxt[:, :N_EMBED] = obs[:, :N_EMBED]
        idx = np.argmax(obs[:, :N_EMBED], axis=1)
        nv = self._n_params[idx]
        for i in range(nxt.shape[0]):
            npar = nv[i]
            nxt[i, N_EMBED : N_EMBED + npar] = np.clip(
                nxt[i, N_EMBED : N_EMBED + npar], 0.0, 1.0
            )
            circuit = self.circuits[idx[i]]
            valid = N_EMBED + circuit.raw_obs_dim
            nxt[i, valid:] = 0.0
        return nxt

    def rollout(self, agent, starts, horizon, rng):
        """Model rollouts from real start observations with the live policy.

        Per step each active trajectory uses an elite drawn uniformly at
        random; a trajectory stops early when the predicted reward reaches
        the success level (within 1e-6 relative).  Stored rewards are snapped
        to the environment's emission set {10} u (-inf, -0.02]: the real
        reward jumps discontinuously at the tolerance, and raw model
        interpolations across that cliff feed the critic values the
        environment can never produce.
        """
        if not self.elites:
            raise RuntimeError("rollout requires a trained ensemble with elites")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        obs = np.array(starts, dtype=np.float64)
        active = np.arange(obs.shape[0])
        out = {"obs": [], "act": [], "rew": [], "next_obs": [], "done": []}
        for _ in range(horizon):
            if active.size == 0:
                break
            cur = obs[active]
            act = np.atleast_2d(agent.act(cur, deterministic=False))
            members = rng.choice(self.elites, size=active.size)
            nxt = np.empty_like(cur)
            rew = np.empty(active.size)
            for e in np.unique(members):
                rows = members == e
                nxt[rows], rew[rows] = self.predict(cur[rows], act[rows], int(e), rng)
            done = rew >= SUCCESS_REWARD * (1.0 - 1e-6)
            rew = np.where(done, SUCCESS_REWARD, np.minimum(rew, -0.02))
            out["obs"].append(cur)
            out["act"].append(act)
            out["rew"].append(rew)
            out["next_obs"].append(nxt)
            out["done"].append(done.astype(np.float64))
            obs[active] = nxt
            active = active[~done]
        return {k: np.concatenate(v, axis=0) for k, v in out.items()}

    def mean_elite_loss(self):
        if not self.trained:
            return float("nan")
        return float(np.mean([self.val_losses[i] for i in self.elites]))

    # ------------------------------------------------------------------
    def state_arrays(self):
        out = {
            "norm.in_mean": self.in_mean, "norm.in_std": self.in_std,
            "norm.out_mean": self.out_mean, "norm.out_std": self.out_std,
            "val_losses": self.val_losses,
            "elites": np.array(self.elites, dtype=np.float64),
        }
        for mi, m in enumerate(self.members):
            for k, v in m.state_dict().items():
                out[f"member{mi}.{k}"] = v
        return out

    def load_state_arrays(self, arrays):
        self.in_mean = np.asarray(arrays["norm.in_mean"], dtype=np.float64)
        self.in_std = np.asarray(arrays["norm.in_std"], dtype=np.float64)
        self.out_mean = np.asarray(arrays["norm.out_mean"], dtype=np.float64)
        self.out_std = np.asarray(arrays["norm.out_std"], dtype=np.float64)
        self.val_losses = np.asarray(arrays["val_losses"], dtype=np.float64).copy()
        self.elites = [int(i) for i in arrays["elites"]]
        for mi, m in enumerate(self.members):
            sub = {k[len(f"member{mi}.") :]: v for k, v in arrays.items()
                   if k.startswith(f"member{mi}.")}
            m.load_state_dict(sub)
        self.trained = True


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
