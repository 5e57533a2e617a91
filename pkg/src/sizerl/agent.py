"""Soft actor-critic on the sequence backbone.

Squashed-Gaussian actor (head emits mean and log-std per padded action slot),
twin critics with Polyak-averaged targets, and an automatically tuned entropy
temperature.  Padded action slots are masked out of the log-density and the
entropy target, so padding never distorts the policy objective; the per-sample
entropy target is minus the circuit's true action dimensionality.
"""

import math

import numpy as np

from . import numcore as nc
from .backbone import SequenceBackbone, copy_backbone
from .env import L_ACT, N_EMBED
from .numcore import Adam, Tensor, clip_global_norm

LOG_2PI = math.log(2.0 * math.pi)


def _config_field(obj, name, default):
    return getattr(obj, name, default) if obj is not None else default


class SacConfig:
    def __init__(self, discount=0.99, tau=0.005, lr=3e-4, temp_lr=3e-4,
                 batch=256, log_std_min=-20.0, log_std_max=2.0,
                 init_temp=0.2, auto_temp=True, grad_clip=1.0):
        if not 0.0 < discount < 1.0:
            raise ValueError("discount must be in (0, 1)")
        if not 0.0 < tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        self.discount = discount
        self.tau = tau
        self.lr = lr
        self.temp_lr = temp_lr
        self.batch = batch
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max
        self.init_temp = init_temp
        self.auto_temp = auto_temp
        self.grad_clip = grad_clip


class SacAgent:
    def __init__(self, circuits, backbone_cfg, sac_cfg, seed):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        r_actor, r_c1, r_c2, r_sample = [np.random.default_rng(s) for s in ss.spawn(4)]
        self.circuits = list(circuits)
        self.cfg = sac_cfg
        self.bcfg = backbone_cfg
        self.actor = SequenceBackbone(backbone_cfg, 2 * L_ACT, r_actor)
        self.critic1 = SequenceBackbone(backbone_cfg, 1, r_c1)
        self.critic2 = SequenceBackbone(backbone_cfg, 1, r_c2)
        self.target1 = copy_backbone(self.critic1)
        self.target2 = copy_backbone(self.critic2)
        self.rng = r_sample
        dtype = backbone_cfg.np_dtype
        self.log_temp = Tensor(np.array([math.log(sac_cfg.init_temp)], dtype=dtype),
                               requires_grad=True)
        self.opt_actor = Adam(self.actor.parameters(), lr=sac_cfg.lr)
        self.opt_c1 = Adam(self.critic1.parameters(), lr=sac_cfg.lr)
        self.opt_c2 = Adam(self.critic2.parameters(), lr=sac_cfg.lr)
        self.opt_temp = Adam({"log_temp": self.log_temp}, lr=sac_cfg.temp_lr)
        self._n_params = np.array([c.n_params for c in self.circuits])

    # ------------------------------------------------------------------
    # policy evaluation
    # ------------------------------------------------------------------
    def valid_counts(self, obs):
        """Per-row number of real action slots, from the observation one-hot."""
        idx = np.argmax(obs[:, :N_EMBED], axis=1)
        return self._n_params[idx]

    def _action_mask(self, obs):
        nv = self.valid_counts(obs)
        return (np.arange(L_ACT)[None, :] < nv[:, None]), nv

    def _policy_raw(self, obs):
        out = self.actor(np.atleast_2d(obs))
        mean = out[:, :L_ACT]
        log_std = nc.clip(out[:, L_ACT:], self.cfg.log_std_min, self.cfg.log_std_max)
        return mean, log_std

    def act(self, obs, deterministic=False):
        """Packed action in [-1, 1]^7 with padded slots zeroed."""
        obs = np.atleast_2d(obs)
        mask, _ = self._action_mask(obs)
        with nc.no_grad():
            mean, log_std = self._policy_raw(obs)
        if deterministic:
            a = np.tanh(mean.data)
        else:
            eps = self.rng.standard_normal(mean.shape).astype(mean.data.dtype)
            a = np.tanh(mean.data + np.exp(log_std.data) * eps)
        a = a * mask
        return a[0] if a.shape[0] == 1 else a

    def _sample_np(self, obs):
        """Stochastic action and masked log-probability, tape-free."""
        mask, _ = self._action_mask(obs)
        with nc.no_grad():
            mean, log_std = self._policy_raw(obs)
        mean, log_std = mean.data, log_std.data
        eps = self.rng.standard_normal(mean.shape).astype(mean.dtype)
        pre = mean + np.exp(log_std) * eps
        act = np.tanh(pre) * mask
        per_slot = (
            -0.5 * eps * eps - log_std - 0.5 * LOG_2PI
            - 2.0 * (math.log(2.0) - pre - _softplus(-2.0 * pre))
        )
        return act, (per_slot * mask).sum(axis=1)

    def policy_tape(self, obs, mask, eps):
        """Differentiable reparameterized action and masked log-probability.

        Same math as _sample_np, built from tape ops so gradients reach the
        actor: a = tanh(mean + std*eps), log-density with the stable squash
        correction log(1 - tanh(x)^2) = 2*(log 2 - x - softplus(-2x)).
        """
        dtype = self.bcfg.np_dtype
        mean, log_std = self._policy_raw(obs)
        pre = nc.add(mean, nc.mul(nc.exp(log_std), Tensor(eps)))
        a_masked = nc.mul(nc.tanh(pre), Tensor(mask.astype(dtype)))
        squash = nc.mul(
            nc.sub(nc.sub(math.log(2.0), pre), nc.softplus(nc.mul(pre, -2.0))), 2.0
        )
        gauss = nc.sub(Tensor(-0.5 * eps * eps - 0.5 * LOG_2PI), log_std)
        per_slot = nc.sub(gauss, squash)
        logp = nc.sum_(nc.mul(per_slot, Tensor(mask.astype(dtype))), axis=1)
        return a_masked, logp

    def log_prob(self, obs, action):
        """Masked log-density of `action` under the current policy.

        Components on valid slots must be strictly inside (-1, 1); the
        squashing is a bijection onto the open interval.
        """
        obs = np.atleast_2d(obs)
        action = np.atleast_2d(action)
        mask, _ = self._action_mask(obs)
        if np.any(np.abs(action * mask) >= 1.0):
            raise ValueError("action components on valid slots must satisfy |a| < 1")
        with nc.no_grad():
            mean, log_std = self._policy_raw(obs)
        mean, log_std = mean.data.astype(np.float64), log_std.data.astype(np.float64)
        a = np.clip(action, -1.0 + 1e-15, 1.0 - 1e-15)
        pre = np.arctanh(a)
        z = (pre - mean) / np.exp(log_std)
        per_slot = (
            -0.5 * z * z - log_std - 0.5 * LOG_2PI
            - 2.0 * (math.log(2.0) - pre - _softplus(-2.0 * pre))
        )
        out = (per_slot * mask).sum(axis=1)
        return out[0] if out.shape[0] == 1 else out

    # ------------------------------------------------------------------
    # training
    # ------------------------------------------------------------------
    def update(self, batch):
        """One critic step, one actor step, one temperature step, one soft update."""
        obs = batch["obs"]
        act = batch["act"]
        rew = batch["rew"]
        next_obs = batch["next_obs"]
        done = batch["done"]
        b = obs.shape[0]
        dtype = self.bcfg.np_dtype
        temp = float(np.exp(self.log_temp.data[0]))

        # soft Bellman target from the target critics (no tape)
        with nc.no_grad():
            next_act, next_logp = self._sample_np(next_obs)
            xt = np.concatenate([next_obs, next_act], axis=1)
            q_next = np.minimum(self.target1(xt).data[:, 0], self.target2(xt).data[:, 0])
            y = rew + self.cfg.discount * (1.0 - done) * (q_next - temp * next_logp)
        y_t = Tensor(y.astype(dtype).reshape(-1, 1))

        # critic step
        x = np.concatenate([obs, act], axis=1)
        self.opt_c1.zero_grad()
        self.opt_c2.zero_grad()
        q1 = self.critic1(x)
        q2 = self.critic2(x)
        d1 = nc.sub(q1, y_t)
        d2 = nc.sub(q2, y_t)
        critic_loss = nc.add(nc.mean(nc.mul(d1, d1)), nc.mean(nc.mul(d2, d2)))
        self._check_finite(critic_loss, "critic loss")
        critic_loss.backward()
        clip_global_norm(self.opt_c1.params, self.cfg.grad_clip)
        clip_global_norm(self.opt_c2.params, self.cfg.grad_clip)
        self.opt_c1.step()
        self.opt_c2.step()

        # actor step (critic weights frozen; gradients flow through the action)
        mask, nv = self._action_mask(obs)
        self.opt_actor.zero_grad()
        self._set_critic_grads(False)
        eps = self.rng.standard_normal((b, L_ACT)).astype(dtype)
        a_masked, logp = self.policy_tape(obs, mask, eps)
        xa = nc.concatenate([Tensor(obs.astype(dtype)), a_masked], axis=1)
        qa = nc.minimum(self.critic1(xa), self.critic2(xa))
        actor_loss = nc.mean(nc.sub(nc.mul(logp, temp), nc.reshape(qa, (b,))))
        self._check_finite(actor_loss, "actor loss")
        actor_loss.backward()
        self._set_critic_grads(True)
        clip_global_norm(self.opt_actor.params, self.cfg.grad_clip)
        self.opt_actor.step()

        # temperature step on the detached log-probability
        logp_np = logp.data.astype(np.float64)
        target_entropy = -nv.astype(np.float64)
        if self.cfg.auto_temp:
            self.opt_temp.zero_grad()
            self.log_temp.grad = np.array(
                [-(logp_np + target_entropy).mean()], dtype=self.log_temp.data.dtype
            )
            self.opt_temp.step()

        # target soft update
        self._soft_update(self.critic1, self.target1)
        self._soft_update(self.critic2, self.target2)

        return {
            "critic_loss": float(critic_loss.data) / 2.0,
            "actor_loss": float(actor_loss.data),
            "temperature": float(np.exp(self.log_temp.data[0])),
            "entropy": float(-logp_np.mean()),
            "q_mean": float(qa.data.mean()),
            "target_mean": float(y.mean()),
        }

    def _check_finite(self, loss, name):
        if not np.isfinite(loss.data).all():
            raise FloatingPointError(f"{name} is non-finite; aborting training")

    def _set_critic_grads(self, flag):
        for net in (self.critic1, self.critic2):
            for p in net.parameters().values():
                p.requires_grad = flag

    def _soft_update(self, online, target):
        tau = self.cfg.tau
        op = online.parameters()
        for k, tp in target.parameters().items():
            tp.data *= 1.0 - tau
            tp.data += tau * op[k].data

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------
    def state_arrays(self):
        out = {"log_temp": self.log_temp.data}
        for prefix, net in (
            ("actor", self.actor), ("critic1", self.critic1), ("critic2", self.critic2),
            ("target1", self.target1), ("target2", self.target2),
        ):
            for k, v in net.state_dict().items():
                out[f"{prefix}.{k}"] = v
        for prefix, opt in (
            ("opt_actor", self.opt_actor), ("opt_c1", self.opt_c1),
            ("opt_c2", self.opt_c2), ("opt_temp", self.opt_temp),
        ):
            for k, v in opt.state_arrays().items():
                out[f"{prefix}.{k}"] = v
        return out

    def load_state_arrays(self, arrays):
        self.log_temp.data[...] = arrays["log_temp"]
        for prefix, net in (
            ("actor", self.actor), ("critic1", self.critic1), ("critic2", self.critic2),
            ("target1", self.target1), ("target2", self.target2),
        ):
            sub = {k[len(prefix) + 1 :]: v for k, v in arrays.items()
                   if k.startswith(prefix + ".")}
            net.load_state_dict(sub)
        for prefix, opt in (
            ("opt_actor", self.opt_actor), ("opt_c1", self.opt_c1),
            ("opt_c2", self.opt_c2), ("opt_temp", self.opt_temp),
        ):
            sub = {k[len(prefix) + 1 :]: v for k, v in arrays.items()
                   if k.startswith(prefix + ".")}
            if sub:
                opt.load_state_arrays(sub)


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
