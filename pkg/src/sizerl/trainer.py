"""Training orchestration: exploration, buffers, model/rollout cadence,
scheduled mixed batches, evaluation, and metrics output.

Per environment step t (after N_I random-action exploration steps):
  * every T_model steps: retrain the ensemble on the real buffer and
    reselect elites;
  * every T_ro steps: clear the synthetic buffer and refill it by rolling
    the elites out R(t) steps from real start observations (a retrain that
    does not coincide with a rebuild appends without clearing);
  * step the environment with the stochastic policy, push to the real
    buffer;
  * run T_a(t) agent updates on batches of round(alpha(t)*b) real and
    b - round(alpha(t)*b) synthetic transitions.

Modes: "m3" uses the scheduled parameters, "mbrl_fixed" the fixed baseline
constants, and "mfrl_mamba" disables the ensemble entirely (all-real
batches).
"""

import csv
import os
import time

import numpy as np

from .agent import SacAgent, SacConfig
from .backbone import BackboneConfig
from .checkpoint import save_checkpoint
from .circuits import build_surrogates, registry, sample_target
from .config import VALID_MODES, config_hash
from .env import L_ACT, SizingEnv, AdapterSimulator
from .replay import ReplayBuffer, merge_batches
from .schedule import Schedule, ScheduleConfig, fixed_mode
from .worldmodel import Ensemble, EnsembleConfig

METRIC_COLUMNS = [
    "t", "circuit", "mean_ep_reward", "mean_ep_len", "success_rate",
    "alpha", "t_a", "r", "model_val_loss", "actor_loss", "critic_loss",
    "temperature",
]


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


class Trainer:
    def __init__(self, cfg, adapter_factory=None):
        if cfg["mode"] not in VALID_MODES:
            raise ValueError(
                f"unknown mode {cfg['mode']!r}; valid modes: {', '.join(VALID_MODES)}"
            )
        self.cfg = cfg
        self.mode = cfg["mode"]
        self.circuits = registry()
        ss = np.random.SeedSequence(cfg["seed"])
        (s_env, s_explore, s_agent, s_model, s_batch, s_eval, s_roll) = ss.spawn(7)

        if cfg.get("adapter"):
            factory = adapter_factory
            if factory is None:
                from .adapter import open_adapter

                client = open_adapter(cfg["adapter"])
                self.simulators = {
                    c.cid: AdapterSimulator(c, client) for c in self.circuits
                }
            else:
                self.simulators = factory(self.circuits)
        else:
            self.simulators = build_surrogates(
                self.circuits,
                seed=cfg["surrogate.seed"],
                roughness=cfg["surrogate.roughness"],
                master_slack=cfg["surrogate.master_slack"],
            )

        self.env = SizingEnv(
            self.circuits, self.simulators, np.random.default_rng(s_env),
            episode_limit=cfg["train.episode_limit"],
        )
        bcfg = BackboneConfig(
            d_model=cfg["backbone.d_model"], d_state=cfg["backbone.d_state"],
            conv_width=cfg["backbone.conv_width"], expand=cfg["backbone.expand"],
            n_layers=cfg["backbone.n_layers"], dtype=cfg["backbone.dtype"],
        )
        self.bcfg = bcfg
        sac = SacConfig(
            discount=cfg["sac.discount"], tau=cfg["sac.tau"], lr=cfg["sac.lr"],
            temp_lr=cfg["sac.temp_lr"], batch=cfg["sac.batch"],
            init_temp=cfg["sac.init_temp"], auto_temp=cfg["sac.auto_temp"],
        )
        self.agent = SacAgent(self.circuits, bcfg, sac, seed=s_agent)
        self.schedule = (
            fixed_mode()
            if self.mode == "mbrl_fixed"
            else Schedule(ScheduleConfig(
                alpha_i=cfg["schedule.alpha_i"], alpha_f=cfg["schedule.alpha_f"],
                ta_i=cfg["schedule.ta_i"], ta_f=cfg["schedule.ta_f"],
                r_i=cfg["schedule.r_i"], r_f=cfg["schedule.r_f"],
                scale=cfg["schedule.scale"],
            ))
        )
        self.use_model = self.mode != "mfrl_mamba"
        self.ensemble = None
        if self.use_model:
            self.ensemble = Ensemble(
                self.circuits, bcfg,
                EnsembleConfig(
                    n_total=cfg["ensemble.n_total"], n_elite=cfg["ensemble.n_elite"],
                    val_ratio=cfg["ensemble.val_ratio"], patience=cfg["ensemble.patience"],
                    lr=cfg["ensemble.lr"], batch=cfg["sac.batch"],
                    max_epochs=cfg["ensemble.max_epochs"],
                ),
                seed=s_model,
            )
        self.b_real = ReplayBuffer(cfg["train.real_capacity"])
        syn_cap = cfg["train.rollout_starts"] * max(
            cfg["schedule.r_f"], cfg["schedule.r_i"], 10
        )
        self.b_sync = ReplayBuffer(syn_cap)
        self.rng_explore = np.random.default_rng(s_explore)
        self.rng_batch = np.random.default_rng(s_batch)
        self.rng_roll = np.random.default_rng(s_roll)
        self.eval_targets = self._freeze_eval_targets(np.random.default_rng(s_eval))
        self.fallback_warnings = 0
        self.last_model_val = float("nan")
        self.last_update = {"actor_loss": float("nan"), "critic_loss": float("nan"),
                            "temperature": float("nan")}
        self.steps_to_success = None

    # ------------------------------------------------------------------
    def _freeze_eval_targets(self, rng):
        """Per-circuit fixed evaluation set, sampled once per seed."""
        out = {}
        for c in self.circuits:
            episodes = []
            for _ in range(self.cfg["train.eval_episodes"]):
                episodes.append(
                    (sample_target(c, rng), rng.uniform(0.0, 1.0, c.n_params))
                )
            out[c.cid] = episodes
        return out

    def explore(self):
        """Fill the real buffer with N_I uniform-random-action steps."""
        n = self.cfg["train.n_explore"]
        obs = self.env.reset()
        idx = np.argmax(obs[:4])
        for _ in range(n):
            act = self.rng_explore.uniform(-1.0, 1.0, L_ACT)
            nxt, rew, done, info = self.env.step(act)
            self.b_real.push(obs, act, rew, nxt, info["terminal"], idx)
            if done:
                obs = self.env.reset()
                idx = np.argmax(obs[:4])
            else:
                obs = nxt
        return self.b_real

    # ------------------------------------------------------------------
    def _retrain_model(self):
        stats = self.ensemble.train(self.b_real)
        self.last_model_val = self.ensemble.mean_elite_loss()
        return stats

    def _rebuild_synthetic(self, t, clear):
        if clear:
            self.b_sync.clear()
        horizon = self.schedule.r(t)
        starts = self.b_real.sample_obs(self.cfg["train.rollout_starts"], self.rng_roll)
        batch = self.ensemble.rollout(self.agent, starts, horizon, self.rng_roll)
        circ = np.argmax(batch["obs"][:, :4], axis=1)
        batch["circuit"] = circ
        self.b_sync.push_batch(batch)

    def _mixed_batch(self, t):
        b = self.cfg["sac.batch"]
        if not self.use_model:
            return self.b_real.sample(b, self.rng_batch)
        n_real = int(round(self.schedule.alpha(t) * b))
        n_syn = b - n_real
        if n_syn > len(self.b_sync):
            self.fallback_warnings += 1
            return self.b_real.sample(b, self.rng_batch)
        real = self.b_real.sample(n_real, self.rng_batch) if n_real else None
        syn = self.b_sync.sample(n_syn, self.rng_batch) if n_syn else None
        if real is None:
            return syn
        if syn is None:
            return real
        return merge_batches(real, syn)

    # ------------------------------------------------------------------
    def run(self, progress=None):
        """Main loop; returns a summary dict and writes metrics/checkpoints."""
        cfg = self.cfg
        out_dir = cfg["out"]
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.csv")
        t_max = cfg["train.t_max"]
        t_model = cfg["train.t_model"]
        t_ro = cfg["train.t_ro"]
        started = time.time()

        self.explore()
        assert self.env.step_count == cfg["train.n_explore"]

        obs = self.env.reset()
        idx = int(np.argmax(obs[:4]))
        rows = []
        final_t = 0
        with open(metrics_path, "w", newline="") as mf:
            writer = csv.writer(mf)
            writer.writerow(METRIC_COLUMNS)
            for t in range(1, t_max + 1):
                final_t = t
                model_event = self.use_model and t % t_model == 0
                ro_event = self.use_model and t % t_ro == 0
                if model_event:
                    self._retrain_model()
                if model_event or ro_event:
                    self._rebuild_synthetic(t, clear=ro_event)

                act = self.agent.act(obs, deterministic=False)
                nxt, rew, done, info = self.env.step(act)
                self.b_real.push(obs, act, rew, nxt, info["terminal"], idx)
                if done:
                    obs = self.env.reset()
                    idx = int(np.argmax(obs[:4]))
                else:
                    obs = nxt

                for _ in range(self.schedule.t_a(t)):
                    batch = self._mixed_batch(t)
                    self.last_update = self.agent.update(batch)

                if t % cfg["train.eval_every"] == 0 or t == t_max:
                    report = self.evaluate()
                    rows.extend(self._metric_rows(writer, t, report))
                    mf.flush()
                    self._save_checkpoint(out_dir, t, name="ckpt_latest.bin")
                    if progress:
                        progress(t, report, time.time() - started)
                    if self._all_pass(report) and self.steps_to_success is None:
                        self.steps_to_success = t
                        if cfg["train.stop_on_success"]:
                            break

        expected = cfg["train.n_explore"] + final_t
        if self.env.step_count != expected:
            raise AssertionError(
                f"environment step accounting broken: {self.env.step_count} != {expected}"
            )
        self._save_checkpoint(out_dir, final_t, name="ckpt_final.bin")
        summary = {
            "mode": self.mode,
            "seed": cfg["seed"],
            "steps": final_t,
            "env_steps_total": self.env.step_count,
            "steps_to_success": self.steps_to_success,
            "fallback_warnings": self.fallback_warnings,
            "wall_seconds": time.time() - started,
        }
        import json

        with open(os.path.join(out_dir, "summary.json"), "w") as f:
            json.dump(summary, f, indent=2)
        return summary

    def _metric_rows(self, writer, t, report):
        rows = []
        for cid, r in report.items():
            row = [
                t, cid, _fmt(r["mean_ep_reward"]), _fmt(r["mean_ep_len"]),
                _fmt(r["success_rate"]),
                _fmt(self.schedule.alpha(t)), _fmt(self.schedule.t_a(t)),
                _fmt(self.schedule.r(t)),
                _fmt(self.last_model_val if self.use_model else float("nan")),
                _fmt(self.last_update["actor_loss"]),
                _fmt(self.last_update["critic_loss"]),
                _fmt(self.last_update["temperature"]),
            ]
            writer.writerow(row)
            rows.append(row)
        return rows

    @staticmethod
    def _all_pass(report):
        return all(
            r["mean_ep_reward"] >= 0.0 and r["mean_ep_len"] <= 25.0
            for r in report.values()
        )

    # ------------------------------------------------------------------
    def evaluate(self):
        """Deterministic-policy episodes on the frozen per-circuit targets."""
        report = {}
        for ci, c in enumerate(self.circuits):
            rewards, lengths, succ = [], [], 0
            eval_env = SizingEnv(
                self.circuits, self.simulators, np.random.default_rng(0),
                episode_limit=self.cfg["train.episode_limit"],
            )
            for target, p0 in self.eval_targets[c.cid]:
                obs = eval_env.reset(forced_circuit=ci, forced_target=target, forced_p=p0)
                done = False
                total = 0.0
                steps = 0
                while not done:
                    act = self.agent.act(obs, deterministic=True)
                    obs, rew, done, info = eval_env.step(act)
                    total += rew
                    steps += 1
                rewards.append(total)
                lengths.append(steps)
                succ += bool(info["success"])
            report[c.cid] = {
                "mean_ep_reward": float(np.mean(rewards)),
                "mean_ep_len": float(np.mean(lengths)),
                "success_rate": succ / len(self.eval_targets[c.cid]),
            }
        return report

    # ------------------------------------------------------------------
    def _save_checkpoint(self, out_dir, t, name):
        tensors = self.agent.state_arrays()
        if self.ensemble is not None and self.ensemble.trained:
            for k, v in self.ensemble.state_arrays().items():
                tensors[f"ensemble.{k}"] = v
        save_checkpoint(
            os.path.join(out_dir, name),
            tensors,
            config={k: self.cfg[k] for k in sorted(self.cfg)},
            extra={"t": t, "mode": self.mode, "seed": self.cfg["seed"],
                   "config_hash": config_hash(self.cfg)},
        )


def load_agent_from_checkpoint(path):
    """Rebuild a SacAgent (and config) from a checkpoint file."""
    from .checkpoint import load_checkpoint

    tensors, cfg, extra = load_checkpoint(path)
    bcfg = BackboneConfig(
        d_model=cfg["backbone.d_model"], d_state=cfg["backbone.d_state"],
        conv_width=cfg["backbone.conv_width"], expand=cfg["backbone.expand"],
        n_layers=cfg["backbone.n_layers"], dtype=cfg["backbone.dtype"],
    )
    sac = SacConfig(
        discount=cfg["sac.discount"], tau=cfg["sac.tau"], lr=cfg["sac.lr"],
        temp_lr=cfg["sac.temp_lr"], batch=cfg["sac.batch"],
        init_temp=cfg["sac.init_temp"], auto_temp=cfg["sac.auto_temp"],
    )
    agent = SacAgent(registry(), bcfg, sac, seed=cfg["seed"])
    agent.load_state_arrays(
        {k: v for k, v in tensors.items() if not k.startswith("ensemble.")}
    )
    return agent, cfg, extra
