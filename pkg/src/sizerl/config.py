"""Flat dotted-key run configuration, file format, and run manifests.

Config files are plain text, one `key = value` per line; `#` starts a
comment.  Values parse as JSON scalars where possible, else as strings.
CLI overrides use the same `key=value` form.  Unknown keys are rejected with
the list of valid keys, and every value is coerced to the type of its
default.
"""

import hashlib
import json
import os

DEFAULTS = {
    "mode": "m3",                 # m3 | mbrl_fixed | mfrl_mamba
    "seed": 0,
    "out": "runs/latest",
    "adapter": "",                # host:port or exec:<cmd>; empty = surrogates
    # desk-scale network dims (BackboneConfig defaults are the full-scale 64/16)
    "backbone.d_model": 32,
    "backbone.d_state": 8,
    "backbone.conv_width": 4,
    "backbone.expand": 2,
    "backbone.n_layers": 2,
    "backbone.dtype": "float32",
    "sac.discount": 0.99,
    "sac.tau": 0.005,
    "sac.lr": 3e-4,
    "sac.temp_lr": 3e-4,
    "sac.batch": 256,
    "sac.init_temp": 0.2,
    "sac.auto_temp": True,
    "ensemble.n_total": 7,
    "ensemble.n_elite": 5,
    "ensemble.val_ratio": 0.2,
    "ensemble.patience": 5,
    "ensemble.lr": 3e-4,
    "ensemble.max_epochs": 200,
    "schedule.alpha_i": 0.05,
    "schedule.alpha_f": 0.95,
    "schedule.ta_i": 15,
    "schedule.ta_f": 20,
    "schedule.r_i": 1,
    "schedule.r_f": 7,
    "schedule.scale": 15000.0,
    "train.t_max": 20000,
    "train.t_model": 300,
    "train.t_ro": 30,
    "train.n_explore": 3600,
    "train.episode_limit": 30,
    "train.eval_every": 500,
    "train.eval_episodes": 10,
    "train.rollout_starts": 400,
    "train.real_capacity": 1000000,
    "train.stop_on_success": False,
    "surrogate.seed": 7,
    "surrogate.roughness": 2.0,
    "surrogate.master_slack": 0.05,
}

VALID_MODES = ("m3", "mbrl_fixed", "mfrl_mamba")


class ConfigError(ValueError):
    pass


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(key, value):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("true", "1", "yes"):
            return True
        if str(value).lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            f = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        if f != int(f):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(f)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    return str(value)


def default_config():
    return dict(DEFAULTS)


def apply_overrides(cfg, pairs):
    """Apply `key=value` strings; unknown keys list the valid ones."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(
                f"unknown config key {key!r}; valid keys: {', '.join(sorted(DEFAULTS))}"
            )
        cfg[key] = _coerce(key, _parse_value(raw.strip()))
    return cfg


def load_config_file(path):
    cfg = default_config()
    pairs = []
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
            pairs.append(line)
    return apply_overrides(cfg, pairs)


def config_hash(cfg):
    """Content hash, stable under key reordering."""
    canon = "\n".join(f"{k}={json.dumps(cfg[k], sort_keys=True)}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_manifest(out_dir, cfg):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "config": {k: cfg[k] for k in sorted(cfg)},
        "config_hash": config_hash(cfg),
        "mode": cfg["mode"],
        "seed": cfg["seed"],
        "out": out_dir,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def read_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as f:
        return json.load(f)
