"""Clamped linear schedules for the three training parameters.

All three share one scale: value(t) = initial + t * (final - initial) / scale,
clamped to [min(initial, final), max(initial, final)].  Counts are rounded
half away from zero since the linear form yields reals.
"""

from dataclasses import dataclass

import math


@dataclass(frozen=True)
class ScheduleConfig:
    alpha_i: float = 0.05   # real-data share of each batch
    alpha_f: float = 0.95
    ta_i: int = 15          # agent updates per environment step
    ta_f: int = 20
    r_i: int = 1            # rollout horizon
    r_f: int = 7
    scale: float = 15000.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")


def _round_half_away(x):
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def _clamped_linear(t, initial, final, scale):
    v = initial + t * (final - initial) / scale
    return min(max(v, min(initial, final)), max(initial, final))


class Schedule:
    """Time-varying training parameters; t is the environment-step counter."""

    def __init__(self, cfg: ScheduleConfig = ScheduleConfig()):
        self.cfg = cfg

    def alpha(self, t):
        return _clamped_linear(t, self.cfg.alpha_i, self.cfg.alpha_f, self.cfg.scale)

    def t_a(self, t):
        return _round_half_away(_clamped_linear(t, self.cfg.ta_i, self.cfg.ta_f, self.cfg.scale))

    def r(self, t):
        return _round_half_away(_clamped_linear(t, self.cfg.r_i, self.cfg.r_f, self.cfg.scale))


class FixedSchedule:
    """Constant schedule used by the fixed-parameter baseline."""

    def __init__(self, alpha=0.05, t_a=20, r=10):
        self._alpha = alpha
        self._t_a = t_a
        self._r = r

    def alpha(self, t):
        return self._alpha

    def t_a(self, t):
        return self._t_a

    def r(self, t):
        return self._r


def fixed_mode():
    """Constants of the fixed-parameter baseline: alpha 0.05, 20 updates, 10 rollouts."""
    return FixedSchedule(alpha=0.05, t_a=20, r=10)
