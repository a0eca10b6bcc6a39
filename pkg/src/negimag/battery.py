"""Seeded batteries of finite-energy, absolutely integrable probe inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .signal import Signal, rect_pulse, time_grid

__all__ = ["InputBattery", "DEFAULT_DT", "DEFAULT_HORIZON"]

DEFAULT_DT = 1e-3
DEFAULT_HORIZON = 40.0

# Every member must fall below this level before the horizon.
DECAY_LEVEL = 1e-6
PULSE_WIDTHS = (0.01, 0.05, 0.1, 0.25, 0.5)


@dataclass(frozen=True)
class InputBattery:
    """Deterministic family of probe inputs.

    Members are sums of ``K <= max_terms`` damped sinusoids
    ``a_k exp(-lam_k t) sin(w_k t + phi_k)`` with ``|a_k| <= 1``, and every
    ``pulse_every``-th member is a unit-area rectangular pulse.  Decay rates
    are floored so that the sum is below ``1e-6`` at the horizon.
    """

    seed: int = 0
    count: int = 50
    dt: float = DEFAULT_DT
    horizon: float = DEFAULT_HORIZON
    dim: int = 1
    max_terms: int = 5
    lam_range: tuple = (0.2, 2.0)
    omega_range: tuple = (0.05, 20.0)
    pulse_every: int = 5

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("a battery needs at least one member")
        if self.lam_floor > self.lam_range[1]:
            raise ValueError(
                f"horizon {self.horizon} is too short for members to decay below {DECAY_LEVEL}"
            )

    @property
    def lam_floor(self):
        need = math.log(self.max_terms / DECAY_LEVEL) / self.horizon
        return max(self.lam_range[0], need)

    @property
    def key(self):
        return (self.seed, self.count, self.dt, self.horizon, self.dim)

    def is_pulse(self, i):
        return self.pulse_every > 0 and i % self.pulse_every == self.pulse_every - 1

    @cached_property
    def signals(self):
        rng = np.random.default_rng(self.seed)
        t = time_grid(self.dt, self.horizon)
        members = []
        for i in range(self.count):
            if self.is_pulse(i):
                width = PULSE_WIDTHS[int(rng.integers(len(PULSE_WIDTHS)))]
                sign = rng.choice([-1.0, 1.0], size=self.dim)
                start = round(float(rng.uniform(0.0, 2.0)) / self.dt) * self.dt
                pulse = rect_pulse(self.dt, self.horizon, width=width, start=start)
                members.append(Signal(self.dt, pulse.samples[:, :1] * sign[None, :]))
                continue
            vals = np.zeros((t.size, self.dim))
            for j in range(self.dim):
                k = int(rng.integers(1, self.max_terms + 1))
                a = rng.uniform(-1.0, 1.0, k)
                lam = rng.uniform(self.lam_floor, self.lam_range[1], k)
                om = rng.uniform(*self.omega_range, k)
                ph = rng.uniform(0.0, 2 * math.pi, k)
                vals[:, j] = np.sum(
                    a[:, None] * np.exp(-lam[:, None] * t) * np.sin(om[:, None] * t + ph[:, None]),
                    axis=0,
                )
            members.append(Signal(self.dt, vals))
        return tuple(members)

    def smooth_indices(self):
        return [i for i in range(self.count) if not self.is_pulse(i)]

    def stacked(self, indices=None):
        idx = range(self.count) if indices is None else indices
        return np.stack([self.signals[i].samples for i in idx])

    def __iter__(self):
        return iter(self.signals)

    def __len__(self):
        return self.count

    def __getitem__(self, i):
        return self.signals[i]
