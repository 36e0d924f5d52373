# diffusion/schedule.py
"""
Noise schedules and the routing probabilities of the reparameterized sampler.

Keep-probabilities are named alpha throughout: alpha[t] is the chance a token
survives step t, alpha_bar[t] the chance it survives steps 1..t. The
reparameterized sampler's "beta_t" inside q_noise(x_t) is this per-step alpha.
"""
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from xdlm_pipeline.config.settings import Config
from xdlm_pipeline.exceptions import ConfigurationError, StepError

SCHEDULE_KINDS = ("linear_mask", "cosine")
ROUTING_TOLERANCE = 1e-9


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    T: int
    alpha: tuple       # alpha[t - 1] for t = 1..T
    alpha_bar: tuple   # alpha_bar[t] for t = 0..T

    def alpha_at(self, t):
        self.check_step(t, lowest=1)
        return self.alpha[t - 1]

    def alpha_bar_at(self, t):
        self.check_step(t)
        return self.alpha_bar[t]

    def check_step(self, t, lowest=0):
        if not lowest <= t <= self.T:
            raise StepError(f"Step {t} outside [{lowest}, {self.T}]")

    def descriptor(self):
        return f"{self.kind}:T={self.T}"

    @classmethod
    def from_descriptor(cls, descriptor):
        kind, _, steps = descriptor.partition(":T=")
        return make_schedule(kind, int(steps))


@dataclass(frozen=True)
class RoutingProbs:
    """lambda1[t - 1]: keep an already-denoised token; lambda2[t - 1]: jump a noisy token to x_0."""
    lambda1: tuple
    lambda2: tuple

    def at(self, t):
        return self.lambda1[t - 1], self.lambda2[t - 1]


def make_schedule(kind, T):
    if T < 1:
        raise ConfigurationError(f"Schedule needs T >= 1, got {T}")
    steps = np.arange(T + 1, dtype=np.float64) / T
    if kind == "linear_mask":
        alpha_bar = 1.0 - steps
    elif kind == "cosine":
        alpha_bar = np.cos(0.5 * math.pi * steps) ** 2
    else:
        raise ConfigurationError(f"Unknown schedule kind {kind!r}, expected one of {SCHEDULE_KINDS}")
    alpha_bar[0] = 1.0
    if alpha_bar[-1] > Config.EPS_FLOOR:
        raise ConfigurationError(f"{kind} schedule ends at {alpha_bar[-1]}, above the noise floor")
    alpha_bar[-1] = 0.0

    previous = alpha_bar[:-1]
    alpha = np.divide(alpha_bar[1:], previous, out=np.ones(T), where=previous > 0)
    return NoiseSchedule(kind, T, tuple(alpha.tolist()), tuple(alpha_bar.tolist()))


def routing_between(schedule, t, s, clean_mass=0.0):
    """
    Routing probabilities for a reverse jump from step t to step s < t.

    clean_mass is q_noise evaluated at a clean token: 0 for absorbing noise,
    1/K for uniform noise over K tokens. The returned (lambda1, lambda2) make
    the two-case sampler's marginal equal q(x_s | x_t, x_0).
    """
    schedule.check_step(t, lowest=1)
    schedule.check_step(s)
    if s >= t:
        raise StepError(f"Reverse jump needs s < t, got s={s}, t={t}")
    a_t, a_s = schedule.alpha_bar[t], schedule.alpha_bar[s]
    keep = a_t / a_s if a_s > 0 else 1.0

    lambda2 = (a_s - a_t) / (1.0 - a_t) if a_t < 1.0 else 0.0
    evidence = a_t + (1.0 - a_t) * clean_mass
    if evidence > 0:
        lambda1 = 1.0 - (1.0 - keep) * (1.0 - a_s) * clean_mass / evidence
    else:
        lambda1 = 1.0
    for name, value in (("lambda1", lambda1), ("lambda2", lambda2)):
        if not -ROUTING_TOLERANCE <= value <= 1.0 + ROUTING_TOLERANCE:
            raise StepError(f"{schedule.descriptor()} gives {name}={value} for the jump {t} -> {s}")
    return min(max(lambda1, 0.0), 1.0), min(max(lambda2, 0.0), 1.0)


def routing_probs(schedule, noise=None):
    """Per-step routing probabilities; noise=None means absorbing noise."""
    clean_mass = 0.0 if noise is None else noise.clean_mass
    pairs = [routing_between(schedule, t, t - 1, clean_mass) for t in range(1, schedule.T + 1)]
    return RoutingProbs(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


def schedule_table(schedule, routing):
    """(t, alpha, alpha_bar, lambda1, lambda2) rows for plotting."""
    return pd.DataFrame({
        't': list(range(1, schedule.T + 1)),
        'alpha': list(schedule.alpha),
        'alpha_bar': list(schedule.alpha_bar[1:]),
        'lambda1': list(routing.lambda1),
        'lambda2': list(routing.lambda2),
    })
