# diffusion/process.py
"""
Discrete diffusion over token ids: forward noising, the exact posterior,
the reparameterized reverse step and an exhaustive-enumeration oracle
"""
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from xdlm_pipeline.config.settings import Config
from xdlm_pipeline.diffusion.schedule import SCHEDULE_KINDS, make_schedule, routing_between
from xdlm_pipeline.exceptions import (
    ConfigurationError, InconsistencyError, OracleScaleError, ShapeError, StepError
)

NOISE_VARIANTS = ("absorbing", "multinomial")
REVERSE_MODES = ("stochastic", "topk")


@dataclass(frozen=True)
class NoiseKind:
    """q_noise: a point mass on mask_id (absorbing) or uniform over support (multinomial)."""
    variant: str
    mask_id: int
    support: tuple = ()

    def __post_init__(self):
        if self.variant not in NOISE_VARIANTS:
            raise ConfigurationError(f"Unknown noise kind {self.variant!r}, expected one of {NOISE_VARIANTS}")
        if self.variant == "absorbing":
            object.__setattr__(self, 'support', (self.mask_id,))
        elif not self.support or self.mask_id in self.support:
            raise ConfigurationError("Multinomial noise needs a non-empty support without the mask id")

    @classmethod
    def for_vocabulary(cls, variant, vocab):
        support = tuple(vocab.subword_ids) if variant == "multinomial" else ()
        return cls(variant, vocab.mask_id, support)

    @property
    def clean_mass(self):
        """q_noise probability of any clean (non-mask) token."""
        return 0.0 if self.variant == "absorbing" else 1.0 / len(self.support)

    def prob(self, token_id):
        if self.variant == "absorbing":
            return 1.0 if token_id == self.mask_id else 0.0
        return self.clean_mass if token_id in self._support_set else 0.0

    @property
    def _support_set(self):
        return frozenset(self.support)

    def sample(self, rng, size):
        if self.variant == "absorbing":
            return np.full(size, self.mask_id, dtype=np.int64)
        return rng.choice(np.asarray(self.support, dtype=np.int64), size=size)


@dataclass(frozen=True)
class DiffusionState:
    """
    Token ids at noise level t. `noisy` optionally tracks which positions
    have not been routed to x_0 yet (used by confidence-ordered decoding).
    """
    ids: tuple
    t: int
    noisy: tuple = None

    def __post_init__(self):
        object.__setattr__(self, 'ids', tuple(int(i) for i in self.ids))
        if self.noisy is not None:
            object.__setattr__(self, 'noisy', tuple(bool(flag) for flag in self.noisy))
            if len(self.noisy) != len(self.ids):
                raise ShapeError(f"noisy plane has {len(self.noisy)} entries for {len(self.ids)} ids")

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class RoutingSample:
    v: tuple


def _kernel_keep(schedule, t, s):
    """Probability that a token survives from step s to step t."""
    a_s = schedule.alpha_bar[s]
    return schedule.alpha_bar[t] / a_s if a_s > 0 else 1.0


def forward_marginal(x0_id, t, schedule, noise):
    """Closed-form q(x_t | x_0) for one position, as {token_id: probability}."""
    schedule.check_step(t)
    a_t = schedule.alpha_bar[t]
    dist = defaultdict(float)
    dist[x0_id] += a_t
    for token_id in noise.support:
        dist[token_id] += (1.0 - a_t) * noise.prob(token_id)
    return {k: p for k, p in dist.items() if p > 0}


def forward_sample(x0, t, schedule, noise, rng_seed, eligible=None):
    """
    Noise every position independently: keep x_0 with probability alpha_bar[t],
    otherwise draw from q_noise. Positions outside `eligible` stay clean.
    """
    schedule.check_step(t)
    ids = np.asarray(x0.ids, dtype=np.int64)
    rng = np.random.default_rng(rng_seed)
    keep = rng.random(len(ids)) < schedule.alpha_bar[t]
    draws = noise.sample(rng, len(ids))
    if eligible is not None:
        if len(eligible) != len(ids):
            raise ShapeError(f"eligible plane has {len(eligible)} entries for {len(ids)} ids")
        keep |= ~np.asarray(eligible, dtype=bool)
    return DiffusionState(tuple(np.where(keep, ids, draws).tolist()), t)


def posterior_between(x0_id, xt_id, t, s, schedule, noise):
    """Exact q(x_s | x_t, x_0) for s < t by Bayes' rule, as {token_id: probability}."""
    schedule.check_step(t, lowest=1)
    schedule.check_step(s)
    if s >= t:
        raise StepError(f"Posterior needs s < t, got s={s}, t={t}")
    keep = _kernel_keep(schedule, t, s)
    a_s = schedule.alpha_bar[s]

    unnormalized = {}
    for candidate in {x0_id, xt_id, *noise.support}:
        likelihood = keep * (candidate == xt_id) + (1.0 - keep) * noise.prob(xt_id)
        prior = a_s * (candidate == x0_id) + (1.0 - a_s) * noise.prob(candidate)
        if likelihood * prior > 0:
            unnormalized[candidate] = likelihood * prior
    evidence = sum(unnormalized.values())
    if evidence <= 0:
        raise InconsistencyError(
            f"x_t={xt_id} has zero probability given x_0={x0_id} at step {t}"
        )
    return {k: p / evidence for k, p in sorted(unnormalized.items())}


def posterior(x0_id, xt_id, t, schedule, noise):
    return posterior_between(x0_id, xt_id, t, t - 1, schedule, noise)


def _resolve_routing(schedule, routing, noise, t, s):
    if s == t - 1 and routing is not None:
        return routing.at(t)
    return routing_between(schedule, t, s, noise.clean_mass)


def reverse_step(xt, x0_hat, schedule, routing, noise, mode="stochastic", rng_seed=0,
                 scores=None, to_step=None):
    """
    One reparameterized reverse step from xt.t to `to_step` (default xt.t - 1).

    stochastic: per position draw v ~ Bernoulli(lambda1) where x_t == x0_hat
    (v keeps x_t, else q_noise) or v ~ Bernoulli(lambda2) where they differ
    (v jumps to x0_hat, else q_noise(x_t)).
    topk: noisy positions with the highest `scores` are routed to x0_hat,
    ceil(lambda2 * n_noisy) of them; everything else keeps x_t.
    """
    t = xt.t
    s = t - 1 if to_step is None else to_step
    schedule.check_step(t, lowest=1)
    if not 0 <= s < t:
        raise StepError(f"Reverse step from {t} needs a target in [0, {t}), got {s}")
    if len(x0_hat) != len(xt.ids):
        raise ShapeError(f"x0_hat has {len(x0_hat)} positions, x_t has {len(xt.ids)}")
    lambda1, lambda2 = _resolve_routing(schedule, routing, noise, t, s)
    ids = np.asarray(xt.ids, dtype=np.int64)
    x0_hat = np.asarray(x0_hat, dtype=np.int64)

    if mode == "stochastic":
        rng = np.random.default_rng(rng_seed)
        v_draw = rng.random(len(ids))
        keep_draw = rng.random(len(ids))
        noise_draw = noise.sample(rng, len(ids))
        matching = ids == x0_hat
        v = np.where(matching, v_draw < lambda1, v_draw < lambda2)
        noised_xt = np.where(keep_draw < _kernel_keep(schedule, t, s), ids, noise_draw)
        new_ids = np.where(
            matching,
            np.where(v, ids, noise_draw),
            np.where(v, x0_hat, noised_xt),
        )
        noisy = None if xt.noisy is None else tuple(
            flag and not (not m and routed) for flag, m, routed in zip(xt.noisy, matching, v)
        )
        return DiffusionState(tuple(new_ids.tolist()), s, noisy)

    if mode == "topk":
        if scores is None or len(scores) != len(ids):
            raise ShapeError("topk routing needs one confidence score per position")
        noisy = np.asarray(xt.noisy, dtype=bool) if xt.noisy is not None else ids != x0_hat
        noisy_positions = np.flatnonzero(noisy)
        n_reveal = math.ceil(lambda2 * len(noisy_positions) - 1e-9)
        order = noisy_positions[np.argsort(-np.asarray(scores, dtype=np.float64)[noisy_positions], kind='stable')]
        revealed = order[:n_reveal]
        new_ids = ids.copy()
        new_ids[revealed] = x0_hat[revealed]
        new_noisy = noisy.copy()
        new_noisy[revealed] = False
        return DiffusionState(tuple(new_ids.tolist()), s, tuple(new_noisy.tolist()))

    raise ConfigurationError(f"Unknown reverse mode {mode!r}, expected one of {REVERSE_MODES}")


def routing_sample(xt, x0_hat, lambda1, lambda2, rng_seed):
    """Draw the routing variables alone, one per position, by case."""
    rng = np.random.default_rng(rng_seed)
    draws = rng.random(len(xt.ids))
    return RoutingSample(tuple(
        bool(u < (lambda1 if a == b else lambda2)) for u, a, b in zip(draws, xt.ids, x0_hat)
    ))


def _position_branches(xt_id, x0_id, lambda1, lambda2, keep, noise):
    """All (probability, outcome) branches of the two-case sampler at one position."""
    if xt_id == x0_id:
        branches = [(lambda1, xt_id)]
        branches += [((1.0 - lambda1) * noise.prob(n), n) for n in noise.support]
    else:
        branches = [(lambda2, x0_id), ((1.0 - lambda2) * keep, xt_id)]
        branches += [((1.0 - lambda2) * (1.0 - keep) * noise.prob(n), n) for n in noise.support]
    return [(p, outcome) for p, outcome in branches if p > 0]


def oracle_reverse_distribution(xt, x0, schedule, routing, noise, to_step=None):
    """
    Exact successor distribution of the stochastic reverse step with x0 as
    the prediction, summing over every routing assignment and noise draw.
    """
    vocabulary = set(xt.ids) | set(x0.ids) | set(noise.support)
    if len(vocabulary) > Config.ORACLE_MAX_VOCAB or len(xt.ids) > Config.ORACLE_MAX_LENGTH:
        raise OracleScaleError(
            f"Oracle limited to vocabulary <= {Config.ORACLE_MAX_VOCAB} and length <= "
            f"{Config.ORACLE_MAX_LENGTH}, got {len(vocabulary)} and {len(xt.ids)}"
        )
    if len(xt.ids) != len(x0.ids):
        raise ShapeError(f"x_t has {len(xt.ids)} positions, x_0 has {len(x0.ids)}")
    t = xt.t
    s = t - 1 if to_step is None else to_step
    lambda1, lambda2 = _resolve_routing(schedule, routing, noise, t, s)
    keep = _kernel_keep(schedule, t, s)

    per_position = [
        _position_branches(a, b, lambda1, lambda2, keep, noise) for a, b in zip(xt.ids, x0.ids)
    ]
    dist = defaultdict(float)
    for combination in itertools.product(*per_position):
        probability = math.prod(p for p, _ in combination)
        dist[tuple(outcome for _, outcome in combination)] += probability
    return dict(dist)


def product_distribution(marginals):
    """Joint distribution of independent positions given per-position marginals."""
    dist = {}
    for combination in itertools.product(*(m.items() for m in marginals)):
        dist[tuple(k for k, _ in combination)] = math.prod(p for _, p in combination)
    return dist


def total_variation(p, q):
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def _canonical_sequences(length):
    """One representative per equality pattern (restricted growth strings)."""
    def grow(prefix, top):
        if len(prefix) == length:
            yield tuple(prefix)
            return
        for symbol in range(top + 2):
            yield from grow(prefix + [symbol], max(top, symbol))
    yield from grow([], -1)


def _oracle_noises(vocab_size):
    """Absorbing noise with vocab_size - 1 clean tokens, multinomial over vocab_size tokens."""
    absorbing = NoiseKind("absorbing", mask_id=vocab_size - 1)
    multinomial = NoiseKind("multinomial", mask_id=vocab_size, support=tuple(range(vocab_size)))
    return [(absorbing, list(range(vocab_size - 1))), (multinomial, list(range(vocab_size)))]


def run_oracle_suite(max_vocab=5, max_length=3, max_T=4, tolerance=1e-9):
    """
    Check the reverse step against the exact posterior on every enumerable
    instance, for single steps and coarse jumps t -> s. Also checks that
    forward noising to t followed by a reverse jump reproduces q(x_s | x_0).
    Returns (n_checked, violations, worst_tv).
    """
    n_checked, worst = 0, 0.0
    violations = []
    for noise, clean in _oracle_noises(max_vocab):
        for kind in SCHEDULE_KINDS:
            for T in range(1, max_T + 1):
                schedule = make_schedule(kind, T)
                for t in range(1, T + 1):
                    for s in range(t):
                        for length in range(1, max_length + 1):
                            for pattern in _canonical_sequences(length):
                                if max(pattern) >= len(clean):
                                    continue
                                x0 = DiffusionState(tuple(clean[i] for i in pattern), 0)
                                checked, tv, failures = _check_instance(x0, t, s, schedule, noise, tolerance)
                                n_checked += checked
                                worst = max(worst, tv)
                                violations.extend(
                                    {'noise': noise.variant, 'schedule': kind, 'T': T, **failure}
                                    for failure in failures
                                )
    logging.info(f"Oracle suite checked {n_checked} instances, worst TV {worst:.3e}, "
                 f"{len(violations)} violations")
    return n_checked, violations, worst


def _check_instance(x0, t, s, schedule, noise, tolerance):
    forward = product_distribution([forward_marginal(i, t, schedule, noise) for i in x0.ids])
    target = product_distribution([forward_marginal(i, s, schedule, noise) for i in x0.ids])
    mixture = defaultdict(float)
    failures = []
    n_checked, worst = 0, 0.0
    for xt_ids, weight in forward.items():
        xt = DiffusionState(xt_ids, t)
        oracle = oracle_reverse_distribution(xt, x0, schedule, None, noise, to_step=s)
        exact = product_distribution([
            posterior_between(a, b, t, s, schedule, noise) for a, b in zip(x0.ids, xt_ids)
        ])
        tv = total_variation(oracle, exact)
        worst = max(worst, tv)
        n_checked += 1
        if tv >= tolerance:
            failures.append({'check': 'posterior', 't': t, 's': s, 'x0': x0.ids, 'xt': xt_ids, 'tv': tv})
        for successor, p in oracle.items():
            mixture[successor] += weight * p
    tv = total_variation(dict(mixture), target)
    worst = max(worst, tv)
    if tv >= tolerance:
        failures.append({'check': 'marginal', 't': t, 's': s, 'x0': x0.ids, 'tv': tv})
    return n_checked + 1, worst, failures
