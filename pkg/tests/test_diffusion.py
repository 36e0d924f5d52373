import math
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from xdlm_pipeline.diffusion.process import (
    DiffusionState, NoiseKind, forward_marginal, forward_sample, oracle_reverse_distribution,
    posterior, posterior_between, product_distribution, reverse_step, routing_sample,
    run_oracle_suite, total_variation,
)
from xdlm_pipeline.diffusion.schedule import NoiseSchedule, make_schedule, routing_probs
from xdlm_pipeline.exceptions import InconsistencyError, OracleScaleError, ShapeError

MASK = 3
ABSORBING = NoiseKind("absorbing", mask_id=MASK)
MULTINOMIAL = NoiseKind("multinomial", mask_id=MASK, support=(0, 1, 2))


def test_step_zero_keeps_x0():
    x0 = DiffusionState((0, 1, 2, 1), 0)
    assert forward_sample(x0, 0, make_schedule("cosine", 5), MULTINOMIAL, rng_seed=1).ids == x0.ids


def test_last_step_masks_everything():
    x0 = DiffusionState((0, 1, 2) * 5, 0)
    noised = forward_sample(x0, 6, make_schedule("linear_mask", 6), ABSORBING, rng_seed=2)
    assert set(noised.ids) == {MASK}


def test_masked_fraction_matches_alpha_bar():
    n = 100_000
    schedule = make_schedule("linear_mask", 2)
    noised = forward_sample(DiffusionState((0,) * n, 0), 1, schedule, ABSORBING, rng_seed=123)
    masked = sum(token == MASK for token in noised.ids)
    sigma = math.sqrt(n * 0.5 * 0.5)
    assert abs(masked - n * 0.5) < 3 * sigma


def test_eligible_plane_restricts_noise():
    x0 = DiffusionState((0, 1, 2, 0), 0)
    noised = forward_sample(x0, 4, make_schedule("linear_mask", 4), ABSORBING, rng_seed=0,
                            eligible=(False, True, False, True))
    assert noised.ids == (0, MASK, 2, MASK)
    with pytest.raises(ShapeError):
        forward_sample(x0, 1, make_schedule("linear_mask", 4), ABSORBING, rng_seed=0, eligible=(True,))


def test_forward_marginal_multinomial():
    schedule = make_schedule("linear_mask", 4)
    dist = forward_marginal(1, 3, schedule, MULTINOMIAL)
    assert dist[1] == pytest.approx(0.25 + 0.75 / 3)
    assert dist[0] == pytest.approx(0.25)
    assert sum(dist.values()) == pytest.approx(1.0)


def test_absorbing_posterior_example():
    dist = posterior(0, MASK, 2, make_schedule("linear_mask", 2), ABSORBING)
    assert dist[0] == pytest.approx(0.5)
    assert dist[MASK] == pytest.approx(0.5)


def test_unmasked_token_is_point_mass():
    assert posterior(2, 2, 3, make_schedule("cosine", 4), ABSORBING) == {2: 1.0}


def test_impossible_observation_rejected():
    with pytest.raises(InconsistencyError):
        posterior(0, 1, 1, make_schedule("linear_mask", 2), ABSORBING)


@given(x0=st.sampled_from([0, 1, 2]), xt=st.sampled_from([0, 1, 2]),
       t=st.integers(1, 5), kind=st.sampled_from(["linear_mask", "cosine"]))
def test_multinomial_posterior_normalized(x0, xt, t, kind):
    schedule = make_schedule(kind, 5)
    dist = posterior(x0, xt, t, schedule, MULTINOMIAL)
    assert sum(dist.values()) == pytest.approx(1.0)
    assert all(p >= 0 for p in dist.values())


def test_full_reveal_when_lambda2_is_one():
    schedule = make_schedule("linear_mask", 1)
    xt = DiffusionState((MASK, MASK, MASK), 1)
    out = reverse_step(xt, (0, 2, 1), schedule, routing_probs(schedule), ABSORBING, rng_seed=5)
    assert out.ids == (0, 2, 1)
    assert out.t == 0


def test_no_reveal_when_lambda2_is_zero():
    flat = NoiseSchedule("linear_mask", 2, (0.5, 1.0), (1.0, 0.5, 0.5))
    xt = DiffusionState((MASK, MASK, 1), 2)
    out = reverse_step(xt, (0, 2, 1), flat, None, ABSORBING, rng_seed=5)
    assert out.ids == (MASK, MASK, 1)


def test_topk_reveals_most_confident():
    schedule = make_schedule("linear_mask", 4)
    xt = DiffusionState((MASK,) * 4, 4, (True,) * 4)
    # lambda2 from 4 to 3 is 0.25: one of four noisy positions is revealed
    out = reverse_step(xt, (0, 1, 2, 0), schedule, None, ABSORBING, mode="topk",
                       scores=(-3.0, -0.1, -2.0, -1.0))
    assert out.ids == (MASK, 1, MASK, MASK)
    assert out.noisy == (True, False, True, True)


def test_topk_unmasked_set_grows():
    schedule = make_schedule("cosine", 6)
    state = DiffusionState((MASK,) * 5, 6, (True,) * 5)
    x0_hat = (0, 1, 2, 0, 1)
    revealed = set()
    for t in range(6, 0, -1):
        state = reverse_step(state, x0_hat, schedule, None, ABSORBING, mode="topk",
                             scores=(0.1, 0.5, 0.3, 0.2, 0.4), to_step=t - 1)
        now = {i for i, token in enumerate(state.ids) if token != MASK}
        assert revealed <= now
        revealed = now
    assert state.ids == x0_hat


def test_topk_needs_scores():
    schedule = make_schedule("linear_mask", 2)
    with pytest.raises(ShapeError):
        reverse_step(DiffusionState((MASK,), 2), (0,), schedule, None, ABSORBING, mode="topk")


def test_routing_sample_cases():
    xt = DiffusionState((0, MASK), 1)
    v = routing_sample(xt, (0, 1), lambda1=1.0, lambda2=0.0, rng_seed=3).v
    assert v == (True, False)


def test_oracle_matches_posterior_small():
    schedule = make_schedule("linear_mask", 3)
    x0 = DiffusionState((0, 1), 0)
    xt = DiffusionState((MASK, 1), 2)
    oracle = oracle_reverse_distribution(xt, x0, schedule, routing_probs(schedule), ABSORBING)
    exact = product_distribution([posterior(0, MASK, 2, schedule, ABSORBING),
                                  posterior(1, 1, 2, schedule, ABSORBING)])
    assert total_variation(oracle, exact) < 1e-12


def test_degenerate_single_step_returns_x0():
    schedule = make_schedule("cosine", 1)
    oracle = oracle_reverse_distribution(DiffusionState((MASK, MASK), 1), DiffusionState((2, 0), 0),
                                         schedule, routing_probs(schedule), ABSORBING)
    assert oracle == pytest.approx({(2, 0): 1.0})


def test_oracle_refuses_large_instances():
    big = NoiseKind("multinomial", mask_id=20, support=tuple(range(10)))
    schedule = make_schedule("linear_mask", 2)
    with pytest.raises(OracleScaleError):
        oracle_reverse_distribution(DiffusionState((0,), 1), DiffusionState((0,), 0), schedule, None, big)


def test_sampler_histogram_matches_oracle():
    schedule = make_schedule("linear_mask", 2)
    x0 = DiffusionState((0, 2), 0)
    xt = DiffusionState((1, 2), 2)
    exact = oracle_reverse_distribution(xt, x0, schedule, None, MULTINOMIAL)
    n = 20_000
    counts = Counter(reverse_step(xt, x0.ids, schedule, None, MULTINOMIAL, rng_seed=seed).ids
                     for seed in range(n))
    assert set(counts) <= set(exact)
    for outcome, p in exact.items():
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(counts[outcome] - n * p) <= 4 * sigma + 1


def test_jump_to_step_zero_recovers_x0():
    schedule = make_schedule("cosine", 4)
    assert posterior_between(1, 2, 4, 0, schedule, MULTINOMIAL) == {1: 1.0}
    coarse = posterior_between(1, 2, 4, 1, schedule, MULTINOMIAL)
    assert sum(coarse.values()) == pytest.approx(1.0)


def test_oracle_suite_reduced():
    n_checked, violations, worst = run_oracle_suite(max_vocab=4, max_length=2, max_T=3)
    assert n_checked > 0
    assert violations == []
    assert worst < 1e-9


@pytest.mark.slow
def test_oracle_suite_full():
    _, violations, worst = run_oracle_suite()
    assert violations == []
    assert worst < 1e-9
