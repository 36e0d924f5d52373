import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xdlm_pipeline.diffusion.process import NoiseKind
from xdlm_pipeline.diffusion.schedule import (
    NoiseSchedule, make_schedule, routing_between, routing_probs, schedule_table,
)
from xdlm_pipeline.exceptions import ConfigurationError, StepError


def test_linear_symmetric_points():
    schedule = make_schedule("linear_mask", 10)
    assert schedule.alpha_bar_at(0) == 1.0
    assert schedule.alpha_bar_at(10) == 0.0
    assert schedule.alpha_bar_at(5) == pytest.approx(0.5)


def test_cosine_midpoint():
    schedule = make_schedule("cosine", 4)
    assert schedule.alpha_bar_at(2) == pytest.approx(math.cos(math.pi / 4) ** 2)
    assert schedule.alpha_bar_at(4) == 0.0


@pytest.mark.parametrize("kind", ["linear_mask", "cosine"])
def test_alpha_bar_strictly_decreasing(kind):
    alpha_bar = np.array(make_schedule(kind, 20).alpha_bar)
    assert np.all(np.diff(alpha_bar) < 0)


def test_per_step_alphas_multiply_to_alpha_bar():
    schedule = make_schedule("cosine", 6)
    for t in range(1, 6):
        assert math.prod(schedule.alpha[:t]) == pytest.approx(schedule.alpha_bar[t])


def test_bad_schedules_rejected():
    with pytest.raises(ConfigurationError):
        make_schedule("sqrt", 10)
    with pytest.raises(ConfigurationError):
        make_schedule("linear_mask", 0)


def test_step_range_checked():
    schedule = make_schedule("linear_mask", 3)
    with pytest.raises(StepError):
        schedule.alpha_bar_at(4)
    with pytest.raises(StepError):
        schedule.alpha_at(0)


def test_descriptor_round_trip():
    schedule = make_schedule("cosine", 7)
    assert schedule.descriptor() == "cosine:T=7"
    assert NoiseSchedule.from_descriptor(schedule.descriptor()) == schedule


def test_absorbing_two_step_example():
    routing = routing_probs(make_schedule("linear_mask", 2))
    assert routing.at(2)[1] == pytest.approx(0.5)
    assert routing.at(1)[1] == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["linear_mask", "cosine"])
def test_absorbing_revealed_tokens_stay(kind):
    routing = routing_probs(make_schedule(kind, 12))
    assert all(value == 1.0 for value in routing.lambda1)


def test_multinomial_can_renoise_matching_tokens():
    schedule = make_schedule("linear_mask", 4)
    noise = NoiseKind("multinomial", mask_id=3, support=(0, 1, 2))
    lambda1, _ = routing_probs(schedule, noise).at(3)
    assert 0.0 < lambda1 < 1.0


def test_flat_step_moves_no_mass():
    flat = NoiseSchedule("linear_mask", 2, (0.5, 1.0), (1.0, 0.5, 0.5))
    assert routing_between(flat, 2, 1)[1] == 0.0


def test_final_jump_reveals_everything():
    schedule = make_schedule("cosine", 9)
    for t in range(1, 10):
        assert routing_between(schedule, t, 0)[1] == pytest.approx(1.0)


def test_jump_must_go_backwards():
    schedule = make_schedule("linear_mask", 5)
    with pytest.raises(StepError):
        routing_between(schedule, 2, 2)


def test_schedule_table_rows():
    schedule = make_schedule("linear_mask", 5)
    table = schedule_table(schedule, routing_probs(schedule))
    assert list(table.columns) == ["t", "alpha", "alpha_bar", "lambda1", "lambda2"]
    assert len(table) == 5
    assert table["alpha_bar"].iloc[-1] == 0.0


NOISES = [None, NoiseKind("multinomial", mask_id=3, support=(0, 1, 2)),
          NoiseKind("multinomial", mask_id=0, support=tuple(range(1, 32001)))]


@settings(max_examples=40, deadline=None)
@given(T=st.sampled_from([1, 2, 50, 1000]), kind=st.sampled_from(["linear_mask", "cosine"]),
       noise=st.sampled_from(NOISES), data=st.data())
def test_routing_probabilities_stay_in_unit_interval(T, kind, noise, data):
    schedule = make_schedule(kind, T)
    routing = routing_probs(schedule, noise)
    assert all(0.0 <= p <= 1.0 for p in routing.lambda1 + routing.lambda2)
    t = data.draw(st.integers(1, T))
    s = data.draw(st.integers(0, t - 1))
    clean_mass = 0.0 if noise is None else noise.clean_mass
    lambda1, lambda2 = routing_between(schedule, t, s, clean_mass)
    assert 0.0 <= lambda1 <= 1.0
    assert 0.0 <= lambda2 <= 1.0


def test_increasing_schedule_rejected():
    rising = NoiseSchedule("linear_mask", 2, (0.2, 2.5), (1.0, 0.2, 0.5))
    with pytest.raises(StepError, match="lambda2"):
        routing_between(rising, 2, 1)
