from __future__ import annotations

import math
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ablate.bandit import (
    BanditParams,
    BanditState,
    RewardInput,
    UnknownArmError,
    compute_reward,
    effective_beta,
    generation_budget,
    select_arm,
    ucb_score,
    update,
)


def state_at(round_index, max_rounds=5, beta=2.0):
    s = BanditState.create({"a": 1.0}, BanditParams(beta_base=beta, max_rounds=max_rounds))
    s.round = round_index
    return s


@pytest.mark.parametrize("round_index, expected", [(0, 3.0), (1, 3.0), (2, 2.0), (3, 2.0), (4, 1.0)])
def test_beta_schedule_for_five_rounds(round_index, expected):
    assert effective_beta(state_at(round_index)) == expected


def test_beta_phase_edges_are_exact():
    # R=10: rounds 0-2 explore, 3-6 base, 7-9 exploit
    assert [effective_beta(state_at(r, 10)) for r in range(10)] == [3.0] * 3 + [2.0] * 4 + [1.0] * 3


def test_beta_past_last_round_raises():
    with pytest.raises(ValueError):
        effective_beta(state_at(5))


def test_unexplored_arm_with_highest_weight_goes_first():
    s = BanditState.create({"a": 0.9, "b": 0.5})
    assert select_arm(s) == "a"
    tie = BanditState.create({"b": 1.0, "a": 1.0, "c": 1.0})
    assert select_arm(tie) == "a"


def test_ucb_prefers_less_pulled_arm_when_bonus_dominates():
    s = BanditState.create({"a": 1.0, "b": 1.0})
    update(s, "a", 0.5)
    update(s, "a", 0.5)
    update(s, "b", 0.4)
    # T=3, beta=3 in round 0: a = 0.5 + 3*sqrt(ln4/2), b = 0.4 + 3*sqrt(ln4/1)
    assert ucb_score(s.arms["a"], 3, 3.0) == pytest.approx(0.5 + 3 * math.sqrt(math.log(4) / 2))
    assert select_arm(s) == "b"


def test_select_arm_respects_exclusions_and_ties():
    s = BanditState.create({"a": 1.0, "b": 1.0})
    for arm in "ab":
        update(s, arm, 1.0)
    assert select_arm(s) == "a"
    assert select_arm(s, exclude=["a"]) == "b"
    with pytest.raises(ValueError):
        select_arm(s, exclude=["a", "b"])


def test_generation_budget_tiers():
    s = BanditState.create({"a": 1.0}, BanditParams(k_explore=5, k_base=3, k_exploit=2))
    seen = []
    for _ in range(12):
        seen.append(generation_budget(s, "a"))
        update(s, "a", 0.1)
    assert seen == [5, 5, 5] + [3] * 8 + [2]
    with pytest.raises(UnknownArmError):
        generation_budget(s, "zzz")


def test_reward_subtracts_cost_penalty():
    assert compute_reward(RewardInput(1.0, 0.7, 2.0), 0.01) == pytest.approx(0.28)
    assert compute_reward(RewardInput(0.0, 0.001, 5.0), 0.01) < 0
    with pytest.raises(ValueError):
        compute_reward(RewardInput(1.0, math.nan, 0.0), 0.01)
    with pytest.raises(ValueError):
        compute_reward(RewardInput(1.0, 0.5, -1.0), 0.01)


def test_update_unknown_arm_leaves_state_untouched():
    s = BanditState.create({"a": 1.0})
    with pytest.raises(UnknownArmError):
        update(s, "b", 1.0)
    assert s.total_trials == 0 and s.arms["a"].pulls == 0


def test_params_problems():
    assert BanditParams().problems() == []
    assert len(BanditParams(beta_base=0, max_rounds=0, k_base=0, lam=-1).problems()) == 4


finite = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcd"), finite), max_size=60))
def test_update_bookkeeping(pulls):
    s = BanditState.create({a: 1.0 for a in "abcd"})
    for arm, r in pulls:
        update(s, arm, r)
    assert s.total_trials == sum(a.pulls for a in s.arms.values()) == len(pulls)
    for arm, stats in s.arms.items():
        rewards = [r for a, r in pulls if a == arm]
        if rewards:
            assert stats.mean_reward == pytest.approx(statistics.fmean(rewards), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abc"), st.floats(0, 10)), min_size=3, max_size=30))
def test_selection_is_a_function_of_the_reward_sequence(pulls):
    def trace():
        s = BanditState.create({"a": 0.3, "b": 0.6, "c": 0.6}, BanditParams(max_rounds=100))
        out = []
        for i, (arm, r) in enumerate(pulls):
            s.round = min(i, 99)
            out.append(select_arm(s))
            update(s, arm, r)
        return out

    assert trace() == trace()


@given(st.integers(1, 50), st.floats(0.1, 10))
def test_beta_non_increasing(max_rounds, beta):
    values = [effective_beta(state_at(r, max_rounds, beta)) for r in range(max_rounds)]
    assert all(x >= y for x, y in zip(values, values[1:]))
    assert set(values) <= {1.5 * beta, beta, 0.5 * beta}


def test_exploration_bonus_strictly_decreasing_in_pulls():
    bonus = [2.0 * math.sqrt(math.log(1001) / n) for n in range(1, 1001)]
    assert all(x > y for x, y in zip(bonus, bonus[1:]))


@settings(max_examples=100)
@given(st.dictionaries(st.sampled_from("abcdef"), st.floats(0, 10), min_size=1), st.floats(0.01, 100))
def test_weight_scaling_keeps_unexplored_choice(weights, c):
    plain = BanditState.create(weights)
    scaled = BanditState.create({a: w * c for a, w in weights.items()})
    best = max(weights.values())
    if sum(1 for w in weights.values() if w * c == best * c) == sum(1 for w in weights.values() if w == best):
        assert select_arm(plain) == select_arm(scaled)


@given(finite, finite)
def test_zero_cost_reward_is_absolute_effect(base, obs):
    assert compute_reward(RewardInput(base, obs, 0.0), 0.01) == abs(base - obs)
