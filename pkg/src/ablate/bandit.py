"""Dynamic-UCB arm selection over hypothesis families."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Iterable


class UnknownArmError(KeyError):
    pass


@dataclass
class ArmStats:
    arm_id: str
    prior_weight: float = 1.0
    pulls: int = 0
    sum_reward: float = 0.0
    mean_reward: float = 0.0
    rewards: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "arm_id": self.arm_id,
            "prior_weight": self.prior_weight,
            "pulls": self.pulls,
            "sum_reward": self.sum_reward,
            "mean_reward": self.mean_reward if self.pulls else None,
        }


@dataclass(frozen=True)
class BanditParams:
    beta_base: float = 2.0
    max_rounds: int = 5
    k_explore: int = 5
    k_base: int = 3
    k_exploit: int = 2
    lam: float = 0.01

    def problems(self) -> list[str]:
        out = []
        if not (math.isfinite(self.beta_base) and self.beta_base > 0):
            out.append("beta_base must be positive")
        if self.max_rounds < 1:
            out.append("max_rounds must be >= 1")
        for name in ("k_explore", "k_base", "k_exploit"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            out.append("lambda must be non-negative")
        return out

    def to_dict(self) -> dict:
        return {
            "beta_base": self.beta_base,
            "max_rounds": self.max_rounds,
            "k_explore": self.k_explore,
            "k_base": self.k_base,
            "k_exploit": self.k_exploit,
            "lambda": self.lam,
        }


@dataclass
class BanditState:
    arms: dict[str, ArmStats]
    params: BanditParams = field(default_factory=BanditParams)
    total_trials: int = 0
    round: int = 0

    @classmethod
    def create(cls, weights: dict[str, float], params: BanditParams | None = None) -> "BanditState":
        arms = {a: ArmStats(a, prior_weight=float(w)) for a, w in sorted(weights.items())}
        return cls(arms=arms, params=params or BanditParams())

    def snapshot(self) -> "BanditState":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            "total_trials": self.total_trials,
            "round": self.round,
            "arms": {a: s.to_dict() for a, s in sorted(self.arms.items())},
        }


@dataclass(frozen=True)
class RewardInput:
    baseline_score: float
    observed_score: float
    cost: float = 0.0


def effective_beta(state: BanditState) -> float:
    """Exploration coefficient for the current round.

    Phase boundaries are compared on integers (10*round vs 3*R, 7*R) so
    there is no float rounding at the edges.
    """
    p = state.params
    if state.round >= p.max_rounds:
        raise ValueError(f"round {state.round} is past max_rounds {p.max_rounds}")
    if 10 * state.round < 3 * p.max_rounds:
        return 1.5 * p.beta_base
    if 10 * state.round >= 7 * p.max_rounds:
        return 0.5 * p.beta_base
    return p.beta_base


def ucb_score(stats: ArmStats, total_trials: int, beta: float) -> float:
    return stats.mean_reward + beta * math.sqrt(math.log(total_trials + 1) / stats.pulls)


def select_arm(state: BanditState, exclude: Iterable[str] = ()) -> str:
    """Pick the next arm: heaviest unexplored arm, else the UCB argmax.

    Ties go to the lexicographically smallest arm id.
    """
    excluded = set(exclude)
    candidates = [s for a, s in sorted(state.arms.items()) if a not in excluded]
    if not candidates:
        raise ValueError("no arms available for selection")
    unexplored = [s for s in candidates if s.pulls == 0]
    if unexplored:
        best = unexplored[0]
        for s in unexplored[1:]:
            if s.prior_weight > best.prior_weight:
                best = s
        return best.arm_id
    beta = effective_beta(state)
    best, best_score = candidates[0], ucb_score(candidates[0], state.total_trials, beta)
    for s in candidates[1:]:
        score = ucb_score(s, state.total_trials, beta)
        if score > best_score:
            best, best_score = s, score
    return best.arm_id


def generation_budget(state: BanditState, arm: str) -> int:
    if arm not in state.arms:
        raise UnknownArmError(arm)
    n = state.arms[arm].pulls
    p = state.params
    if n < 3:
        return p.k_explore
    if n > 10:
        return p.k_exploit
    return p.k_base


def compute_reward(reward_input: RewardInput, lam: float) -> float:
    """|baseline - observed| minus the cost penalty. May be negative."""
    values = (reward_input.baseline_score, reward_input.observed_score, reward_input.cost, lam)
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"non-finite reward input: {values}")
    if reward_input.cost < 0:
        raise ValueError("cost must be non-negative")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return abs(reward_input.baseline_score - reward_input.observed_score) - lam * reward_input.cost


def update(state: BanditState, arm: str, reward: float) -> BanditState:
    if arm not in state.arms:
        raise UnknownArmError(arm)
    if not math.isfinite(reward):
        raise ValueError(f"non-finite reward {reward!r}")
    stats = state.arms[arm]
    stats.pulls += 1
    stats.rewards.append(reward)
    stats.sum_reward = math.fsum(stats.rewards)
    stats.mean_reward = stats.sum_reward / stats.pulls
    state.total_trials += 1
    return state
