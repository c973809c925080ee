from __future__ import annotations

from dataclasses import dataclass

from ablate.executor import MetricsRecord
from ablate.space import CandidateSpec


@dataclass
class RunRecord:
    """One executed (or attempted) candidate. ``reward`` is None on failure."""

    candidate: CandidateSpec
    round: int
    metrics: MetricsRecord
    reward: float | None = None
    score: float | None = None
    cost: float = 0.0
    workspace_id: str | None = None
    simulated: bool = False
    started_at: float = 0.0
    ended_at: float = 0.0

    @property
    def ok(self) -> bool:
        return self.metrics.ok

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate.to_dict(),
            "round": self.round,
            "metrics": self.metrics.to_dict(),
            "reward": self.reward,
            "score": self.score,
            "cost": self.cost,
            "workspace_id": self.workspace_id,
            "simulated": self.simulated,
        }
