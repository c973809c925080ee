"""Seeded policy sweeps over a simulated environment."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

from ablate.config import POLICIES, StudyConfig
from ablate.orchestrator import run_study


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class PolicySummary:
    policy: str
    trials: int
    mean_acc_at_k: float | None
    mean_simple_regret: float | None
    mean_exec_rate: float | None
    mean_tsr: float | None
    mean_executed: float


def _mean(values: Sequence[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def sweep(
    config: StudyConfig, policies: Sequence[str] = POLICIES, trials: int = 100, first_seed: int | None = None
) -> list[PolicySummary]:
    """Run ``trials`` studies per policy with seeds first_seed .. first_seed+trials-1."""
    if trials < 1:
        raise SweepError("trials must be >= 1")
    if config.executor.kind != "simulated":
        raise SweepError("policy sweeps need a simulated executor")
    if config.ground_truth_importances() is None and config.ground_truth_top is None:
        raise SweepError("policy sweeps need ground truth")
    unknown = [p for p in policies if p not in POLICIES]
    if unknown:
        raise SweepError(f"unknown policies {unknown}; choose from {POLICIES}")
    start = config.seed if first_seed is None else first_seed
    out = []
    for policy in policies:
        reports = [
            run_study(config.with_overrides(policy=policy, seed=start + i)).report for i in range(trials)
        ]
        out.append(
            PolicySummary(
                policy=policy,
                trials=trials,
                mean_acc_at_k=_mean([r.acc_at_k for r in reports]),
                mean_simple_regret=_mean([r.simple_regret for r in reports]),
                mean_exec_rate=_mean([r.exec_rate for r in reports]),
                mean_tsr=_mean([r.tsr for r in reports]),
                mean_executed=math.fsum(r.executed for r in reports) / trials,
            )
        )
    return out


FIELDS = ("policy", "trials", "mean_acc_at_k", "mean_simple_regret", "mean_exec_rate", "mean_tsr", "mean_executed")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def to_csv(rows: Sequence[PolicySummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([_cell(getattr(r, f)) for f in FIELDS])
    return buf.getvalue()


def to_text(rows: Sequence[PolicySummary], k: int) -> str:
    lines = [f"{'policy':<10} {'trials':>6} {f'Acc@{k}':>8} {'regret':>10} {'exec':>6} {'TSR':>6}"]
    for r in rows:
        lines.append(
            f"{r.policy:<10} {r.trials:>6} {_cell(r.mean_acc_at_k) or '-':>8} "
            f"{_cell(r.mean_simple_regret) or '-':>10} {_cell(r.mean_exec_rate) or '-':>6} {_cell(r.mean_tsr) or '-':>6}"
        )
    return "\n".join(lines) + "\n"
