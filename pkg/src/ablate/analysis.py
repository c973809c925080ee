"""Component importance, top-k recovery, regret and study reports."""

from __future__ import annotations

import json
import math
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from scipy import stats

from ablate.records import RunRecord


@dataclass(frozen=True)
class ImportanceEntry:
    component_id: str
    signed_effect: float
    importance: float
    critical: bool
    n_observations: int
    max_abs_effect: float


def component_effects(
    records: Iterable[RunRecord],
    baseline: float,
    tau_crit: float = 0.05,
    metric: str | None = None,
) -> list[ImportanceEntry]:
    """Mean signed effect (baseline - observed) per singly-ablated component.

    Only successful single-target records count. ``metric`` defaults to the
    score each record carries (the primary metric). Sorted by importance
    descending, ties by component id.
    """
    if not math.isfinite(baseline):
        raise ValueError("baseline must be finite")
    deltas: dict[str, list[float]] = defaultdict(list)
    for rec in records:
        if not rec.ok or len(rec.candidate.targets) != 1:
            continue
        value = rec.score if metric is None else rec.metrics.metrics.get(metric)
        if value is None:
            continue
        deltas[rec.candidate.targets[0]].append(baseline - value)
    threshold = tau_crit * abs(baseline)
    out = []
    for comp, ds in deltas.items():
        mean = math.fsum(ds) / len(ds)
        s = abs(mean)
        out.append(ImportanceEntry(comp, mean, s, s >= threshold, len(ds), max(abs(d) for d in ds)))
    out.sort(key=lambda e: (-e.importance, e.component_id))
    return out


def top_k(entries: Sequence[ImportanceEntry], k: int) -> list[str]:
    return [e.component_id for e in entries[:k]]


def ground_truth_top_k(importances: Mapping[str, float], k: int) -> list[str]:
    return [c for c, _ in sorted(importances.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def acc_at_k(pred: Sequence[str], ground_truth: Iterable[str], k: int) -> float:
    gt = set(ground_truth)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(gt):
        raise ValueError(f"k={k} exceeds ground truth size {len(gt)}")
    return len(set(pred[:k]) & gt) / k


def simple_regret(pred: Iterable[str], importances: Mapping[str, float], k: int) -> float:
    """Importance mass of the true top-k minus that of the predicted set."""
    pred = list(dict.fromkeys(pred))
    unknown = [c for c in pred if c not in importances]
    if unknown:
        raise KeyError(f"unknown components in prediction: {unknown}")
    if len(pred) > k:
        raise ValueError(f"prediction has {len(pred)} components, more than k={k}")
    best = math.fsum(sorted(importances.values(), reverse=True)[:k])
    return best - math.fsum(importances[c] for c in pred)


def task_success_rate(outcomes: Sequence[bool]) -> float | None:
    if not outcomes:
        return None
    return sum(1 for o in outcomes if o) / len(outcomes)


def end_to_end_tsr(*stage_rates: float) -> float:
    return math.prod(stage_rates)


@dataclass(frozen=True)
class RunStatistics:
    exec_rate: float | None
    tsr_reproduction: float | None
    tsr_ablation: float | None
    tsr: float | None


def run_statistics(
    records: Sequence[RunRecord],
    reproduction_ok: Sequence[bool] = (True,),
    ablation_ok: Sequence[bool] | None = None,
) -> RunStatistics:
    """Exec. rate over execution records plus stage and end-to-end TSR.

    Without explicit ablation outcomes the study counts as one ablation task
    that succeeded iff at least one candidate returned valid metrics.
    """
    exec_rate = task_success_rate([r.ok for r in records])
    if ablation_ok is None:
        ablation_ok = [any(r.ok for r in records)]
    rep = task_success_rate(reproduction_ok)
    abl = task_success_rate(ablation_ok)
    tsr = end_to_end_tsr(rep, abl) if rep is not None and abl is not None else None
    return RunStatistics(exec_rate, rep, abl, tsr)


def confidence_interval(mean: float, std: float, n: int, level: float = 0.95) -> tuple[float, float] | None:
    """Student-t interval for the mean with n-1 degrees of freedom."""
    if n < 2:
        return None
    half = stats.t.ppf(0.5 + level / 2, n - 1) * std / math.sqrt(n)
    return mean - half, mean + half


@dataclass(frozen=True)
class ArmSummary:
    arm_id: str
    pulls: int
    mean_reward: float | None
    std_reward: float | None
    ci_low: float | None
    ci_high: float | None
    prior_weight: float


def arm_summaries(rewards_by_arm: Mapping[str, Sequence[float]], weights: Mapping[str, float]) -> list[ArmSummary]:
    out = []
    for arm in sorted(set(weights) | set(rewards_by_arm)):
        rs = list(rewards_by_arm.get(arm, ()))
        mean = math.fsum(rs) / len(rs) if rs else None
        std = statistics.stdev(rs) if len(rs) > 1 else None
        ci = confidence_interval(mean, std, len(rs)) if std is not None else None
        out.append(
            ArmSummary(arm, len(rs), mean, std, ci[0] if ci else None, ci[1] if ci else None, weights.get(arm, 1.0))
        )
    return out


@dataclass
class StudyReport:
    baseline_score: float
    primary_metric: str
    seed: int
    policy: str
    budget: int
    lam: float
    tau_crit: float
    k: int
    executed: int
    rounds_run: int
    importance: list[ImportanceEntry]
    top_k_pred: list[str]
    exec_rate: float | None
    tsr: float | None
    tsr_reproduction: float | None
    tsr_ablation: float | None
    arms: list[ArmSummary]
    total_cost: float
    acc_at_k: float | None = None
    simple_regret: float | None = None
    ground_truth_top_k: list[str] | None = None
    dropped_candidates: int = 0
    provenance: str = "original"
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _round_sig(value: Any) -> Any:
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.6g}")
    if isinstance(value, dict):
        return {k: _round_sig(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_sig(v) for v in value]
    return value


def _g(value: float | None) -> str:
    return "-" if value is None else f"{value:.6g}"


def emit_report(report: StudyReport, fmt: str = "json") -> str:
    """Deterministic serialization; floats are cut to 6 significant digits."""
    if fmt == "json":
        return json.dumps(_round_sig(report.to_dict()), sort_keys=True, indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = [
        f"ablation study report ({report.provenance})",
        f"policy={report.policy} seed={report.seed} budget={report.budget} executed={report.executed} "
        f"rounds={report.rounds_run} dropped={report.dropped_candidates}",
        f"baseline {report.primary_metric} = {_g(report.baseline_score)}  lambda={_g(report.lam)}  "
        f"tau_crit={_g(report.tau_crit)}",
        f"exec rate = {_g(report.exec_rate)}  TSR = {_g(report.tsr)} "
        f"(reproduction {_g(report.tsr_reproduction)}, ablation {_g(report.tsr_ablation)})",
        f"total cost = {_g(report.total_cost)} GPU-h",
        "",
        f"{'component':<40} {'delta':>12} {'|delta|':>12} {'max|delta|':>12} {'n':>4}  critical",
    ]
    for e in sorted(report.importance, key=lambda e: (-e.importance, e.component_id)):
        lines.append(
            f"{e.component_id:<40} {_g(e.signed_effect):>12} {_g(e.importance):>12} "
            f"{_g(e.max_abs_effect):>12} {e.n_observations:>4}  {'yes' if e.critical else 'no'}"
        )
    lines += ["", f"top-{report.k} predicted: {', '.join(report.top_k_pred) or '-'}"]
    if report.ground_truth_top_k is not None:
        lines.append(f"top-{report.k} ground truth: {', '.join(report.ground_truth_top_k)}")
        lines.append(f"Acc@{report.k} = {_g(report.acc_at_k)}  simple regret = {_g(report.simple_regret)}")
    lines += ["", f"{'arm':<40} {'n':>4} {'mean':>10} {'95% CI':>24} {'weight':>8}"]
    for a in report.arms:
        ci = f"[{_g(a.ci_low)}, {_g(a.ci_high)}]" if a.ci_low is not None else "-"
        lines.append(f"{a.arm_id:<40} {a.pulls:>4} {_g(a.mean_reward):>10} {ci:>24} {_g(a.prior_weight):>8}")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"
