"""Study driver: rounds of arm selection, generation, execution and update.

Every study writes an append-only ``events.log`` (one JSON object per line,
contiguous ``seq`` numbers). Keys holding wall-clock data (``ts``,
``start_ts``, ``end_ts``, ``wall_seconds``) are the only fields allowed to
differ between two runs of the same config and seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

from ablate import analysis
from ablate.bandit import (
    BanditState,
    RewardInput,
    compute_reward,
    effective_beta,
    generation_budget,
    select_arm,
    update,
)
from ablate.config import StudyConfig, config_from_dict
from ablate.executor import (
    FailureCategory,
    MetricsRecord,
    execute_shell,
    execute_simulated,
)
from ablate.graph import NodeKind, build_round_graph, schedule
from ablate.knowledge import derive_arm_weights, retrieve
from ablate.records import RunRecord
from ablate.space import CandidateSpec, enumerate_candidates, validate_space
from ablate.workspace import PatchError, WorkspaceError, WorkspaceManager, render_patch

log = logging.getLogger(__name__)

TIME_KEYS = frozenset({"ts", "start_ts", "end_ts", "wall_seconds"})


class StudyError(RuntimeError):
    pass


class ReplayError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# event log


class EventLog:
    def __init__(self, path: Path | None = None):
        self.events: list[dict] = []
        self.path = path
        self._fh = open(path, "w") if path is not None else None

    def emit(self, type_: str, **fields: Any) -> dict:
        event = {"seq": len(self.events), "type": type_, **fields}
        self.events.append(event)
        if self._fh is not None:
            self._fh.write(json.dumps(event, sort_keys=True) + "\n")
            self._fh.flush()
        return event

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def strip_times(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: strip_times(v) for k, v in value.items() if k not in TIME_KEYS}
    if isinstance(value, list):
        return [strip_times(v) for v in value]
    return value


def events_digest(events: Iterable[dict]) -> str:
    """sha256 over the events with every wall-clock field removed."""
    h = hashlib.sha256()
    for ev in events:
        h.update(json.dumps(strip_times(ev), sort_keys=True).encode())
        h.update(b"\n")
    return h.hexdigest()


def read_events(path: Path | str) -> list[dict]:
    events = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            events.append(json.loads(line))
        except ValueError as exc:
            raise ReplayError(f"corrupt event on line {lineno}: {exc}") from exc
    return events


def check_integrity(events: Sequence[dict]) -> None:
    if not events:
        raise ReplayError("event log is empty")
    for expected, ev in enumerate(events):
        if ev.get("seq") != expected:
            raise ReplayError(f"event log gap: expected seq {expected}, found {ev.get('seq')}")
    if events[0].get("type") != "study_start":
        raise ReplayError("event log does not begin with study_start")
    if events[-1].get("type") != "study_end":
        raise ReplayError(f"event log is truncated after seq {events[-1]['seq']}")


# --------------------------------------------------------------------------
# candidate generation


def generate_candidates(
    pool: Sequence[CandidateSpec], arm: str, k: int, memory: Iterable[str] = ()
) -> list[CandidateSpec]:
    """Up to ``k`` never-run candidates of ``arm``.

    Candidates are grouped by mutation-kind signature; groups are visited
    round-robin (ordered by their cheapest member) and each group yields its
    cheapest remaining candidate, ties broken by candidate id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    seen = set(memory)
    fresh = sorted(
        (c for c in pool if c.arm_id == arm and c.candidate_id not in seen),
        key=lambda c: (c.estimated_cost, c.candidate_id),
    )
    groups: dict[tuple[str, ...], list[CandidateSpec]] = {}
    for c in fresh:
        groups.setdefault(c.kind_signature, []).append(c)
    queues = list(groups.values())
    out: list[CandidateSpec] = []
    while len(out) < k and any(queues):
        for q in queues:
            if q and len(out) < k:
                out.append(q.pop(0))
    return out


def heuristic_order(state: BanditState) -> list[str]:
    """Fixed priority: heaviest prior weight first, then arm id."""
    return sorted(state.arms, key=lambda a: (-state.arms[a].prior_weight, a))


def choose_arm(
    policy: str, state: BanditState, excluded: Sequence[str], rng: random.Random
) -> str:
    available = [a for a in sorted(state.arms) if a not in excluded]
    if not available:
        raise ValueError("no arms left")
    if policy == "ucb":
        return select_arm(state, exclude=excluded)
    if policy == "random":
        return rng.choice(available)
    if policy == "heuristic":
        order = heuristic_order(state)
        start = state.round % len(order)
        for arm in order[start:] + order[:start]:
            if arm not in excluded:
                return arm
    raise ValueError(f"unknown policy {policy!r}")


# --------------------------------------------------------------------------
# runners


class CandidateRunner(Protocol):
    simulated: bool

    def run(self, candidate: CandidateSpec) -> tuple[MetricsRecord, str | None]: ...

    def measure_baseline(self) -> MetricsRecord: ...


class SimulatedRunner:
    simulated = True

    def __init__(self, config: StudyConfig, baseline: float):
        self.config = config
        self.baseline = baseline

    def run(self, candidate: CandidateSpec) -> tuple[MetricsRecord, str | None]:
        ex = self.config.executor
        record = execute_simulated(
            candidate,
            ex.env,
            self.config.seed,
            baseline_score=self.baseline,
            primary_metric=self.config.space.primary_metric,
            failure_mix=ex.failure_mix,
        )
        return record, None

    def measure_baseline(self) -> MetricsRecord:
        return MetricsRecord(metrics={self.config.space.primary_metric: self.baseline})


class ShellRunner:
    """Runs each candidate in its own workspace copied from one base snapshot."""

    simulated = False

    def __init__(self, config: StudyConfig, store_root: Path, run_dir: Path):
        self.config = config
        self.run_dir = run_dir
        self.manager = WorkspaceManager(store_root, workspace_root=Path(run_dir) / "workspaces")
        self.snapshot = self.manager.snapshot(config.executor.base_dir)

    def _execute(self, candidate: CandidateSpec | None) -> tuple[MetricsRecord, str | None]:
        ex = self.config.executor
        ws = self.manager.create_workspace(self.snapshot, candidate)
        try:
            patch = render_patch(self.config.space, candidate) if candidate is not None else []
            try:
                self.manager.apply_mutation(ws, patch)
            except PatchError as exc:
                return MetricsRecord.failed(FailureCategory.MAPPING, str(exc)), ws.workspace_id
            record = execute_shell(
                candidate,
                ws,
                ex.command,
                timeout_seconds=ex.timeout_seconds,
                seed=self.config.seed,
                primary_metric=self.config.space.primary_metric,
            )
            bundle = self.manager.harvest(ws, self.run_dir, ex.artifacts)
            if bundle.warnings and record.ok:
                record.message = "; ".join(bundle.warnings)
            return record, ws.workspace_id
        finally:
            try:
                self.manager.destroy(ws)
            except WorkspaceError as exc:
                log.error("%s", exc)

    def run(self, candidate: CandidateSpec) -> tuple[MetricsRecord, str | None]:
        return self._execute(candidate)

    def measure_baseline(self) -> MetricsRecord:
        return self._execute(None)[0]


# --------------------------------------------------------------------------
# study


@dataclass
class StudyResult:
    records: list[RunRecord]
    report: analysis.StudyReport
    events: list[dict]
    state: BanditState
    run_dir: Path | None = None


def reward_cost(config: StudyConfig, candidate: CandidateSpec, metrics: MetricsRecord) -> float:
    if config.executor.cost_source == "observed":
        if metrics.cost_gpu_hours is not None:
            return metrics.cost_gpu_hours
        return metrics.wall_seconds / 3600.0
    return candidate.estimated_cost


def _make_record(
    config: StudyConfig, baseline: float, candidate: CandidateSpec, round_index: int, metrics: MetricsRecord,
    workspace_id: str | None, simulated: bool, start: float = 0.0, end: float = 0.0,
) -> RunRecord:
    cost = reward_cost(config, candidate, metrics)
    score = reward = None
    if metrics.ok:
        score = metrics.metrics[config.space.primary_metric]
        reward = compute_reward(RewardInput(baseline, score, cost), config.bandit.lam)
    return RunRecord(candidate, round_index, metrics, reward, score, cost, workspace_id, simulated, start, end)


def _initial_state(config: StudyConfig) -> BanditState:
    if config.knowledge.entries:
        weights = derive_arm_weights(config.knowledge, config.space)
    else:
        weights = {a: config.space.weight(a) for a in config.space.arms}
    return BanditState.create(weights, config.bandit)


def _knowledge_for(config: StudyConfig, arm: str) -> list[str]:
    if not config.knowledge.entries:
        return []
    comps = config.space.components_of(arm)
    query = " ".join(f"{c.name} {c.description}" for c in comps)
    return [e.entry_id for e, _ in retrieve(query, config.knowledge, config.k_ret)]


def _unique_run_dir(out_dir: Path, run_id: str) -> Path:
    runs = out_dir / "runs"
    candidate = runs / run_id
    n = 2
    while candidate.exists():
        candidate = runs / f"{run_id}-{n}"
        n += 1
    candidate.mkdir(parents=True)
    return candidate


def run_study(
    config: StudyConfig,
    out_dir: Path | str | None = None,
    *,
    runner: CandidateRunner | None = None,
    run_id: str | None = None,
) -> StudyResult:
    """Run the adaptive ablation loop for up to R rounds and B executions."""
    problems = validate_space(config.space) + config.bandit.problems()
    if config.budget < 1:
        problems.append("budget must be >= 1")
    if config.max_parallel < 1:
        problems.append("max_parallel must be >= 1")
    if problems:
        raise StudyError("invalid study config: " + "; ".join(problems))

    run_dir = None
    tmp = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        run_dir = _unique_run_dir(out_dir, run_id or f"{config.name}-{config.digest()[:8]}-s{config.seed}")
    events = EventLog(run_dir / "events.log" if run_dir else None)
    try:
        if runner is None:
            if config.executor.kind == "shell":
                if run_dir is None:
                    tmp = tempfile.TemporaryDirectory(prefix="ablate-")
                    store, archive = Path(tmp.name), Path(tmp.name) / "run"
                    archive.mkdir()
                else:
                    store, archive = out_dir, run_dir
                runner = ShellRunner(config, store, archive)
            else:
                runner = SimulatedRunner(config, config.space.baseline_score or 0.0)

        baseline_metrics: dict[str, float] = {}
        if config.space.baseline_score is not None or runner.simulated:
            baseline, baseline_source, reproduction_ok = config.space.baseline_score or 0.0, "declared", True
            baseline_metrics = {config.space.primary_metric: baseline}
        else:
            measured = runner.measure_baseline()
            reproduction_ok = measured.ok
            baseline_source = "measured"
            if not measured.ok:
                events.emit("study_start", config=config.to_dict(), baseline=None, baseline_source="measured",
                            baseline_metrics={}, reproduction_ok=False, ts=time.time())
                events.emit("study_end", executed=0, rounds=0, dropped=0, aborted=measured.message, ts=time.time())
                raise StudyError(f"baseline run failed: {measured.message}")
            baseline_metrics = dict(measured.metrics)
            baseline = baseline_metrics[config.space.primary_metric]
        if isinstance(runner, SimulatedRunner):
            runner.baseline = baseline

        events.emit(
            "study_start",
            config=config.to_dict(),
            baseline=baseline,
            baseline_source=baseline_source,
            baseline_metrics=dict(sorted(baseline_metrics.items())),
            reproduction_ok=reproduction_ok,
            ts=time.time(),
        )
        pool = enumerate_candidates(config.space, config.max_targets)
        state = _initial_state(config)
        rng = random.Random(f"policy:{config.policy}:{config.seed}")
        memory: set[str] = set()
        records: list[RunRecord] = []
        dropped_total = 0
        with ThreadPoolExecutor(max_workers=config.max_parallel) as pool_exec:
            while state.round < config.bandit.max_rounds and len(records) < config.budget:
                beta = effective_beta(state)
                excluded: list[str] = []
                arm = None
                cands: list[CandidateSpec] = []
                k = 0
                while len(excluded) < len(state.arms):
                    arm = choose_arm(config.policy, state, excluded, rng)
                    k = generation_budget(state, arm)
                    cands = generate_candidates(pool, arm, k, memory)
                    if cands:
                        break
                    excluded.append(arm)
                if not cands:
                    events.emit("candidates_exhausted", round=state.round)
                    break
                room = config.budget - len(records)
                dropped = [c.candidate_id for c in cands[room:]]
                cands = cands[:room]
                dropped_total += len(dropped)
                events.emit(
                    "round_start",
                    round=state.round,
                    beta=beta,
                    arm=arm,
                    k=k,
                    excluded=excluded,
                    candidates=[c.to_dict() for c in cands],
                    dropped=dropped,
                    knowledge=_knowledge_for(config, arm),
                )
                round_records = _run_round(config, baseline, state, arm, cands, runner, pool_exec, events)
                records.extend(round_records)
                memory.update(c.candidate_id for c in cands)
                state.round += 1
        events.emit("study_end", executed=len(records), rounds=state.round, dropped=dropped_total, ts=time.time())
        report = build_report(
            config, baseline, records, state, state.round, dropped_total, reproduction_ok, baseline_metrics
        )
        if run_dir is not None:
            (run_dir / "report.json").write_text(analysis.emit_report(report, "json"))
            (run_dir / "report.txt").write_text(analysis.emit_report(report, "text"))
        return StudyResult(records, report, events.events, state, run_dir)
    finally:
        events.close()
        if tmp is not None:
            tmp.cleanup()


def _run_round(
    config: StudyConfig,
    baseline: float,
    state: BanditState,
    arm: str,
    cands: list[CandidateSpec],
    runner: CandidateRunner,
    pool_exec: ThreadPoolExecutor,
    events: EventLog,
) -> list[RunRecord]:
    graph = build_round_graph(arm, cands, state.round)
    results: dict[str, RunRecord] = {}
    ranking: list[str] = []

    def execute(node_id: str) -> RunRecord:
        cand = graph.node(node_id).payload
        start = time.time()
        metrics, ws_id = runner.run(cand)
        return _make_record(config, baseline, cand, state.round, metrics, ws_id, runner.simulated, start, time.time())

    for batch in schedule(graph, config.max_parallel):
        kind = graph.node(batch[0]).kind
        if kind is NodeKind.EXECUTION:
            done = list(pool_exec.map(execute, batch))
            for node_id, rec in zip(batch, done):
                results[node_id] = rec
                events.emit("node_start", node=node_id, kind=kind.value, ts=rec.started_at)
                events.emit(
                    "execution",
                    node=node_id,
                    round=state.round,
                    candidate_id=rec.candidate.candidate_id,
                    metrics=rec.metrics.to_dict(),
                    score=rec.score,
                    cost=rec.cost,
                    reward=rec.reward,
                    workspace_id=rec.workspace_id,
                    simulated=rec.simulated,
                )
                events.emit("node_end", node=node_id, kind=kind.value, status=rec.metrics.status.value,
                            ts=rec.ended_at)
            continue
        for node_id in batch:
            events.emit("node_start", node=node_id, kind=kind.value, ts=time.time())
            if kind is NodeKind.RANKING:
                ok = [r for _, r in sorted(results.items()) if r.ok]
                ok.sort(key=lambda r: -abs(baseline - r.score))
                ranking = [r.candidate.candidate_id for r in ok]
                events.emit("ranking", round=state.round, order=ranking)
            elif kind is NodeKind.REFLECTION:
                _reflect(state, [results[n] for n in sorted(results)], baseline, events)
            events.emit("node_end", node=node_id, kind=kind.value, status="success", ts=time.time())
    return [results[n] for n in sorted(results)]


def _reflect(state: BanditState, round_records: list[RunRecord], baseline: float, events: EventLog) -> None:
    """Apply rewards in candidate order, then log a structured round summary."""
    for rec in round_records:
        if rec.reward is None:
            continue
        update(state, rec.candidate.arm_id, rec.reward)
        stats = state.arms[rec.candidate.arm_id]
        events.emit(
            "bandit_update",
            round=state.round,
            arm=stats.arm_id,
            candidate_id=rec.candidate.candidate_id,
            reward=rec.reward,
            pulls=stats.pulls,
            mean=stats.mean_reward,
            total_trials=state.total_trials,
        )
    ok = [r for r in round_records if r.ok]
    best = max(ok, key=lambda r: (abs(baseline - r.score), r.candidate.candidate_id), default=None)
    events.emit(
        "round_summary",
        round=state.round,
        succeeded=len(ok),
        failed=len(round_records) - len(ok),
        best_candidate=best.candidate.candidate_id if best else None,
        best_abs_effect=abs(baseline - best.score) if best else None,
        arm_mean_effect=math.fsum(baseline - r.score for r in ok) / len(ok) if ok else None,
    )


def build_report(
    config: StudyConfig,
    baseline: float,
    records: Sequence[RunRecord],
    state: BanditState,
    rounds_run: int,
    dropped: int,
    reproduction_ok: bool,
    baseline_metrics: dict[str, float] | None = None,
    provenance: str = "original",
    extra_notes: Sequence[str] = (),
) -> analysis.StudyReport:
    entries = analysis.component_effects(records, baseline, config.tau_crit)
    notes = [
        f"criticality: mean |delta| of {config.space.primary_metric} >= "
        f"{config.tau_crit:g} * |baseline| = {config.tau_crit * abs(baseline):.6g}; ranking also uses the mean"
    ]
    tm = config.threshold_metric
    if tm and tm != config.space.primary_metric:
        if baseline_metrics and tm in baseline_metrics:
            crit = {e.component_id: e.critical for e in
                    analysis.component_effects(records, baseline_metrics[tm], config.tau_crit, metric=tm)}
            entries = [replace(e, critical=crit.get(e.component_id, False)) for e in entries]
            notes[0] = f"criticality judged on {tm} (baseline {baseline_metrics[tm]:.6g}); ranking on " \
                       f"{config.space.primary_metric}"
        else:
            notes.append(f"threshold metric {tm!r} has no baseline value; criticality uses the primary metric")
    pred = analysis.top_k(entries, config.k)
    importances = config.ground_truth_importances()
    gt_top = list(config.ground_truth_top) if config.ground_truth_top else (
        analysis.ground_truth_top_k(importances, config.k) if importances else None
    )
    acc = regret = None
    if gt_top is not None:
        if config.k <= len(gt_top):
            acc = analysis.acc_at_k(pred, gt_top, config.k)
        else:
            notes.append(f"ground truth lists fewer than k={config.k} components; Acc@k not computed")
    if importances is not None and all(c in importances for c in pred):
        regret = analysis.simple_regret(pred, importances, config.k)
    rs = analysis.run_statistics(records, [reproduction_ok])
    arms = analysis.arm_summaries(
        {a: s.rewards for a, s in state.arms.items()}, {a: s.prior_weight for a, s in state.arms.items()}
    )
    return analysis.StudyReport(
        baseline_score=baseline,
        primary_metric=config.space.primary_metric,
        seed=config.seed,
        policy=config.policy,
        budget=config.budget,
        lam=config.bandit.lam,
        tau_crit=config.tau_crit,
        k=config.k,
        executed=len(records),
        rounds_run=rounds_run,
        importance=entries,
        top_k_pred=pred,
        exec_rate=rs.exec_rate,
        tsr=rs.tsr,
        tsr_reproduction=rs.tsr_reproduction,
        tsr_ablation=rs.tsr_ablation,
        arms=arms,
        total_cost=math.fsum(r.cost for r in records),
        acc_at_k=acc,
        simple_regret=regret,
        ground_truth_top_k=gt_top,
        dropped_candidates=dropped,
        provenance=provenance,
        notes=notes + list(extra_notes),
    )


# --------------------------------------------------------------------------
# replay


@dataclass
class ReplayResult:
    report: analysis.StudyReport
    records: list[RunRecord] = field(default_factory=list)
    recomputed: bool = False


def replay(run_log: Path | str, lam: float | None = None) -> ReplayResult:
    """Rebuild rewards, bandit trajectory and report from a run's event log.

    With ``lam`` unchanged the recorded trajectory is verified step by step
    and the report matches the original. A different ``lam`` gives a
    what-if report marked as recomputed.
    """
    path = Path(run_log)
    if path.is_dir():
        path = path / "events.log"
    events = read_events(path)
    check_integrity(events)
    start = events[0]
    config = config_from_dict(start["config"], check_paths=False)
    recomputed = lam is not None and lam != config.bandit.lam
    if lam is not None:
        config = replace(config, bandit=replace(config.bandit, lam=lam))
    baseline = start["baseline"]
    if baseline is None:
        raise ReplayError("study aborted before a baseline was available")
    state = _initial_state(config)
    rng = random.Random(f"policy:{config.policy}:{config.seed}")
    exec_events = {}
    rounds = []
    for ev in events:
        if ev["type"] == "round_start":
            rounds.append(ev)
        elif ev["type"] == "execution":
            exec_events[(ev["round"], ev["candidate_id"])] = ev
    records: list[RunRecord] = []
    dropped = 0
    for rs in rounds:
        if state.round != rs["round"]:
            raise ReplayError(f"round sequence broken at round {rs['round']}")
        if not recomputed:
            _verify_selection(config, state, rs, rng)
        round_records = []
        for cand_raw in rs["candidates"]:
            cand = CandidateSpec.from_dict(cand_raw)
            ev = exec_events.get((rs["round"], cand.candidate_id))
            if ev is None:
                raise ReplayError(f"missing execution record for candidate {cand.candidate_id} in round {rs['round']}")
            metrics = MetricsRecord.from_dict(ev["metrics"])
            rec = _make_record(config, baseline, cand, rs["round"], metrics, ev["workspace_id"], ev["simulated"])
            if not recomputed and rec.reward != ev["reward"]:
                raise ReplayError(f"reward mismatch for candidate {cand.candidate_id}")
            round_records.append(rec)
        for rec in round_records:
            if rec.reward is not None:
                update(state, rec.candidate.arm_id, rec.reward)
        records.extend(round_records)
        dropped += len(rs["dropped"])
        state.round += 1
    end = events[-1]
    if not recomputed and (end["executed"] != len(records) or end["rounds"] != state.round):
        raise ReplayError("study_end totals disagree with the recorded rounds")
    notes = [f"recomputed with lambda={lam:g}, not original"] if recomputed else []
    report = build_report(
        config, baseline, records, state, state.round, dropped, start["reproduction_ok"],
        start.get("baseline_metrics"), provenance="recomputed" if recomputed else "original", extra_notes=notes,
    )
    return ReplayResult(report, records, recomputed)


def _verify_selection(config: StudyConfig, state: BanditState, rs: dict, rng: random.Random) -> None:
    if effective_beta(state) != rs["beta"]:
        raise ReplayError(f"beta mismatch in round {rs['round']}")
    excluded: list[str] = []
    for expected in rs["excluded"] + [rs["arm"]]:
        arm = choose_arm(config.policy, state, excluded, rng)
        if arm != expected:
            raise ReplayError(f"arm selection mismatch in round {rs['round']}: replay chose {arm}, log has {expected}")
        excluded.append(arm)
    if generation_budget(state, rs["arm"]) != rs["k"]:
        raise ReplayError(f"generation budget mismatch in round {rs['round']}")
