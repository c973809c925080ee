"""Candidate executors: a seeded simulator and a shell command runner."""

from __future__ import annotations

import hashlib
import json
import math
import os
import shlex
import signal
import subprocess
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from ablate.space import CandidateSpec
from ablate.workspace import METRICS_FILE, Workspace, WsState, WorkspaceStateError

DEFAULT_TIMEOUT_SECONDS = 3600.0
# mapping / environment / code-level share of observed failures
DEFAULT_FAILURE_MIX = {"MappingFailure": 0.5, "EnvironmentFailure": 0.3, "RuntimeFailure": 0.2}


class Status(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"


class FailureCategory(str, Enum):
    MAPPING = "MappingFailure"
    ENVIRONMENT = "EnvironmentFailure"
    RUNTIME = "RuntimeFailure"


class ExecutorUnavailableError(RuntimeError):
    """The executor cannot run anything at all (e.g. the command is missing)."""


@dataclass
class MetricsRecord:
    metrics: dict[str, float] = field(default_factory=dict)
    status: Status = Status.SUCCESS
    wall_seconds: float = 0.0
    cost_gpu_hours: float | None = None
    failure_category: FailureCategory | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.SUCCESS

    @classmethod
    def failed(cls, category: FailureCategory, message: str = "", wall_seconds: float = 0.0) -> "MetricsRecord":
        return cls({}, Status.FAILED, wall_seconds, None, category, message)

    def to_dict(self) -> dict:
        return {
            "metrics": dict(sorted(self.metrics.items())),
            "status": self.status.value,
            "wall_seconds": self.wall_seconds,
            "cost_gpu_hours": self.cost_gpu_hours,
            "failure_category": self.failure_category.value if self.failure_category else None,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsRecord":
        cat = data.get("failure_category")
        return cls(
            metrics=dict(data.get("metrics", {})),
            status=Status(data["status"]),
            wall_seconds=data.get("wall_seconds", 0.0),
            cost_gpu_hours=data.get("cost_gpu_hours"),
            failure_category=FailureCategory(cat) if cat else None,
            message=data.get("message", ""),
        )


@dataclass(frozen=True)
class SimulatedArmModel:
    arm_id: str
    reward_mean: float
    reward_std: float = 0.0
    failure_prob: float = 0.0

    def problems(self) -> list[str]:
        out = []
        if not math.isfinite(self.reward_mean):
            out.append(f"arm {self.arm_id!r}: reward_mean must be finite")
        if not (math.isfinite(self.reward_std) and self.reward_std >= 0):
            out.append(f"arm {self.arm_id!r}: reward_std must be >= 0")
        if not 0.0 <= self.failure_prob <= 1.0:
            out.append(f"arm {self.arm_id!r}: failure_prob must lie in [0, 1]")
        return out

    def to_dict(self) -> dict:
        return {"mean": self.reward_mean, "std": self.reward_std, "failure_prob": self.failure_prob}


def candidate_rng(seed: int, candidate_id: str) -> np.random.Generator:
    """Philox stream keyed by (seed, candidate id); independent of call order."""
    key = int.from_bytes(hashlib.sha256(f"{seed}:{candidate_id}".encode()).digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def execute_simulated(
    candidate: CandidateSpec,
    env: Mapping[str, SimulatedArmModel],
    seed: int,
    baseline_score: float = 0.0,
    primary_metric: str = "score",
    failure_mix: Mapping[str, float] | None = None,
) -> MetricsRecord:
    """Draw a Gaussian effect from the candidate's arm model.

    The reported score is ``baseline_score - draw`` so the absolute ablation
    effect equals the drawn value (exactly when the baseline is 0).
    """
    if candidate.arm_id not in env:
        raise KeyError(f"arm {candidate.arm_id!r} has no simulated model")
    model = env[candidate.arm_id]
    rng = candidate_rng(seed, candidate.candidate_id)
    if rng.random() < model.failure_prob:
        mix = failure_mix or DEFAULT_FAILURE_MIX
        u = rng.random() * sum(mix.values())
        acc = 0.0
        category = FailureCategory.RUNTIME
        for name, share in mix.items():
            acc += share
            if u < acc:
                category = FailureCategory(name)
                break
        return MetricsRecord.failed(category, "simulated failure")
    draw = float(rng.normal(model.reward_mean, model.reward_std))
    return MetricsRecord(
        metrics={primary_metric: baseline_score - draw},
        cost_gpu_hours=candidate.estimated_cost,
    )


def parse_metrics_file(path, primary_metric: str) -> MetricsRecord:
    """Read ``ablate_metrics.json``: a flat name -> number object."""
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        return MetricsRecord.failed(FailureCategory.ENVIRONMENT, f"{METRICS_FILE} was not written")
    except (OSError, ValueError) as exc:
        return MetricsRecord.failed(FailureCategory.ENVIRONMENT, f"unparseable {METRICS_FILE}: {exc}")
    if not isinstance(data, dict):
        return MetricsRecord.failed(FailureCategory.ENVIRONMENT, f"{METRICS_FILE} is not a JSON object")
    metrics: dict[str, float] = {}
    for name, value in data.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            return MetricsRecord.failed(FailureCategory.ENVIRONMENT, f"metric {name!r} is not a finite number")
        metrics[name] = float(value)
    cost = metrics.pop("cost_gpu_hours", None)
    if primary_metric not in metrics:
        return MetricsRecord.failed(FailureCategory.ENVIRONMENT, f"primary metric {primary_metric!r} missing")
    return MetricsRecord(metrics=metrics, cost_gpu_hours=cost)


def render_command(command: str, workspace: str, candidate_id: str, seed: int) -> list[str]:
    values = {"workspace": workspace, "candidate_id": candidate_id, "seed": str(seed)}
    return [tok.format(**values) for tok in shlex.split(command)]


def execute_shell(
    candidate: CandidateSpec | None,
    ws: Workspace,
    command: str,
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS,
    seed: int = 0,
    primary_metric: str = "score",
) -> MetricsRecord:
    """Run ``command`` inside the workspace and collect its metrics file.

    Nonzero exit or timeout is a RuntimeFailure; a missing or malformed
    metrics file is an EnvironmentFailure. The workspace moves to Executed
    either way.
    """
    if ws.state is not WsState.MUTATED:
        raise WorkspaceStateError(f"cannot execute workspace {ws.workspace_id} in state {ws.state.name}")
    if timeout_seconds <= 0:
        raise ValueError("timeout_seconds must be positive")
    cid = candidate.candidate_id if candidate is not None else "baseline"
    metrics_path = ws.path / METRICS_FILE
    metrics_path.unlink(missing_ok=True)
    argv = render_command(command, str(ws.path), cid, seed)
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv, cwd=ws.path, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, start_new_session=True
        )
    except OSError as exc:
        ws.state = WsState.EXECUTED
        raise ExecutorUnavailableError(f"cannot spawn {argv[0]!r}: {exc}") from exc
    timed_out = False
    try:
        out, err = proc.communicate(timeout=timeout_seconds)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, err = proc.communicate()
    elapsed = time.monotonic() - start
    ws.logs["stdout.log"] = out or ""
    ws.logs["stderr.log"] = err or ""
    ws.state = WsState.EXECUTED
    if timed_out:
        return MetricsRecord.failed(FailureCategory.RUNTIME, f"timed out after {timeout_seconds}s", elapsed)
    if proc.returncode != 0:
        return MetricsRecord.failed(FailureCategory.RUNTIME, f"exit code {proc.returncode}", elapsed)
    record = parse_metrics_file(metrics_path, primary_metric)
    record.wall_seconds = elapsed
    return record
