"""Study configuration: JSON loading, validation and round-tripping.

The document has the sections ``space``, ``arms``, ``knowledge``, ``bandit``,
``executor``, ``ground_truth`` and ``run``; see docs/config.md.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from ablate.bandit import BanditParams
from ablate.executor import DEFAULT_FAILURE_MIX, DEFAULT_TIMEOUT_SECONDS, SimulatedArmModel
from ablate.knowledge import KnowledgeBase
from ablate.space import (
    DEFAULT_COST_GPU_HOURS,
    Component,
    ComponentSpace,
    MutationSpec,
    validate_space,
)

POLICIES = ("ucb", "random", "heuristic")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class ExecutorConfig:
    kind: str = "simulated"
    env: dict[str, SimulatedArmModel] = field(default_factory=dict)
    failure_mix: dict[str, float] | None = None
    command: str | None = None
    base_dir: Path | None = None
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS
    artifacts: tuple[str, ...] = ("ablate_metrics.json", "*.log")
    cost_source: str = "estimated"

    def to_dict(self) -> dict:
        if self.kind == "simulated":
            out: dict[str, Any] = {"kind": "simulated", "env": {a: m.to_dict() for a, m in sorted(self.env.items())}}
            if self.failure_mix is not None:
                out["failure_mix"] = dict(self.failure_mix)
        else:
            out = {
                "kind": self.kind,
                "command": self.command,
                "base_dir": str(self.base_dir) if self.base_dir else None,
                "timeout_seconds": self.timeout_seconds,
                "artifacts": list(self.artifacts),
            }
        out["cost_source"] = self.cost_source
        return out


@dataclass(frozen=True)
class StudyConfig:
    space: ComponentSpace
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    bandit: BanditParams = field(default_factory=BanditParams)
    knowledge: KnowledgeBase = field(default_factory=KnowledgeBase)
    ground_truth: dict[str, float] | None = None
    ground_truth_top: tuple[str, ...] | None = None
    budget: int = 25
    seed: int = 0
    max_parallel: int = 1
    tau_crit: float = 0.05
    k: int = 5
    k_ret: int = 5
    max_targets: int = 1
    policy: str = "ucb"
    threshold_metric: str | None = None
    name: str = "study"

    def with_overrides(self, **changes: Any) -> "StudyConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def ground_truth_importances(self) -> dict[str, float] | None:
        """Explicit importances, or in simulation each component's true arm mean."""
        if self.ground_truth is not None:
            return dict(self.ground_truth)
        if self.ground_truth_top is None and self.executor.kind == "simulated" and self.executor.env:
            return {
                c.id: abs(self.executor.env[c.arm_id].reward_mean)
                for c in self.space.components
                if c.arm_id in self.executor.env
            }
        return None

    def to_dict(self) -> dict:
        """Deterministic form logged with every study; excludes max_parallel."""
        out = {
            "space": {
                "baseline_score": self.space.baseline_score,
                "primary_metric": self.space.primary_metric,
                "higher_is_better": self.space.higher_is_better,
                "components": [c.to_dict() for c in self.space.components],
            },
            "arms": [{"id": a, "weight": self.space.weight(a)} for a in self.space.arms],
            "knowledge": {"entries": [e.to_dict() for e in self.knowledge.entries], "k_ret": self.k_ret},
            "bandit": self.bandit.to_dict(),
            "executor": self.executor.to_dict(),
            "ground_truth": None,
            "run": {
                "name": self.name,
                "budget": self.budget,
                "seed": self.seed,
                "tau_crit": self.tau_crit,
                "k": self.k,
                "max_targets": self.max_targets,
                "policy": self.policy,
                "threshold_metric": self.threshold_metric,
            },
        }
        if self.ground_truth is not None:
            out["ground_truth"] = {"importances": dict(sorted(self.ground_truth.items()))}
        elif self.ground_truth_top is not None:
            out["ground_truth"] = {"top_k": list(self.ground_truth_top)}
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _number(value: Any, name: str, problems: list[str], *, minimum: float | None = None, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        problems.append(f"{name} must be a finite number, got {value!r}")
        return None
    if integer and int(value) != value:
        problems.append(f"{name} must be an integer, got {value!r}")
        return None
    if minimum is not None and value < minimum:
        problems.append(f"{name} must be >= {minimum}, got {value!r}")
        return None
    return int(value) if integer else float(value)


def _parse_component(raw: dict, problems: list[str]) -> Component | None:
    if not isinstance(raw, dict) or "id" not in raw:
        problems.append(f"component entry without id: {raw!r}")
        return None
    cid = str(raw["id"])
    muts_raw = raw.get("mutations", [{"kind": "toggle"}])
    try:
        muts = tuple(MutationSpec.from_dict(m) for m in muts_raw)
    except (KeyError, TypeError) as exc:
        problems.append(f"component {cid!r}: malformed mutation list ({exc})")
        return None
    cost = raw.get("estimated_cost", DEFAULT_COST_GPU_HOURS)
    return Component(
        id=cid,
        name=raw.get("name", cid),
        arm_id=str(raw.get("arm_id", cid)),
        description=raw.get("description", ""),
        allowed_mutations=muts,
        estimated_cost=float(cost) if isinstance(cost, (int, float)) else float("nan"),
        patches=raw.get("patches", {}),
    )


def parse_config(
    data: dict, base_path: Path | str | None = None, check_paths: bool = True
) -> tuple[StudyConfig | None, list[str]]:
    """Build a StudyConfig from a JSON document; return it with every problem found.

    ``check_paths=False`` skips filesystem checks (used when replaying a log).
    """
    problems: list[str] = []
    base = Path(base_path) if base_path is not None else Path.cwd()
    if not isinstance(data, dict):
        return None, ["config must be a JSON object"]
    space_raw = data.get("space")
    if not isinstance(space_raw, dict):
        return None, ["missing 'space' section"]
    components = [c for c in (_parse_component(r, problems) for r in space_raw.get("components", [])) if c]
    arm_weights: dict[str, float] = {}
    for arm in data.get("arms", []) or []:
        if isinstance(arm, str):
            arm_weights[arm] = 1.0
        elif isinstance(arm, dict) and "id" in arm:
            w = arm.get("weight", 1.0)
            arm_weights[str(arm["id"])] = float(w) if isinstance(w, (int, float)) else float("nan")
        else:
            problems.append(f"malformed arm entry {arm!r}")
    baseline = space_raw.get("baseline_score")
    if baseline is not None:
        baseline = _number(baseline, "space.baseline_score", problems)
    space = ComponentSpace(
        components=tuple(components),
        arm_weights=arm_weights,
        baseline_score=baseline,
        primary_metric=space_raw.get("primary_metric", "score"),
        higher_is_better=bool(space_raw.get("higher_is_better", True)),
    )
    problems.extend(validate_space(space))

    b = data.get("bandit", {}) or {}
    defaults = BanditParams()

    def _bandit(key: str, default, **kw):
        value = _number(b.get(key, default), f"bandit.{key}", problems, **kw)
        return default if value is None else value

    bandit = BanditParams(
        beta_base=_bandit("beta_base", defaults.beta_base),
        max_rounds=_bandit("max_rounds", defaults.max_rounds, integer=True),
        k_explore=_bandit("k_explore", defaults.k_explore, integer=True),
        k_base=_bandit("k_base", defaults.k_base, integer=True),
        k_exploit=_bandit("k_exploit", defaults.k_exploit, integer=True),
        lam=_bandit("lambda", defaults.lam, minimum=0.0),
    )
    problems.extend(bandit.problems())

    ex_raw = data.get("executor", {"kind": "simulated"}) or {}
    kind = ex_raw.get("kind", "simulated")
    cost_source = ex_raw.get("cost_source", "estimated")
    if cost_source not in ("estimated", "observed"):
        problems.append(f"executor.cost_source must be 'estimated' or 'observed', got {cost_source!r}")
    if kind == "simulated":
        env = {}
        for arm, m in (ex_raw.get("env") or {}).items():
            model = SimulatedArmModel(
                arm_id=arm,
                reward_mean=float(m.get("mean", 0.0)),
                reward_std=float(m.get("std", 0.0)),
                failure_prob=float(m.get("failure_prob", 0.0)),
            )
            problems.extend(model.problems())
            env[arm] = model
        missing = [a for a in space.arms if a not in env]
        if missing:
            problems.append(f"simulated env has no model for arms {missing}")
        executor = ExecutorConfig(
            kind="simulated", env=env, failure_mix=ex_raw.get("failure_mix"), cost_source=cost_source
        )
    elif kind == "shell":
        command = ex_raw.get("command")
        if not command:
            problems.append("shell executor needs a 'command'")
        base_dir = ex_raw.get("base_dir")
        if not base_dir:
            problems.append("shell executor needs a 'base_dir'")
            base_dir_path = None
        else:
            base_dir_path = (base / base_dir).resolve()
            if check_paths and not base_dir_path.is_dir():
                problems.append(f"executor.base_dir {base_dir_path} is not a directory")
        timeout = _number(ex_raw.get("timeout_seconds", DEFAULT_TIMEOUT_SECONDS), "executor.timeout_seconds", problems)
        if timeout is not None and timeout <= 0:
            problems.append("executor.timeout_seconds must be positive")
        executor = ExecutorConfig(
            kind="shell",
            command=command,
            base_dir=base_dir_path,
            timeout_seconds=timeout or DEFAULT_TIMEOUT_SECONDS,
            artifacts=tuple(ex_raw.get("artifacts", ("ablate_metrics.json", "*.log"))),
            cost_source=cost_source,
        )
    else:
        problems.append(f"unknown executor kind {kind!r}")
        executor = ExecutorConfig()

    kn_raw = data.get("knowledge") or {}
    k_ret = 5
    knowledge = KnowledgeBase()
    if isinstance(kn_raw, list):
        knowledge = KnowledgeBase.from_list(kn_raw)
    elif isinstance(kn_raw, dict):
        k_ret = kn_raw.get("k_ret", 5)
        if "file" in kn_raw:
            path = base / kn_raw["file"]
            try:
                knowledge = KnowledgeBase.load(path)
            except (OSError, ValueError, KeyError) as exc:
                problems.append(f"cannot load knowledge file {path}: {exc}")
        else:
            knowledge = KnowledgeBase.from_list(kn_raw.get("entries", []))
    problems.extend(knowledge.problems())
    k_ret = _number(k_ret, "knowledge.k_ret", problems, minimum=1, integer=True) or 5

    gt_raw = data.get("ground_truth")
    ground_truth = None
    ground_truth_top = None
    if isinstance(gt_raw, dict):
        if "importances" in gt_raw:
            ground_truth = {str(c): float(v) for c, v in gt_raw["importances"].items()}
        elif "top_k" in gt_raw:
            ground_truth_top = tuple(str(c) for c in gt_raw["top_k"])
    elif isinstance(gt_raw, list):
        ground_truth_top = tuple(str(c) for c in gt_raw)
    elif gt_raw is not None:
        problems.append("ground_truth must be an object or a list")

    run = data.get("run", {}) or {}
    budget = _number(run.get("budget", 25), "run.budget", problems, minimum=1, integer=True)
    seed = _number(run.get("seed", 0), "run.seed", problems, integer=True)
    max_parallel = _number(run.get("max_parallel", 1), "run.max_parallel", problems, minimum=1, integer=True)
    tau = _number(run.get("tau_crit", 0.05), "run.tau_crit", problems, minimum=0.0)
    k = _number(run.get("k", 5), "run.k", problems, minimum=1, integer=True)
    max_targets = _number(run.get("max_targets", 1), "run.max_targets", problems, minimum=1, integer=True)
    policy = run.get("policy", "ucb")
    if policy not in POLICIES:
        problems.append(f"run.policy must be one of {POLICIES}, got {policy!r}")
    if problems:
        return None, problems
    config = StudyConfig(
        space=space,
        executor=executor,
        bandit=bandit,
        knowledge=knowledge,
        ground_truth=ground_truth,
        ground_truth_top=ground_truth_top,
        budget=budget,
        seed=seed,
        max_parallel=max_parallel,
        tau_crit=tau,
        k=k,
        k_ret=k_ret,
        max_targets=max_targets,
        policy=policy,
        threshold_metric=run.get("threshold_metric"),
        name=str(run.get("name", "study")),
    )
    return config, []


def load_config(path: Path | str) -> StudyConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except ValueError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    config, problems = parse_config(data, path.parent)
    if problems:
        raise ConfigError(problems)
    return config


def config_from_dict(data: dict, check_paths: bool = True) -> StudyConfig:
    config, problems = parse_config(copy.deepcopy(data), check_paths=check_paths)
    if problems:
        raise ConfigError(problems)
    return config


__all__ = [
    "ConfigError",
    "ExecutorConfig",
    "StudyConfig",
    "POLICIES",
    "DEFAULT_FAILURE_MIX",
    "config_from_dict",
    "load_config",
    "parse_config",
]
