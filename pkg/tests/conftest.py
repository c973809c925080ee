from __future__ import annotations

import sys
import textwrap
from pathlib import Path

import pytest

from ablate.bandit import BanditParams
from ablate.config import ExecutorConfig, StudyConfig
from ablate.executor import SimulatedArmModel
from ablate.space import SCALE, TOGGLE, Component, ComponentSpace, MutationSpec

# Lines recorded by tests/test_acceptance.py, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


RUN_SCRIPT = textwrap.dedent(
    """\
    import json, sys
    cfg = json.load(open("hparams.json"))
    score = 0.9 - (0.0 if cfg["use_a"] else 0.2) - (0.0 if cfg["use_b"] else 0.05) - 0.01 * (cfg["width"] / 64 - 1)
    json.dump({"score": score, "mse": 1 - score}, open("ablate_metrics.json", "w"))
    """
)


def make_repo(root: Path, script: str = RUN_SCRIPT) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    (root / "hparams.json").write_text('{\n  "use_a": true,\n  "use_b": true,\n  "width": 64\n}\n')
    (root / "run.py").write_text(script)
    (root / "data").mkdir(exist_ok=True)
    (root / "data" / "README.txt").write_text("fixture data\n")
    return root


def shell_space(baseline: float | None = None) -> ComponentSpace:
    def toggle(key):
        return {TOGGLE: [{"op": "set_key", "file": "hparams.json", "key": key, "value": False}]}

    comps = (
        Component("a", "Component A", "arm-a", "first block", (MutationSpec(TOGGLE),), 0.5, toggle("use_a")),
        Component("b", "Component B", "arm-b", "second block", (MutationSpec(TOGGLE),), 0.5, toggle("use_b")),
        Component(
            "width",
            "Width",
            "arm-a",
            "hidden width",
            (MutationSpec(SCALE, factors=(0.5, 2.0)),),
            0.5,
            {SCALE: [{"op": "set_key", "file": "hparams.json", "key": "width", "scale": "{factor}"}]},
        ),
    )
    return ComponentSpace(comps, {"arm-a": 1.0, "arm-b": 1.0}, baseline_score=baseline)


@pytest.fixture
def repo(tmp_path) -> Path:
    return make_repo(tmp_path / "repo")


@pytest.fixture
def shell_config(repo) -> StudyConfig:
    return StudyConfig(
        space=shell_space(),
        executor=ExecutorConfig(kind="shell", command=f"{sys.executable} run.py", base_dir=repo, timeout_seconds=30),
        bandit=BanditParams(max_rounds=5, k_explore=2, k_base=2, k_exploit=1),
        budget=10,
        k=2,
        name="shell-test",
    )


def sim_config(
    arms: dict[str, tuple[float, float, float]],
    comps_per_arm: int = 1,
    **overrides,
) -> StudyConfig:
    """Small simulated study: arms maps id -> (mean, std, failure_prob)."""
    comps = []
    for arm in sorted(arms):
        for i in range(comps_per_arm):
            comps.append(
                Component(
                    f"{arm}.c{i}",
                    f"{arm} component {i}",
                    arm,
                    allowed_mutations=(MutationSpec(TOGGLE), MutationSpec(SCALE, factors=(0.25, 0.5, 2.0, 4.0))),
                )
            )
    env = {a: SimulatedArmModel(a, m, s, f) for a, (m, s, f) in arms.items()}
    fields = dict(
        space=ComponentSpace(tuple(comps), {a: 1.0 for a in arms}, baseline_score=0.0),
        executor=ExecutorConfig(kind="simulated", env=env),
        bandit=BanditParams(),
        budget=15,
        k=2,
        name="sim-test",
    )
    fields.update(overrides)
    return StudyConfig(**fields)
