"""Component spaces, mutation taxonomy and candidate configurations."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

TOGGLE = "toggle"
SCALE = "scale"
REPLACE = "replace"
PARAM_GRID = "param_grid"
MUTATION_KINDS = (TOGGLE, SCALE, REPLACE, PARAM_GRID)

DEFAULT_COST_GPU_HOURS = 1.0
DEFAULT_CANDIDATE_CAP = 100_000


class CandidateOverflowError(ValueError):
    """Enumeration would produce more candidates than the configured cap."""


@dataclass(frozen=True)
class Mutation:
    """One concrete mutation applied to a single component.

    ``argument`` is ``None`` for toggles, the positive factor for scales,
    the alternative's name for replacements and the grid value for
    parameter grids.
    """

    kind: str
    argument: Any = None
    param: str | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.argument is not None:
            out["argument"] = self.argument
        if self.param is not None:
            out["param"] = self.param
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Mutation":
        return cls(data["kind"], data.get("argument"), data.get("param"))

    def label(self) -> str:
        if self.kind == TOGGLE:
            return "toggle"
        if self.kind == SCALE:
            return f"scale x{self.argument}"
        if self.kind == REPLACE:
            return f"replace with {self.argument}"
        return f"{self.param}={self.argument}"


@dataclass(frozen=True)
class MutationSpec:
    """A declared family of mutations a component allows.

    Expands into one :class:`Mutation` per factor, alternative or grid value.
    """

    kind: str
    factors: tuple[float, ...] = ()
    alternatives: tuple[str, ...] = ()
    param: str | None = None
    values: tuple[Any, ...] = ()

    def problems(self) -> list[str]:
        if self.kind not in MUTATION_KINDS:
            return [f"unknown mutation kind {self.kind!r}"]
        if self.kind == SCALE:
            if not self.factors:
                return ["scale mutation needs at least one factor"]
            bad = [f for f in self.factors if not (isinstance(f, (int, float)) and math.isfinite(f) and f > 0)]
            if bad:
                return [f"scale factors must be positive, got {bad}"]
        if self.kind == REPLACE and not self.alternatives:
            return ["replace mutation needs a named alternative"]
        if self.kind == PARAM_GRID:
            if not self.param:
                return ["param_grid mutation needs a parameter name"]
            if not self.values:
                return ["param_grid mutation needs a non-empty value list"]
        return []

    def expand(self) -> list[Mutation]:
        if self.kind == TOGGLE:
            return [Mutation(TOGGLE)]
        if self.kind == SCALE:
            return [Mutation(SCALE, f) for f in self.factors]
        if self.kind == REPLACE:
            return [Mutation(REPLACE, a) for a in self.alternatives]
        return [Mutation(PARAM_GRID, v, self.param) for v in self.values]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == SCALE:
            out["factors"] = list(self.factors)
        elif self.kind == REPLACE:
            out["alternatives"] = list(self.alternatives)
        elif self.kind == PARAM_GRID:
            out["param"] = self.param
            out["values"] = list(self.values)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MutationSpec":
        return cls(
            kind=data["kind"],
            factors=tuple(data.get("factors", ())),
            alternatives=tuple(data.get("alternatives", ())),
            param=data.get("param"),
            values=tuple(data.get("values", ())),
        )


@dataclass(frozen=True)
class Component:
    id: str
    name: str
    arm_id: str
    description: str = ""
    allowed_mutations: tuple[MutationSpec, ...] = (MutationSpec(TOGGLE),)
    estimated_cost: float = DEFAULT_COST_GPU_HOURS
    # mutation kind -> list of patch operation templates (see workspace.render_patch)
    patches: dict = field(default_factory=dict, compare=False, hash=False)

    def mutations(self) -> list[Mutation]:
        out: list[Mutation] = []
        for spec in self.allowed_mutations:
            out.extend(spec.expand())
        return out

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "name": self.name,
            "arm_id": self.arm_id,
            "description": self.description,
            "mutations": [m.to_dict() for m in self.allowed_mutations],
            "estimated_cost": self.estimated_cost,
        }
        if self.patches:
            out["patches"] = self.patches
        return out


@dataclass(frozen=True)
class ComponentSpace:
    components: tuple[Component, ...]
    arm_weights: dict[str, float] = field(default_factory=dict, hash=False)
    baseline_score: float | None = None
    primary_metric: str = "score"
    higher_is_better: bool = True

    @property
    def arms(self) -> list[str]:
        seen = dict.fromkeys(self.arm_weights)
        for c in self.components:
            seen.setdefault(c.arm_id, None)
        return sorted(seen)

    def weight(self, arm_id: str) -> float:
        return self.arm_weights.get(arm_id, 1.0)

    def component(self, component_id: str) -> Component:
        for c in self.components:
            if c.id == component_id:
                return c
        raise KeyError(component_id)

    def components_of(self, arm_id: str) -> list[Component]:
        return [c for c in self.components if c.arm_id == arm_id]

    def to_dict(self) -> dict:
        return {
            "components": [c.to_dict() for c in self.components],
            "arms": [{"id": a, "weight": self.weight(a)} for a in self.arms],
            "baseline_score": self.baseline_score,
            "primary_metric": self.primary_metric,
            "higher_is_better": self.higher_is_better,
        }


@dataclass(frozen=True)
class CandidateSpec:
    """One executable mutation configuration.

    ``targets`` and ``mutations`` are parallel tuples; ``arm_id`` is the
    generating arm that receives the reward.
    """

    targets: tuple[str, ...]
    mutations: tuple[Mutation, ...]
    arm_id: str
    description: str = ""
    estimated_cost: float = DEFAULT_COST_GPU_HOURS
    candidate_id: str = ""

    def __post_init__(self) -> None:
        if not self.candidate_id:
            object.__setattr__(self, "candidate_id", candidate_digest(self.targets, self.mutations, self.arm_id))

    @property
    def kind_signature(self) -> tuple[str, ...]:
        return tuple(m.kind for m in self.mutations)

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "targets": list(self.targets),
            "mutations": [m.to_dict() for m in self.mutations],
            "arm_id": self.arm_id,
            "description": self.description,
            "estimated_cost": self.estimated_cost,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CandidateSpec":
        return cls(
            targets=tuple(data["targets"]),
            mutations=tuple(Mutation.from_dict(m) for m in data["mutations"]),
            arm_id=data["arm_id"],
            description=data.get("description", ""),
            estimated_cost=data.get("estimated_cost", DEFAULT_COST_GPU_HOURS),
            candidate_id=data.get("candidate_id", ""),
        )


def candidate_digest(targets: Sequence[str], mutations: Sequence[Mutation], arm_id: str) -> str:
    payload = json.dumps(
        {"targets": list(targets), "mutations": [m.to_dict() for m in mutations], "arm": arm_id},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def validate_space(space: ComponentSpace) -> list[str]:
    """Return every invariant violation found in ``space``; empty means ok."""
    problems: list[str] = []
    if not space.components:
        problems.append("component space is empty")
    seen: set[str] = set()
    for c in space.components:
        if c.id in seen:
            problems.append(f"duplicate component id {c.id!r}")
        seen.add(c.id)
        if space.arm_weights and c.arm_id not in space.arm_weights:
            problems.append(f"component {c.id!r} references undeclared arm {c.arm_id!r}")
        if not c.allowed_mutations:
            problems.append(f"component {c.id!r} allows no mutations")
        for spec in c.allowed_mutations:
            problems.extend(f"component {c.id!r}: {p}" for p in spec.problems())
        if not (math.isfinite(c.estimated_cost) and c.estimated_cost >= 0):
            problems.append(f"component {c.id!r} has invalid estimated_cost {c.estimated_cost!r}")
    for arm, w in space.arm_weights.items():
        if not (isinstance(w, (int, float)) and math.isfinite(w) and w >= 0):
            problems.append(f"arm {arm!r} has negative or non-finite weight {w!r}")
    if space.baseline_score is not None and not math.isfinite(space.baseline_score):
        problems.append("baseline_score must be finite")
    return problems


def candidate_problems(space: ComponentSpace, candidate: CandidateSpec) -> list[str]:
    problems = []
    if not candidate.targets:
        problems.append("candidate has no targets")
    if len(candidate.targets) != len(candidate.mutations):
        problems.append("targets and mutations differ in length")
    ids = {c.id: c for c in space.components}
    for target, mutation in zip(candidate.targets, candidate.mutations):
        comp = ids.get(target)
        if comp is None:
            problems.append(f"unknown target {target!r}")
        elif mutation not in comp.mutations():
            problems.append(f"mutation {mutation.label()!r} not allowed on {target!r}")
    if not any(ids[t].arm_id == candidate.arm_id for t in candidate.targets if t in ids):
        problems.append(f"arm {candidate.arm_id!r} matches no target component")
    if candidate.estimated_cost < 0:
        problems.append("estimated_cost is negative")
    return problems


def _count_for(subset: Iterable[Component]) -> int:
    return math.prod(len(c.mutations()) for c in subset)


def enumerate_candidates(
    space: ComponentSpace, max_targets: int = 1, cap: int = DEFAULT_CANDIDATE_CAP
) -> list[CandidateSpec]:
    """All candidates touching at most ``max_targets`` components, sorted by id.

    Multi-target candidates are credited to the arm of their first target
    (components taken in id order).
    """
    if max_targets < 1:
        raise ValueError("max_targets must be >= 1")
    problems = validate_space(space)
    if problems:
        raise ValueError("invalid component space: " + "; ".join(problems))
    comps = sorted(space.components, key=lambda c: c.id)
    total = 0
    for size in range(1, min(max_targets, len(comps)) + 1):
        for subset in itertools.combinations(comps, size):
            total += _count_for(subset)
            if total > cap:
                raise CandidateOverflowError(f"enumeration exceeds cap of {cap} candidates")
    out = []
    for size in range(1, min(max_targets, len(comps)) + 1):
        for subset in itertools.combinations(comps, size):
            for combo in itertools.product(*(c.mutations() for c in subset)):
                desc = "; ".join(f"{c.name}: {m.label()}" for c, m in zip(subset, combo))
                out.append(
                    CandidateSpec(
                        targets=tuple(c.id for c in subset),
                        mutations=tuple(combo),
                        arm_id=subset[0].arm_id,
                        description=desc,
                        estimated_cost=sum(c.estimated_cost for c in subset),
                    )
                )
    out.sort(key=lambda c: c.candidate_id)
    return out
