"""Per-round operation graphs and their batch schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from graphlib import CycleError, TopologicalSorter
from typing import Any, Sequence

from ablate.space import CandidateSpec


class NodeKind(str, Enum):
    GENERATION = "generation"
    EXECUTION = "execution"
    RANKING = "ranking"
    REFLECTION = "reflection"


class GraphCycleError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    node_id: str
    kind: NodeKind
    payload: Any = None


@dataclass
class ExecutionGraph:
    round_index: int
    nodes: list[Node] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def of_kind(self, kind: NodeKind) -> list[Node]:
        return [n for n in self.nodes if n.kind is kind]

    def predecessors(self) -> dict[str, set[str]]:
        preds: dict[str, set[str]] = {n.node_id: set() for n in self.nodes}
        for src, dst in self.edges:
            preds[dst].add(src)
        return preds


def build_round_graph(selected_arm: str, candidates: Sequence[CandidateSpec], round_index: int) -> ExecutionGraph:
    """generation -> one execution node per candidate -> ranking -> reflection."""
    if not candidates:
        raise ValueError("a round needs at least one candidate")
    foreign = [c.candidate_id for c in candidates if c.arm_id != selected_arm]
    if foreign:
        raise ValueError(f"candidates {foreign} do not belong to arm {selected_arm!r}")
    prefix = f"r{round_index:03d}"
    gen = Node(f"{prefix}/0-gen", NodeKind.GENERATION, selected_arm)
    rank = Node(f"{prefix}/2-rank", NodeKind.RANKING)
    reflect = Node(f"{prefix}/3-reflect", NodeKind.REFLECTION)
    g = ExecutionGraph(round_index, [gen])
    for i, cand in enumerate(candidates):
        ex = Node(f"{prefix}/1-exec-{i:04d}", NodeKind.EXECUTION, cand)
        g.nodes.append(ex)
        g.edges.append((gen.node_id, ex.node_id))
    g.nodes += [rank, reflect]
    g.edges += [(n.node_id, rank.node_id) for n in g.of_kind(NodeKind.EXECUTION)]
    g.edges.append((rank.node_id, reflect.node_id))
    return g


def schedule(graph: ExecutionGraph, max_parallel: int) -> list[list[str]]:
    """Level-order batches of node ids, each at most ``max_parallel`` long.

    Nodes become ready together once all their predecessors are done; a
    ready level is sorted by node id and chunked.
    """
    if max_parallel < 1:
        raise ValueError("max_parallel must be >= 1")
    ts = TopologicalSorter(graph.predecessors())
    try:
        ts.prepare()
    except CycleError as exc:
        raise GraphCycleError(f"cycle detected: {exc.args[1]}") from exc
    batches: list[list[str]] = []
    while ts.is_active():
        level = sorted(ts.get_ready())
        for i in range(0, len(level), max_parallel):
            batches.append(level[i : i + max_parallel])
        ts.done(*level)
    return batches
