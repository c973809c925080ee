"""Static knowledge base: lexical retrieval and arm prior weights.

Normalization is: NFKD, drop non-ASCII, lowercase, replace every character
outside ``[a-z0-9]`` with a space, split on whitespace. Scores are cosine
similarities between token-count vectors.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ablate.space import ComponentSpace

Scorer = Callable[[Sequence[str], Sequence[str]], float]


@dataclass(frozen=True)
class KnowledgeEntry:
    entry_id: str
    text: str
    tags: tuple[str, ...] = ()
    linked_components: tuple[str, ...] = ()
    weight_hint: float | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeEntry":
        hint = data.get("weight_hint")
        return cls(
            entry_id=str(data["entry_id"]),
            text=data.get("text", ""),
            tags=tuple(data.get("tags", ())),
            linked_components=tuple(data.get("linked_components", ())),
            weight_hint=float(hint) if hint is not None else None,
        )

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "text": self.text,
            "tags": list(self.tags),
            "linked_components": list(self.linked_components),
            "weight_hint": self.weight_hint,
        }


@dataclass
class KnowledgeBase:
    entries: list[KnowledgeEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def problems(self) -> list[str]:
        out = []
        seen: set[str] = set()
        for e in self.entries:
            if e.entry_id in seen:
                out.append(f"duplicate knowledge entry id {e.entry_id!r}")
            seen.add(e.entry_id)
            if e.weight_hint is not None and not (math.isfinite(e.weight_hint) and e.weight_hint >= 0):
                out.append(f"knowledge entry {e.entry_id!r} has invalid weight_hint {e.weight_hint!r}")
        return out

    @classmethod
    def from_list(cls, items: list[dict]) -> "KnowledgeBase":
        return cls([KnowledgeEntry.from_dict(d) for d in items])

    @classmethod
    def load(cls, path: Path | str) -> "KnowledgeBase":
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict):
            data = data.get("entries", [])
        return cls.from_list(data)


def tokenize(text: str) -> list[str]:
    folded = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode("ascii").lower()
    return re.sub(r"[^a-z0-9]+", " ", folded).split()


def cosine_overlap(query: Sequence[str], doc: Sequence[str]) -> float:
    q, d = Counter(query), Counter(doc)
    dot = sum(q[t] * d[t] for t in q.keys() & d.keys())
    if dot == 0:
        return 0.0
    norm = math.sqrt(sum(v * v for v in q.values())) * math.sqrt(sum(v * v for v in d.values()))
    return dot / norm


def retrieve(
    query: str, kb: KnowledgeBase, k_ret: int = 5, scorer: Scorer = cosine_overlap
) -> list[tuple[KnowledgeEntry, float]]:
    if not kb.entries:
        raise ValueError("knowledge base is empty")
    if k_ret < 1:
        raise ValueError("k_ret must be >= 1")
    q = tokenize(query)
    scored = [(e, scorer(q, tokenize(" ".join((e.text, *e.tags))))) for e in kb.entries]
    scored.sort(key=lambda pair: (-pair[1], pair[0].entry_id))
    return scored[:k_ret]


def derive_arm_weights(kb: KnowledgeBase, space: ComponentSpace) -> dict[str, float]:
    """Per arm: the largest weight hint linked to any of its components.

    Arms without hints keep the weight declared in the space (1.0 unless set).
    """
    arm_of = {c.id: c.arm_id for c in space.components}
    hinted: dict[str, float] = {}
    for entry in kb.entries:
        if entry.weight_hint is None:
            continue
        for comp in entry.linked_components:
            arm = arm_of.get(comp)
            if arm is not None:
                hinted[arm] = max(hinted.get(arm, 0.0), entry.weight_hint)
    return {arm: hinted.get(arm, space.weight(arm)) for arm in space.arms}
