from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ablate.space import (
    PARAM_GRID,
    REPLACE,
    SCALE,
    TOGGLE,
    CandidateOverflowError,
    CandidateSpec,
    Component,
    ComponentSpace,
    Mutation,
    MutationSpec,
    candidate_problems,
    enumerate_candidates,
    validate_space,
)


def space_of(*components, weights=None):
    arms = weights or {c.arm_id: 1.0 for c in components}
    return ComponentSpace(tuple(components), arms, baseline_score=1.0)


def toggles(n):
    return [Component(f"c{i}", f"c{i}", f"arm{i % 3}") for i in range(n)]


def test_toggle_only_space_gives_one_candidate_per_component():
    cands = enumerate_candidates(space_of(*toggles(7)))
    assert len(cands) == 7
    assert sorted(c.targets[0] for c in cands) == [f"c{i}" for i in range(7)]


def test_mixed_mutations_expand_to_product():
    comp = Component(
        "enc",
        "encoder",
        "enc",
        allowed_mutations=(
            MutationSpec(TOGGLE),
            MutationSpec(SCALE, factors=(0.5, 2.0)),
            MutationSpec(REPLACE, alternatives=("mlp",)),
            MutationSpec(PARAM_GRID, param="dropout", values=(0.0, 0.1, 0.3)),
        ),
    )
    cands = enumerate_candidates(space_of(comp))
    assert len(cands) == 7
    assert {c.kind_signature for c in cands} == {(TOGGLE,), (SCALE,), (REPLACE,), (PARAM_GRID,)}


def test_pairs_use_first_target_arm_and_summed_cost():
    a = Component("a", "a", "arm-a", estimated_cost=1.5)
    b = Component("b", "b", "arm-b", estimated_cost=0.5)
    cands = enumerate_candidates(space_of(a, b), max_targets=2)
    pair = [c for c in cands if len(c.targets) == 2]
    assert len(cands) == 3 and len(pair) == 1
    assert pair[0].targets == ("a", "b")
    assert pair[0].arm_id == "arm-a"
    assert pair[0].estimated_cost == 2.0


def test_cap_is_checked_before_enumerating():
    with pytest.raises(CandidateOverflowError):
        enumerate_candidates(space_of(*toggles(20)), max_targets=3, cap=100)


def test_validate_space_reports_every_problem():
    dup = Component("x", "x", "arm")
    bad_cost = Component("y", "y", "ghost", estimated_cost=-1.0)
    problems = validate_space(ComponentSpace((dup, dup, bad_cost), {"arm": -2.0}))
    text = " | ".join(problems)
    assert "duplicate component id 'x'" in text
    assert "undeclared arm 'ghost'" in text
    assert "estimated_cost" in text
    assert "negative or non-finite weight" in text


def test_empty_scale_factors_are_rejected():
    comp = Component("x", "x", "x", allowed_mutations=(MutationSpec(SCALE),))
    assert validate_space(space_of(comp))
    with pytest.raises(ValueError):
        enumerate_candidates(space_of(comp))


def test_candidate_id_is_content_derived():
    a = CandidateSpec(("a",), (Mutation(TOGGLE),), "arm")
    b = CandidateSpec(("a",), (Mutation(TOGGLE),), "arm", description="other words")
    c = CandidateSpec(("a",), (Mutation(SCALE, 2.0),), "arm")
    assert a.candidate_id == b.candidate_id != c.candidate_id
    assert len(a.candidate_id) == 16


def test_candidate_problems_flags_disallowed_mutation():
    space = space_of(Component("a", "a", "arm"))
    bad = CandidateSpec(("a",), (Mutation(SCALE, 3.0),), "arm")
    assert any("not allowed" in p for p in candidate_problems(space, bad))
    assert any("unknown target" in p for p in candidate_problems(space, CandidateSpec(("z",), (Mutation(TOGGLE),), "arm")))


component_lists = st.lists(
    st.tuples(
        st.sampled_from(["a0", "a1", "a2"]),
        st.lists(st.sampled_from([0.25, 0.5, 2.0, 4.0]), max_size=3, unique=True),
        st.floats(0, 10),
    ),
    min_size=1,
    max_size=6,
)


def _build(rows):
    comps = []
    for i, (arm, factors, cost) in enumerate(rows):
        muts = (MutationSpec(TOGGLE),) + ((MutationSpec(SCALE, factors=tuple(factors)),) if factors else ())
        comps.append(Component(f"c{i}", f"c{i}", arm, allowed_mutations=muts, estimated_cost=cost))
    return space_of(*comps)


@settings(max_examples=60, deadline=None)
@given(component_lists, st.integers(1, 2))
def test_enumeration_is_pure_and_candidates_are_valid(rows, max_targets):
    space = _build(rows)
    first = enumerate_candidates(space, max_targets)
    assert first == enumerate_candidates(space, max_targets)
    assert len({c.candidate_id for c in first}) == len(first)
    for cand in first:
        assert candidate_problems(space, cand) == []
        assert CandidateSpec.from_dict(cand.to_dict()) == cand


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12))
def test_toggle_only_count_property(m):
    assert len(enumerate_candidates(space_of(*toggles(m)))) == m
