from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ablate.space import REPLACE, SCALE, TOGGLE, CandidateSpec, Component, ComponentSpace, Mutation, MutationSpec
from ablate.workspace import (
    AnchorNotFoundError,
    PatchConflictError,
    PatchOp,
    WorkspaceCollisionError,
    WorkspaceManager,
    WorkspaceStateError,
    WsState,
    render_patch,
    tree_digests,
)


@pytest.fixture
def base(tmp_path):
    root = tmp_path / "base"
    (root / "pkg").mkdir(parents=True)
    (root / "hparams.json").write_text('{\n  "width": 128,\n  "use_attn": true,\n  "lr": 0.001\n}\n')
    (root / "config.yaml").write_text("layers: 4\nact: relu  # activation\n")
    (root / "pkg" / "model.py").write_text("x = encoder(x)\ny = head(x)\nlog(x)\nlog(y)\n")
    return root


@pytest.fixture
def mgr(tmp_path):
    return WorkspaceManager(tmp_path / "store")


def op(**kw):
    return PatchOp.from_dict(kw)


def test_snapshot_is_content_addressed(mgr, base):
    a = mgr.snapshot(base)
    b = mgr.snapshot(base)
    assert a.snapshot_id == b.snapshot_id
    assert a.digests() == tree_digests(base)
    (base / "new.txt").write_text("x")
    assert mgr.snapshot(base).snapshot_id != a.snapshot_id


def test_set_key_variants(mgr, base):
    ws = mgr.create_workspace(mgr.snapshot(base), None)
    mgr.apply_mutation(
        ws,
        [
            op(op="set_key", file="hparams.json", key="width", scale=0.5),
            op(op="set_key", file="hparams.json", key="use_attn", value=False),
            op(op="set_key", file="config.yaml", key="act", value="gelu"),
        ],
    )
    data = json.loads((ws.path / "hparams.json").read_text())
    assert data == {"width": 64, "use_attn": False, "lr": 0.001}
    assert (ws.path / "config.yaml").read_text() == "layers: 4\nact: gelu  # activation\n"
    assert "-  \"width\": 128," in ws.applied_patch and "+  \"width\": 64," in ws.applied_patch


def test_anchor_and_line_ops(mgr, base):
    ws = mgr.create_workspace(mgr.snapshot(base), None)
    mgr.apply_mutation(
        ws,
        [
            op(op="replace_anchored", file="pkg/model.py", anchor="encoder(x)", replacement="x"),
            op(op="delete_lines", file="pkg/model.py", anchor="log("),
        ],
    )
    assert (ws.path / "pkg" / "model.py").read_text() == "x = x\ny = head(x)\n"


@pytest.mark.parametrize(
    "patch, error",
    [
        ([{"op": "replace_anchored", "file": "pkg/model.py", "anchor": "log(", "replacement": ""}], PatchConflictError),
        ([{"op": "replace_anchored", "file": "pkg/model.py", "anchor": "nope", "replacement": ""}], AnchorNotFoundError),
        ([{"op": "set_key", "file": "hparams.json", "key": "missing", "value": 1}], AnchorNotFoundError),
        ([{"op": "set_key", "file": "absent.json", "key": "width", "value": 1}], AnchorNotFoundError),
        ([{"op": "set_key", "file": "config.yaml", "key": "act", "scale": 2.0}], PatchConflictError),
    ],
)
def test_failed_patch_leaves_workspace_pristine(mgr, base, patch, error):
    snap = mgr.snapshot(base)
    ws = mgr.create_workspace(snap, None)
    good = {"op": "set_key", "file": "hparams.json", "key": "width", "value": 1}
    with pytest.raises(error):
        mgr.apply_mutation(ws, [PatchOp.from_dict(good)] + [PatchOp.from_dict(p) for p in patch])
    assert tree_digests(ws.path) == snap.digests()
    assert ws.state is WsState.CREATED


def test_lifecycle_is_enforced(mgr, base, tmp_path):
    snap = mgr.snapshot(base)
    ws = mgr.create_workspace(snap, None)
    with pytest.raises(WorkspaceStateError):
        mgr.harvest(ws, tmp_path / "archive")
    with pytest.raises(WorkspaceStateError):
        mgr.mark_executed(ws)
    mgr.apply_mutation(ws, [])
    with pytest.raises(WorkspaceStateError):
        mgr.apply_mutation(ws, [])
    mgr.mark_executed(ws)
    (ws.path / "ablate_metrics.json").write_text("{}")
    ws.logs["stdout.log"] = "hello"
    bundle = mgr.harvest(ws, tmp_path / "archive", ["ablate_metrics.json", "hparams.json"])
    assert bundle.artifacts == ["ablate_metrics.json"]  # unchanged files are not artifacts
    assert (bundle.path / "logs" / "stdout.log").read_text() == "hello"
    mgr.destroy(ws)
    mgr.destroy(ws)
    assert not ws.path.exists()
    with pytest.raises(WorkspaceStateError):
        mgr.apply_mutation(ws, [])


def test_harvest_warns_without_artifacts(mgr, base, tmp_path):
    ws = mgr.create_workspace(mgr.snapshot(base), None)
    mgr.mark_executed(mgr.apply_mutation(ws, []))
    assert mgr.harvest(ws, tmp_path / "a", ["*.ckpt"]).warnings


def test_workspace_collision(mgr, base):
    snap = mgr.snapshot(base)
    mgr.create_workspace(snap, None, workspace_id="same")
    with pytest.raises(WorkspaceCollisionError):
        mgr.create_workspace(snap, None, workspace_id="same")


def test_render_patch_fills_templates():
    comp = Component(
        "enc",
        "Encoder",
        "enc",
        allowed_mutations=(MutationSpec(SCALE, factors=(0.5,)), MutationSpec(REPLACE, alternatives=("mlp",))),
        patches={
            SCALE: [{"op": "set_key", "file": "h.json", "key": "width", "scale": "{factor}"}],
            REPLACE: [{"op": "set_key", "file": "h.json", "key": "{component}_kind", "value": "{alternative}"}],
        },
    )
    space = ComponentSpace((comp,), {"enc": 1.0})
    scale = render_patch(space, CandidateSpec(("enc",), (Mutation(SCALE, 0.5),), "enc"))
    repl = render_patch(space, CandidateSpec(("enc",), (Mutation(REPLACE, "mlp"),), "enc"))
    assert scale == [PatchOp("set_key", "h.json", key="width", scale=0.5)]
    assert repl == [PatchOp("set_key", "h.json", key="enc_kind", value="mlp")]
    assert render_patch(space, CandidateSpec(("enc",), (Mutation(TOGGLE),), "enc")) == []


KEYS = ["width", "use_attn", "lr", "missing"]


@st.composite
def patches(draw):
    ops = []
    for _ in range(draw(st.integers(0, 4))):
        key = draw(st.sampled_from(KEYS))
        ops.append({"op": "set_key", "file": "hparams.json", "key": key, "value": draw(st.integers(0, 99))})
    return ops


@settings(max_examples=40, deadline=None)
@given(patches())
def test_same_patch_gives_same_diff(tmp_path_factory, patch):
    tmp = tmp_path_factory.mktemp("pure")
    base = tmp / "b"
    base.mkdir()
    (base / "hparams.json").write_text('{\n  "width": 128,\n  "use_attn": true,\n  "lr": 0.001\n}\n')
    mgr = WorkspaceManager(tmp / "s")
    snap = mgr.snapshot(base)
    results = []
    for i in range(2):
        ws = mgr.create_workspace(snap, None, workspace_id=f"w{i}")
        try:
            mgr.apply_mutation(ws, [PatchOp.from_dict(p) for p in patch])
            results.append((ws.applied_patch, tree_digests(ws.path)))
        except AnchorNotFoundError:
            results.append(("failed", tree_digests(ws.path)))
    assert results[0] == results[1]


ACTIONS = ["apply", "execute", "harvest", "destroy"]
ORDER = {"apply": WsState.CREATED, "execute": WsState.MUTATED, "harvest": WsState.EXECUTED}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(ACTIONS), max_size=8))
def test_state_machine_rejects_out_of_order_ops(tmp_path_factory, actions):
    tmp = tmp_path_factory.mktemp("sm")
    (tmp / "b").mkdir()
    (tmp / "b" / "f.txt").write_text("x\n")
    mgr = WorkspaceManager(tmp / "s")
    ws = mgr.create_workspace(mgr.snapshot(tmp / "b"), None)
    for action in actions:
        before = ws.state
        if action == "destroy":
            mgr.destroy(ws)
            assert ws.state is WsState.DESTROYED
            continue
        allowed = ORDER[action] is before
        try:
            if action == "apply":
                mgr.apply_mutation(ws, [])
            elif action == "execute":
                mgr.mark_executed(ws)
            else:
                mgr.harvest(ws, tmp / "archive")
            assert allowed
            assert ws.state == before + 1
        except WorkspaceStateError:
            assert not allowed
            assert ws.state is before


def test_neighbour_isolation_random(tmp_path, base):
    mgr = WorkspaceManager(tmp_path / "store")
    snap = mgr.snapshot(base)
    a = mgr.create_workspace(snap, None, workspace_id="a")
    b = mgr.create_workspace(snap, None, workspace_id="b")
    rng = random.Random(3)
    before = tree_digests(b.path)
    mgr.apply_mutation(a, [op(op="set_key", file="hparams.json", key="width", value=rng.randrange(1000))])
    assert tree_digests(b.path) == before == snap.digests()
    assert tree_digests(base) == snap.digests()
