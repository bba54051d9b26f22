from __future__ import annotations

import copy
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panexplore.errors import ContractError
from panexplore.memory import (ROOT, SelectionTree, backtrack_target, mark_resolved, record_decision,
                               resolve_everywhere)
from panexplore.worldsim import Pose

P = Pose((0.5, 0.5, 0.5))


def test_first_and_chained_decisions():
    t = SelectionTree()
    a = record_decision(t, P, [5, 7, 9], 7)
    assert t.node(a).parent == ROOT and t.node(a).resolved_ids == {7}
    b = record_decision(t, P, [1, 2], 1)
    assert t.node(b).parent == a and t.current == b
    assert (a, b) == (0, 1)


def test_record_rejects_foreign_choice():
    with pytest.raises(ContractError):
        record_decision(SelectionTree(), P, [1, 2], 3)


def test_mark_resolved_exhausts_and_is_idempotent():
    t = SelectionTree()
    n = record_decision(t, P, [5, 7], 7)
    assert not t.node(n).exhausted
    mark_resolved(t, n, 7)
    assert t.node(n).resolved_ids == {7}
    mark_resolved(t, n, 5)
    assert t.node(n).exhausted
    with pytest.raises(ContractError):
        mark_resolved(t, 42, 5)
    with pytest.raises(ContractError):
        mark_resolved(t, n, 6)


def test_backtrack_examples():
    t = SelectionTree()
    a = record_decision(t, P, [1, 2], 1)
    target = backtrack_target(t, {2})
    assert (target.node_id, target.alternatives, target.hops) == (a, (2,), 0)
    b = record_decision(t, P, [3, 4], 3)
    mark_resolved(t, b, 4)
    target = backtrack_target(t, {2, 3, 4})
    assert (target.node_id, target.hops) == (a, 1)
    mark_resolved(t, a, 2)
    assert backtrack_target(t, {2, 3, 4}) is None


def test_stale_alternatives_are_auto_resolved():
    t = SelectionTree()
    a = record_decision(t, P, [1, 2, 3], 1)
    assert backtrack_target(t, {3}).alternatives == (3,)
    assert t.node(a).resolved_ids == {1, 2}
    assert backtrack_target(t, set()) is None
    assert t.node(a).exhausted


def test_resolve_everywhere():
    t = SelectionTree()
    a = record_decision(t, P, [1, 2], 1)
    b = record_decision(t, P, [2, 3], 3)
    resolve_everywhere(t, 2)
    assert t.node(a).exhausted and t.node(b).exhausted


def test_tree_dump():
    t = SelectionTree()
    record_decision(t, Pose((1, 2, 3), 0.5), [4, 5], 5)
    d = json.loads(t.to_json())
    assert d["current"] == 0
    assert d["nodes"] == [{"node_id": 0, "parent": ROOT, "available": [4, 5], "resolved": [5],
                           "chosen": 5, "pose": {"position": [1.0, 2.0, 3.0], "yaw": 0.5}}]


def oracle(parents, available, resolved, current, live):
    chain = []
    n = current
    while n != ROOT:
        chain.append(n)
        n = parents[n]
    for hops, n in enumerate(chain):
        alts = [i for i in available[n] if i not in resolved[n] and i in live]
        if alts:
            return n, tuple(alts), hops
    return None


ops = st.lists(st.tuples(st.sampled_from(["record", "jump", "resolve"]), st.integers(0, 1000),
                         st.lists(st.integers(0, 12), min_size=1, max_size=4, unique=True)),
               min_size=1, max_size=25)


@settings(max_examples=200)
@given(ops, st.sets(st.integers(0, 12)))
def test_backtrack_matches_ancestor_walk(script, live):
    t = SelectionTree()
    for op, k, ids in script:
        if op == "record":
            record_decision(t, P, ids, ids[k % len(ids)])
        elif op == "jump" and t.nodes:
            t.set_current(sorted(t.nodes)[k % len(t.nodes)])
        elif op == "resolve" and t.nodes:
            node = t.node(sorted(t.nodes)[k % len(t.nodes)])
            mark_resolved(t, node.node_id, node.available_ids[k % len(node.available_ids)])
    before = copy.deepcopy(t)
    parents = {n.node_id: n.parent for n in before.nodes.values()}
    available = {n.node_id: n.available_ids for n in before.nodes.values()}
    resolved = {n.node_id: set(n.resolved_ids) for n in before.nodes.values()}
    exhausted = {n.node_id for n in before.nodes.values() if n.exhausted}
    got = backtrack_target(t, live)
    want = oracle(parents, available, resolved, t.current, live)
    assert (None if got is None else (got.node_id, got.alternatives, got.hops)) == want
    # Acyclic: every parent walk terminates within the node count.
    for nid in t.nodes:
        assert len(list(t.ancestors(nid))) <= len(t.nodes)
    # Exhausted nodes stay exhausted; resolved sets only grow.
    for nid, node in t.nodes.items():
        assert node.resolved_ids >= resolved[nid]
        if nid in exhausted:
            assert node.exhausted
        assert node.chosen_id in node.resolved_ids
