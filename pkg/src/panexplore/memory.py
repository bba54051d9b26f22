"""Selection-tree memory of branch decisions and DFS-style recovery."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ContractError
from .worldsim import Pose

ROOT = -1


@dataclass
class DecisionNode:
    node_id: int
    pose: Pose
    available_ids: tuple[int, ...]
    chosen_id: int
    resolved_ids: set[int]
    parent: int = ROOT

    @property
    def exhausted(self) -> bool:
        return self.resolved_ids >= set(self.available_ids)

    def unresolved(self) -> list[int]:
        return [i for i in self.available_ids if i not in self.resolved_ids]

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "parent": self.parent,
            "available": list(self.available_ids),
            "resolved": sorted(self.resolved_ids),
            "chosen": self.chosen_id,
            "pose": {"position": list(self.pose.position), "yaw": self.pose.yaw},
        }


@dataclass(frozen=True)
class BacktrackTarget:
    node_id: int
    alternatives: tuple[int, ...]
    hops: int


@dataclass
class SelectionTree:
    nodes: dict[int, DecisionNode] = field(default_factory=dict)
    current: int = ROOT
    _next_id: int = 0

    def node(self, node_id: int) -> DecisionNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ContractError(f"unknown decision node {node_id}") from None

    def ancestors(self, start: int | None = None) -> Iterable[DecisionNode]:
        """Nodes from ``start`` (default: current) up to the root, nearest first."""
        nid = self.current if start is None else start
        while nid != ROOT:
            n = self.nodes[nid]
            yield n
            nid = n.parent

    def set_current(self, node_id: int) -> None:
        if node_id != ROOT:
            self.node(node_id)
        self.current = node_id

    def to_json(self) -> str:
        return json.dumps({"current": self.current,
                           "nodes": [self.nodes[k].to_dict() for k in sorted(self.nodes)]},
                          sort_keys=True)


def record_decision(tree: SelectionTree, pose: Pose, available_ids: Iterable[int],
                    chosen_id: int) -> int:
    available = tuple(available_ids)
    if chosen_id not in available:
        raise ContractError(f"chosen frontier {chosen_id} is not among {available}")
    nid = tree._next_id
    tree._next_id += 1
    tree.nodes[nid] = DecisionNode(nid, pose, available, chosen_id, {chosen_id}, tree.current)
    tree.current = nid
    return nid


def mark_resolved(tree: SelectionTree, node_id: int, frontier_id: int) -> SelectionTree:
    node = tree.node(node_id)
    if frontier_id not in node.available_ids:
        raise ContractError(f"frontier {frontier_id} was not offered at node {node_id}")
    node.resolved_ids.add(frontier_id)
    return tree


def resolve_everywhere(tree: SelectionTree, frontier_id: int) -> None:
    """Mark ``frontier_id`` consumed at every node that offered it."""
    for node in tree.nodes.values():
        if frontier_id in node.available_ids:
            node.resolved_ids.add(frontier_id)


def backtrack_target(tree: SelectionTree, live_frontier_ids: Iterable[int]) -> BacktrackTarget | None:
    """Nearest ancestor (current included) with an unresolved, still-live alternative.

    Unresolved IDs that are no longer live were mapped incidentally; they are
    marked resolved on the way up.  ``None`` means exploration is complete as
    far as the tree is concerned.
    """
    live = set(live_frontier_ids)
    for hops, node in enumerate(tree.ancestors()):
        alts = []
        for fid in node.unresolved():
            if fid in live:
                alts.append(fid)
            else:
                node.resolved_ids.add(fid)
        if alts:
            return BacktrackTarget(node.node_id, tuple(alts), hops)
    return None
