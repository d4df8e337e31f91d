"""River networks as rooted trees of barriers with interval passage probabilities.

A node is a contiguous river region carrying a habitat reward. Every non-root
node has exactly one parent, so an edge is identified with its child node id.
Each edge carries an ordered action set; action 0 is "do nothing" and costs 0.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

NodeId = str
Policy = Dict[NodeId, int]
ParamVector = Dict[NodeId, Tuple[float, ...]]


class InstanceError(ValueError):
    """Raised for malformed instances; ``violations`` lists every problem found."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Action:
    cost: float
    p_low: float
    p_high: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.p_low + self.p_high)


@dataclass(frozen=True)
class Edge:
    parent: NodeId
    child: NodeId
    actions: Tuple[Action, ...]


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Rooted tree with node rewards, per-edge action sets and a budget.

    Instances are never mutated. Derived structure (children lists, traversal
    orders) is computed lazily and cached, and assumes the instance is valid;
    call :func:`validate` first on untrusted input.
    """

    root: NodeId
    rewards: Mapping[NodeId, float]
    edges: Tuple[Edge, ...]
    budget: float
    dummies: frozenset = field(default_factory=frozenset)

    @cached_property
    def edge_of(self) -> Dict[NodeId, Edge]:
        return {e.child: e for e in self.edges}

    @cached_property
    def parent(self) -> Dict[NodeId, NodeId]:
        return {e.child: e.parent for e in self.edges}

    @cached_property
    def children(self) -> Dict[NodeId, List[NodeId]]:
        ch: Dict[NodeId, List[NodeId]] = {v: [] for v in self.rewards}
        for e in self.edges:
            ch[e.parent].append(e.child)
        return ch

    @cached_property
    def preorder(self) -> List[NodeId]:
        """Nodes in depth-first preorder from the root (children in edge order)."""
        order = []
        stack = [self.root]
        while stack:
            u = stack.pop()
            order.append(u)
            stack.extend(reversed(self.children[u]))
        return order

    @cached_property
    def postorder(self) -> List[NodeId]:
        # reversed preorder visits every child before its parent
        return self.preorder[::-1]

    @property
    def nodes(self) -> List[NodeId]:
        return list(self.rewards)

    @property
    def n_nodes(self) -> int:
        return len(self.rewards)

    def actions(self, edge: NodeId) -> Tuple[Action, ...]:
        return self.edge_of[edge].actions

    def is_binary(self) -> bool:
        return all(len(c) <= 2 for c in self.children.values())

    def with_budget(self, budget: float) -> "NetworkInstance":
        return NetworkInstance(self.root, dict(self.rewards), self.edges, budget, self.dummies)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "budget": self.budget,
            "nodes": [{"id": v, "reward": r} for v, r in self.rewards.items()],
            "edges": [
                {
                    "parent": e.parent,
                    "child": e.child,
                    "actions": [
                        {"cost": a.cost, "p_low": a.p_low, "p_high": a.p_high}
                        for a in e.actions
                    ],
                }
                for e in self.edges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def make_instance(
    root,
    rewards: Mapping,
    edges: Iterable[Tuple],
    budget: float,
) -> NetworkInstance:
    """Build an instance from plain Python data.

    ``edges`` holds ``(parent, child, [(cost, p_low, p_high), ...])`` tuples.
    Ids are coerced to ``str``. No validation is performed.
    """
    built = []
    for parent, child, acts in edges:
        built.append(
            Edge(str(parent), str(child), tuple(Action(float(c), float(lo), float(hi)) for c, lo, hi in acts))
        )
    return NetworkInstance(
        root=str(root),
        rewards={str(v): float(r) for v, r in rewards.items()},
        edges=tuple(built),
        budget=float(budget),
    )


def instance_from_dict(data: Mapping) -> NetworkInstance:
    """Parse the JSON instance format, raising :class:`InstanceError` on any violation."""
    problems = []
    for key in ("root", "budget", "nodes", "edges"):
        if key not in data:
            problems.append(f"missing top-level key '{key}'")
    if problems:
        raise InstanceError(problems)
    try:
        rewards: Dict[NodeId, float] = {}
        for node in data["nodes"]:
            nid = str(node["id"])
            if nid in rewards:
                problems.append(f"duplicate node id {nid}")
            rewards[nid] = float(node["reward"])
        edges = []
        for e in data["edges"]:
            acts = tuple(
                Action(float(a["cost"]), float(a["p_low"]), float(a["p_high"])) for a in e["actions"]
            )
            edges.append(Edge(str(e["parent"]), str(e["child"]), acts))
        inst = NetworkInstance(str(data["root"]), rewards, tuple(edges), float(data["budget"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError([f"malformed instance data: {exc!r}"]) from exc
    problems.extend(validate(inst))
    if problems:
        raise InstanceError(problems)
    return inst


def load_instance(path) -> NetworkInstance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError([f"{path}: invalid JSON ({exc})"]) from exc
    return instance_from_dict(data)


def validate(instance: NetworkInstance) -> List[str]:
    """Return every violated instance invariant; an empty list means valid."""
    out: List[str] = []
    nodes = set(instance.rewards)
    root = instance.root

    if root not in nodes:
        out.append(f"root {root} is not a node")
    if not math.isfinite(instance.budget) or instance.budget < 0:
        out.append(f"budget must be a nonnegative number, got {instance.budget}")
    for v, r in instance.rewards.items():
        if not math.isfinite(r) or r < 0:
            out.append(f"negative or non-finite reward at {v}")
    if root in nodes and not instance.rewards[root] > 0:
        out.append(f"root reward must be positive (root {root})")

    parents: Dict[NodeId, NodeId] = {}
    children: Dict[NodeId, List[NodeId]] = {v: [] for v in nodes}
    into_root = []
    for e in instance.edges:
        tag = f"({e.parent},{e.child})"
        if e.parent not in nodes or e.child not in nodes:
            out.append(f"edge {tag} references an unknown node")
            continue
        if e.child in parents:
            out.append(f"node {e.child} has multiple parents")
        else:
            parents[e.child] = e.parent
        children[e.parent].append(e.child)
        if e.child == root:
            into_root.append((e.parent, tag))
        if not e.actions:
            out.append(f"edge {tag} has no actions")
            continue
        if e.actions[0].cost != 0:
            out.append(f"null action on {tag} must have cost 0")
        for i, a in enumerate(e.actions):
            if not math.isfinite(a.cost) or a.cost < 0:
                out.append(f"negative cost on {tag} action {i}")
            if not (0.0 <= a.p_low <= 1.0 and 0.0 <= a.p_high <= 1.0):
                out.append(f"probability outside [0,1] on {tag} action {i}")
            if a.p_low > a.p_high:
                out.append(f"inverted interval on {tag} action {i}")

    # cycles reachable from the root show up as back edges of a DFS
    seen = set()
    if root in nodes:
        on_stack = set()
        stack = [(root, iter(children[root]))]
        seen.add(root)
        on_stack.add(root)
        while stack:
            u, it = stack[-1]
            w = next(it, None)
            if w is None:
                stack.pop()
                on_stack.discard(u)
                continue
            if w in on_stack:
                out.append(f"cycle detected at {u}")
            elif w not in seen:
                seen.add(w)
                on_stack.add(w)
                stack.append((w, iter(children[w])))
    # an edge into the root from a reachable node was already reported as a cycle
    out.extend(f"root {root} has an incoming edge {tag}" for u, tag in into_root if u not in seen)
    for v in sorted(nodes - seen):
        out.append(f"node {v} unreachable from root")
    return out


# -- evaluation --------------------------------------------------------

def _prob(instance: NetworkInstance, params: ParamVector, policy: Policy, v: NodeId) -> float:
    try:
        a = policy[v]
    except KeyError:
        raise KeyError(f"policy has no action for edge {v}") from None
    return params[v][a]


def accessibilities(instance: NetworkInstance, policy: Policy, params: ParamVector) -> Dict[NodeId, float]:
    """Probability of reaching every node from the root under ``policy``."""
    acc = {instance.root: 1.0}
    for v in instance.preorder[1:]:
        acc[v] = acc[instance.parent[v]] * _prob(instance, params, policy, v)
    return acc


def evaluate(instance: NetworkInstance, policy: Policy, params: ParamVector) -> float:
    """Accessibility-weighted total reward of ``policy`` under ``params``."""
    acc = accessibilities(instance, policy, params)
    return sum(instance.rewards[v] * acc[v] for v in instance.preorder)


def subtree_values(instance: NetworkInstance, policy: Policy, params: ParamVector) -> Dict[NodeId, float]:
    """Value of every subtree as if its top node were the root."""
    z: Dict[NodeId, float] = {}
    for u in instance.postorder:
        total = instance.rewards[u]
        for v in instance.children[u]:
            total += _prob(instance, params, policy, v) * z[v]
        z[u] = total
    return z


def policy_cost(instance: NetworkInstance, policy: Policy) -> float:
    return sum(instance.edge_of[v].actions[policy[v]].cost for v in instance.edge_of)


def is_feasible(instance: NetworkInstance, policy: Policy, slack: float = 1e-9) -> bool:
    return policy_cost(instance, policy) <= instance.budget + slack


def null_policy(instance: NetworkInstance) -> Policy:
    return {e.child: 0 for e in instance.edges}


def lower_params(instance: NetworkInstance) -> ParamVector:
    return {e.child: tuple(a.p_low for a in e.actions) for e in instance.edges}


def upper_params(instance: NetworkInstance) -> ParamVector:
    return {e.child: tuple(a.p_high for a in e.actions) for e in instance.edges}


def midpoint_params(instance: NetworkInstance) -> ParamVector:
    return {e.child: tuple(a.midpoint for a in e.actions) for e in instance.edges}


def params_within_intervals(instance: NetworkInstance, params: ParamVector, tol: float = 0.0) -> bool:
    for e in instance.edges:
        probs = params.get(e.child)
        if probs is None or len(probs) != len(e.actions):
            return False
        for a, p in zip(e.actions, probs):
            if not (a.p_low - tol <= p <= a.p_high + tol):
                return False
    return True


def policy_to_json(policy: Policy) -> dict:
    return {"policy": {v: int(a) for v, a in policy.items()}}


def policy_from_json(data: Mapping, instance: Optional[NetworkInstance] = None) -> Policy:
    """Accept ``{"policy": {...}}`` or a bare ``{edge: action}`` mapping."""
    raw = data.get("policy", data) if isinstance(data, Mapping) else data
    if not isinstance(raw, Mapping):
        raise InstanceError(["policy must be a JSON object mapping edge ids to action indices"])
    policy = {str(k): int(v) for k, v in raw.items()}
    if instance is not None:
        problems = []
        for e in instance.edges:
            if e.child not in policy:
                problems.append(f"policy has no action for edge {e.child}")
            elif not 0 <= policy[e.child] < len(e.actions):
                problems.append(f"policy action {policy[e.child]} invalid on edge {e.child}")
        extra = set(policy) - set(instance.edge_of)
        problems.extend(f"policy names unknown edge {k}" for k in sorted(extra))
        if problems:
            raise InstanceError(problems)
    return policy


def params_to_json(params: ParamVector) -> dict:
    return {v: {str(i): p for i, p in enumerate(probs)} for v, probs in params.items()}


def params_from_json(data: Mapping) -> ParamVector:
    out: ParamVector = {}
    for v, probs in data.items():
        if isinstance(probs, Mapping):
            out[str(v)] = tuple(float(probs[str(i)]) for i in range(len(probs)))
        else:
            out[str(v)] = tuple(float(p) for p in probs)
    return out


def chain_depths(instance: NetworkInstance) -> Dict[NodeId, int]:
    depth = {instance.root: 0}
    q = deque([instance.root])
    while q:
        u = q.popleft()
        for v in instance.children[u]:
            depth[v] = depth[u] + 1
            q.append(v)
    return depth
