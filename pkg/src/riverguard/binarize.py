"""Rewrite a tree so that every node has at most two children.

Extra children are pushed down a chain of zero-reward dummy nodes, each hung
from its parent by an edge whose only action costs nothing and passes with
probability exactly 1. Values of policies are unchanged by the rewrite.
"""

from __future__ import annotations

from typing import Dict, List, Tuple

from .model import Action, Edge, InstanceError, NetworkInstance, NodeId, ParamVector, Policy, validate

DUMMY_ACTIONS = (Action(0.0, 1.0, 1.0),)


def binarize(instance: NetworkInstance) -> Tuple[NetworkInstance, Dict[NodeId, NodeId]]:
    """Return ``(binary_instance, mapping)``.

    ``mapping`` sends every node of the binary instance to a node of the input:
    original nodes map to themselves, dummies map to the node they were split
    from. Already-binary instances are returned unchanged.
    """
    problems = validate(instance)
    if problems:
        raise InstanceError(problems)
    mapping = {v: v for v in instance.rewards}
    if instance.is_binary():
        return instance, mapping

    taken = set(instance.rewards)
    rewards = dict(instance.rewards)
    dummies = set(instance.dummies)
    edges: List[Edge] = []

    def fresh(base: NodeId) -> NodeId:
        k = 0
        while f"{base}~{k}" in taken:
            k += 1
        name = f"{base}~{k}"
        taken.add(name)
        return name

    for u in instance.preorder:
        kids = instance.children[u]
        top = u
        rest = list(kids)
        while len(rest) > 2:
            first = rest.pop(0)
            edges.append(Edge(top, first, instance.edge_of[first].actions))
            d = fresh(u)
            rewards[d] = 0.0
            dummies.add(d)
            mapping[d] = u
            edges.append(Edge(top, d, DUMMY_ACTIONS))
            top = d
        for c in rest:
            edges.append(Edge(top, c, instance.edge_of[c].actions))

    out = NetworkInstance(instance.root, rewards, tuple(edges), instance.budget, frozenset(dummies))
    return out, mapping


def lift_policy(binary: NetworkInstance, policy: Policy) -> Policy:
    """Extend a policy of the original instance with null actions on dummy edges."""
    lifted = dict(policy)
    for e in binary.edges:
        if e.child in binary.dummies:
            lifted[e.child] = 0
    return lifted


def lift_params(binary: NetworkInstance, params: ParamVector) -> ParamVector:
    lifted = dict(params)
    for e in binary.edges:
        if e.child in binary.dummies:
            lifted[e.child] = (1.0,)
    return lifted


def project_policy(binary: NetworkInstance, policy: Policy) -> Policy:
    return {v: a for v, a in policy.items() if v not in binary.dummies}


def project_params(binary: NetworkInstance, params: ParamVector) -> ParamVector:
    return {v: p for v, p in params.items() if v not in binary.dummies}
