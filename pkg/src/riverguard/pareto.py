"""Exact (value, cost) Pareto-frontier DP for a single parameter setting.

For every subtree the DP keeps all policies that are not beaten on both
value and cost. This solves the budgeted point problem exactly and provides
the per-subtree budget/value curves used as branch-and-bound bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .model import NetworkInstance, NodeId, ParamVector, Policy

BUDGET_SLACK = 1e-9


def pareto_filter(val: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Indices of the non-dominated points, ordered by increasing cost.

    A point survives iff no other point has cost <= and value >= with one of
    them strict. Among exact duplicates the earliest index survives.
    """
    if val.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(val.size), -val, cost))
    v = val[order]
    best_before = np.maximum.accumulate(np.concatenate(([-np.inf], v[:-1])))
    return order[v > best_before]


@dataclass
class Frontier:
    cost: np.ndarray
    value: np.ndarray

    def best_within(self, budget: float) -> float:
        """Largest value reachable with cost <= budget (frontier sorted by cost)."""
        k = np.searchsorted(self.cost, budget + BUDGET_SLACK, side="right") - 1
        return float(self.value[k])


class PointDP:
    """Frontier DP over ``instance`` for fixed ``params`` and a budget cap.

    After construction ``node_frontier[v]`` is the frontier of subtree ``v``
    and ``edge_frontier[v]`` the frontier of edge ``(parent(v), v)`` together
    with the subtree below it, i.e. values already multiplied by the edge's
    passage probability.
    """

    def __init__(self, instance: NetworkInstance, params: ParamVector, budget: float | None = None):
        self.instance = instance
        self.budget = instance.budget if budget is None else budget
        cap = self.budget + BUDGET_SLACK
        self.node_frontier: Dict[NodeId, Frontier] = {}
        self.edge_frontier: Dict[NodeId, Frontier] = {}
        # backpointers: per edge (action, child index); per node one merge step per child
        self._edge_bp: Dict[NodeId, Tuple[np.ndarray, np.ndarray]] = {}
        self._merge_bp: Dict[NodeId, List[Tuple[np.ndarray, np.ndarray]]] = {}

        for u in instance.postorder:
            val = np.array([instance.rewards[u]])
            cost = np.zeros(1)
            steps = []
            for c in instance.children[u]:
                ef = self._edge(c, params[c], cap)
                tv = (val[:, None] + ef.value[None, :]).ravel()
                tc = (cost[:, None] + ef.cost[None, :]).ravel()
                ok = np.flatnonzero(tc <= cap)
                keep = ok[pareto_filter(tv[ok], tc[ok])]
                left, right = np.divmod(keep, ef.value.size)
                steps.append((left, right))
                val, cost = tv[keep], tc[keep]
            self._merge_bp[u] = steps
            self.node_frontier[u] = Frontier(cost, val)

    def _edge(self, c: NodeId, probs, cap: float) -> Frontier:
        child = self.node_frontier[c]
        acts = self.instance.edge_of[c].actions
        pa = np.asarray(probs, dtype=float)
        ca = np.array([a.cost for a in acts])
        tv = (pa[:, None] * child.value[None, :]).ravel()
        tc = (ca[:, None] + child.cost[None, :]).ravel()
        ok = np.flatnonzero(tc <= cap)
        keep = ok[pareto_filter(tv[ok], tc[ok])]
        act, idx = np.divmod(keep, child.value.size)
        self._edge_bp[c] = (act, idx)
        f = Frontier(tc[keep], tv[keep])
        self.edge_frontier[c] = f
        return f

    def best(self) -> Tuple[float, float, Policy]:
        """Optimal (value, cost, policy); ties in value go to the cheaper policy."""
        root = self.node_frontier[self.instance.root]
        # frontier values strictly increase with cost, so the last entry is the
        # highest value and the cheapest policy attaining it
        k = root.value.size - 1
        return float(root.value[k]), float(root.cost[k]), self.policy_at(self.instance.root, k)

    def policy_at(self, u: NodeId, k: int) -> Policy:
        policy: Policy = {}
        stack = [(u, k)]
        while stack:
            node, idx = stack.pop()
            steps = self._merge_bp[node]
            kids = self.instance.children[node]
            for c, (left, right) in zip(reversed(kids), reversed(steps)):
                e_idx = int(right[idx])
                idx = int(left[idx])
                act, child_idx = self._edge_bp[c]
                policy[c] = int(act[e_idx])
                stack.append((c, int(child_idx[e_idx])))
        return policy


def solve_point_policy(instance: NetworkInstance, params: ParamVector) -> Policy:
    return PointDP(instance, params).best()[2]
