"""Decision optimization against a finite set of adversary scenarios.

Finds the budget-feasible policy maximizing the worst ratio (or minimizing the
worst regret) over the scenarios by depth-first branch-and-bound. Edges are
assigned root-first, so the unassigned edges always form whole subtrees
hanging from nodes whose accessibility is known. Each scenario is bounded
with exact per-subtree (value, cost) frontiers evaluated at the remaining
budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .adversary import RATIO, OBJECTIVES
from .model import (
    NetworkInstance,
    ParamVector,
    Policy,
    chain_depths,
    evaluate,
    null_policy,
    params_from_json,
    params_to_json,
    policy_cost,
)
from ._bnb import search
from .pareto import PointDP


@dataclass
class Scenario:
    policy: Policy
    params: ParamVector
    value: float

    def key(self):
        return (tuple(sorted(self.policy.items())), tuple(sorted(self.params.items())))

    def to_dict(self) -> dict:
        return {"policy": dict(self.policy), "params": params_to_json(self.params), "value": self.value}


class ScenarioSet:
    """Ordered, duplicate-free list of adversary (policy, parameters) pairs.

    Each scenario stores the adversary's own value, the constant denominator
    of the ratio. Point-problem frontiers are cached per scenario so repeated
    master solves on a growing set only pay for the new scenarios.
    """

    def __init__(self, instance: NetworkInstance, scenarios: Sequence[Scenario] = ()):
        self.instance = instance
        self.scenarios: List[Scenario] = []
        self._keys = set()
        self._dp: List[Optional[PointDP]] = []
        for s in scenarios:
            self.add(s.policy, s.params, s.value)

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    def __getitem__(self, k) -> Scenario:
        return self.scenarios[k]

    def __contains__(self, pair) -> bool:
        policy, params = pair
        return Scenario(policy, params, 0.0).key() in self._keys

    def add(self, policy: Policy, params: ParamVector, value: Optional[float] = None) -> bool:
        """Append a scenario; returns False (and changes nothing) for a duplicate."""
        z = evaluate(self.instance, policy, params)
        if value is not None and abs(value - z) > 1e-9 * max(1.0, abs(z)):
            raise ValueError(f"stored scenario value {value} does not match recomputed {z}")
        if not z > 0:
            raise ValueError("scenario value must be positive")
        s = Scenario(dict(policy), dict(params), z)
        k = s.key()
        if k in self._keys:
            return False
        self._keys.add(k)
        self.scenarios.append(s)
        self._dp.append(None)
        return True

    def point_dp(self, k: int) -> PointDP:
        if self._dp[k] is None:
            self._dp[k] = PointDP(self.instance, self.scenarios[k].params)
        return self._dp[k]

    def to_json(self) -> str:
        return json.dumps({"scenarios": [s.to_dict() for s in self.scenarios]}, indent=2)

    @classmethod
    def from_data(cls, instance: NetworkInstance, data) -> "ScenarioSet":
        """Accept a list of scenarios or any object with a ``"scenarios"`` list."""
        items = data["scenarios"] if isinstance(data, dict) else data
        out = cls(instance)
        for item in items:
            policy = {str(k): int(v) for k, v in item["policy"].items()}
            out.add(policy, params_from_json(item["params"]), item.get("value"))
        return out


@dataclass
class MasterResult:
    policy: Policy
    value: float
    scenario_values: List[float]
    cost: float
    nodes: int = 0
    # earlier incumbents of the search, most recent first (only when requested)
    runners_up: List[Policy] = field(default_factory=list)


def scenario_scores(objective: str, values: Sequence[float], scenarios: ScenarioSet) -> List[float]:
    """Per-scenario ratio, or per-scenario regret, of a decision with the given values."""
    if objective == RATIO:
        return [z / s.value for z, s in zip(values, scenarios)]
    return [s.value - z for z, s in zip(values, scenarios)]


def master_value(objective: str, instance: NetworkInstance, policy: Policy, scenarios: ScenarioSet):
    values = [evaluate(instance, policy, s.params) for s in scenarios]
    scores = scenario_scores(objective, values, scenarios)
    return (min(scores) if objective == RATIO else max(scores)), values


class _Search:
    def __init__(self, instance: NetworkInstance, scenarios: ScenarioSet, objective: str):
        self.inst = instance
        self.objective = objective
        K = len(scenarios)
        nodes = instance.preorder
        self.node_idx = {v: i for i, v in enumerate(nodes)}
        rewards = np.array([instance.rewards[v] for v in nodes])

        # branching order: heavy subtrees first; parents always precede children
        mass = {}
        for u in instance.postorder:
            mass[u] = instance.rewards[u] + sum(mass[c] for c in instance.children[u])
        depth = chain_depths(instance)
        pos = {e.child: k for k, e in enumerate(instance.edges)}
        self.order = sorted(instance.edge_of, key=lambda v: (-mass[v], depth[v], pos[v]))
        E = len(self.order)
        self.edge_idx = {v: k for k, v in enumerate(self.order)}
        self.child_node = np.array([self.node_idx[v] for v in self.order], dtype=np.int64)
        self.parent_node = np.array([self.node_idx[instance.parent[v]] for v in self.order], dtype=np.int64)
        self.reward_of_edge = rewards[self.child_node] if E else np.zeros(0)
        self.sub_edges = [
            np.array([self.edge_idx[c] for c in instance.children[v]], dtype=np.int64) for v in self.order
        ]
        self.root_edges = np.array([self.edge_idx[c] for c in instance.children[instance.root]], dtype=np.int64)
        self.action_order = []
        self.costs = []
        self.probs = []  # per edge: K x n_actions
        for v in self.order:
            acts = instance.edge_of[v].actions
            self.costs.append(np.array([a.cost for a in acts]))
            self.action_order.append(sorted(range(len(acts)), key=lambda i: (-acts[i].p_high, acts[i].cost, i)))
            self.probs.append(np.array([[s.params[v][i] for i in range(len(acts))] for s in scenarios]).reshape(K, len(acts)))
        nonnull = [min((a.cost for a in instance.edge_of[v].actions[1:]), default=np.inf) for v in self.order]
        self.suffix_min_cost = np.minimum.accumulate(np.array(nonnull + [np.inf])[::-1])[::-1]

        # per-edge frontiers of every scenario, padded to a common length
        frontiers = [[scenarios.point_dp(k).edge_frontier[v] for v in self.order] for k in range(K)]
        width = max((len(f.cost) for row in frontiers for f in row), default=1)
        self.f_cost = np.full((K, E, width), np.inf)
        f_value = np.zeros((K, E, width))
        for k, row in enumerate(frontiers):
            for e, f in enumerate(row):
                self.f_cost[k, e, : len(f.cost)] = f.cost
                f_value[k, e, : len(f.value)] = f.value
                f_value[k, e, len(f.value):] = f.value[-1]
        self.g0 = f_value[:, :, 0]
        self.f_gain = f_value - self.g0[:, :, None]
        # best gain per unit cost among the first j frontier points
        with np.errstate(divide="ignore", invalid="ignore"):
            per_cost = np.where(np.isfinite(self.f_cost) & (self.f_cost > 0), self.f_gain / self.f_cost, 0.0)
        per_cost[:, :, 0] = 0.0
        self.f_rate = np.maximum.accumulate(per_cost, axis=2)
        self.rewards = rewards
        denom = np.array([s.value for s in scenarios])
        if objective == RATIO:
            self.offset, self.scale = np.zeros(K), denom
        else:
            self.offset, self.scale = denom, np.ones(K)
        self.K, self.E = K, E
        self.nodes = 0
        # scenarios per node that get the exact subforest knapsack bound; large
        # sets leave the cheap bound weaker, so more knapsacks pay for themselves
        self.tight = max(2, K // 16)

        # flat views for the compiled search
        width_a = max((len(c) for c in self.costs), default=1)
        self.n_act = np.array([len(c) for c in self.costs], dtype=np.int64)
        self.act_order_arr = np.zeros((E, width_a), dtype=np.int64)
        self.cost_arr = np.full((E, width_a), np.inf)
        self.prob_arr = np.zeros((K, E, width_a))
        for t in range(E):
            n = len(self.costs[t])
            self.act_order_arr[t, :n] = self.action_order[t]
            self.cost_arr[t, :n] = self.costs[t]
            self.prob_arr[:, t, :n] = self.probs[t]
        self.sub_ptr = np.zeros(E + 1, dtype=np.int64)
        self.sub_ptr[1:] = np.cumsum([len(x) for x in self.sub_edges])
        self.sub_idx = np.concatenate(self.sub_edges + [np.zeros(0, dtype=np.int64)]).astype(np.int64)
        # summation order of policy_cost and element order of the tie-break key
        self.cost_pos = np.array([self.edge_idx[v] for v in instance.edge_of], dtype=np.int64)
        self.key_pos = np.array([self.edge_idx[e.child] for e in instance.edges], dtype=np.int64)

    def run(self, incumbent: Policy, value: float, keep: int = 0) -> Tuple[Policy, float, List[Policy]]:
        """Branch and bound from an incumbent.

        Returns the best policy, its score, and up to ``keep`` earlier
        incumbents found on the way, most recent first.
        """
        actions = np.array([incumbent[v] for v in self.order], dtype=np.int64)
        history = np.zeros((keep + 1 if keep else 0, self.E), dtype=np.int64)
        best, self.nodes, found = search(
            self.node_idx[self.inst.root], float(self.inst.budget), self.rewards, self.child_node,
            self.parent_node, self.sub_ptr, self.sub_idx, self.root_edges, self.n_act, self.act_order_arr,
            self.cost_arr, self.prob_arr, np.ascontiguousarray(self.g0), self.f_cost, self.f_gain, self.f_rate,
            self.suffix_min_cost, self.offset, self.scale, self.cost_pos, self.key_pos, float(value), actions,
            self.tight, history,
        )
        policy = {v: int(actions[t]) for t, v in enumerate(self.order)}
        earlier = []
        # the newest entry is the final incumbent itself
        for j in range(2, min(found, len(history)) + 1):
            row = history[(found - j) % len(history)]
            earlier.append({v: int(row[t]) for t, v in enumerate(self.order)})
        return policy, float(best), earlier

    def values(self, policy: Policy) -> np.ndarray:
        """Value of ``policy`` under every scenario."""
        acc = np.zeros((self.K, len(self.rewards)))
        acc[:, self.node_idx[self.inst.root]] = 1.0
        for t, v in enumerate(self.order):
            acc[:, self.child_node[t]] = acc[:, self.parent_node[t]] * self.probs[t][:, policy[v]]
        return acc @ self.rewards

    def score(self, z: np.ndarray) -> float:
        return float(np.min((z - self.offset) / self.scale))


def _tie_key(instance: NetworkInstance, policy: Policy):
    return (policy_cost(instance, policy), tuple(policy[e.child] for e in instance.edges))


def solve_master(
    instance: NetworkInstance, scenarios: ScenarioSet, objective: str = RATIO, *, runners_up: int = 0
) -> MasterResult:
    """Exact max-min ratio (or min-max regret) policy against ``scenarios``.

    ``runners_up`` asks for up to that many of the incumbents the search
    replaced on its way to the optimum; they are good but not optimal policies.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if len(scenarios) == 0:
        raise ValueError("scenario set is empty")
    if scenarios.instance is not instance:
        scenarios = ScenarioSet(instance, list(scenarios))
    S = _Search(instance, scenarios, objective)
    inst = instance

    def as_score(policy: Policy) -> float:
        return S.score(S.values(policy))

    # starting incumbents: doing nothing, and the best policy for each single scenario
    best_policy = null_policy(inst)
    best = as_score(best_policy)
    best_key = _tie_key(inst, best_policy)
    candidates = [scenarios.point_dp(k).best()[2] for k in range(len(scenarios))]

    def offer(policy: Policy, value: float):
        nonlocal best, best_policy, best_key
        tol = 1e-12 * max(1.0, abs(best))
        if value > best + tol:
            best, best_policy, best_key = value, policy, _tie_key(inst, policy)
        elif value >= best - tol:
            key = _tie_key(inst, policy)
            if key < best_key:
                best, best_policy, best_key = max(best, value), policy, key

    for p in candidates:
        offer(p, as_score(p))

    best_policy, _, earlier = S.run(best_policy, best, runners_up)
    value, values = master_value(objective, inst, best_policy, scenarios)
    return MasterResult(best_policy, value, values, policy_cost(inst, best_policy), S.nodes, earlier)
