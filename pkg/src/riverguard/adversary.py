"""Adversary optimization: worst-case (policy, parameter) pair for a fixed decision.

Given a decision policy, nature picks its own budget-feasible policy and a
passage probability inside every interval to minimize the ratio between the
decision's value and its own value (or to maximize the value difference).
Only interval endpoints need to be considered, and per edge only
``len(actions) + 1`` joint (action, endpoint) choices survive; see
:func:`gen_pp_actions`.

The tree DP keeps, for every subtree, a table mapping a pair of achievable
values (adversary value, decision value) to the cheapest adversary policy
reaching it. In rounded mode both values are snapped to a grid of width
``K_u`` before being used as keys (adversary down, decision up for the ratio),
which bounds the table size and yields a (1 + eps) approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from .binarize import binarize, lift_policy, project_params, project_policy
from .model import (
    Action,
    InstanceError,
    NetworkInstance,
    NodeId,
    ParamVector,
    Policy,
    evaluate,
    params_from_json,
    params_to_json,
    policy_cost,
)
from .pareto import BUDGET_SLACK

RATIO = "ratio"
REGRET = "regret"
OBJECTIVES = (RATIO, REGRET)
PRUNE_MODES = (None, "budget", "pareto", "hull")

# elements per cross-product chunk in combine_tables
CHUNK = 1 << 21


@dataclass(frozen=True)
class PPAction:
    """Joint adversary choice on one edge: its action and one probability per action."""

    adversary_action: int
    probs: Tuple[float, ...]


def gen_pp_actions(actions: Sequence[Action], decision_action: int) -> List[PPAction]:
    """The ``len(actions) + 1`` policy-parameter actions worth considering on an edge.

    When nature picks a different action than the decision, its own action
    sits at the upper bound and the decision's at the lower bound. When both
    pick the same action, either endpoint may be optimal. Probabilities of
    actions used by neither side are immaterial and set to the lower bound.
    """
    j = decision_action
    if not 0 <= j < len(actions):
        raise ValueError(f"decision action {j} out of range for {len(actions)} actions")
    low = [a.p_low for a in actions]
    out = []
    for i, a in enumerate(actions):
        if i == j:
            out.append(PPAction(i, tuple(low)))
            probs = list(low)
            probs[i] = a.p_high
            out.append(PPAction(i, tuple(probs)))
        else:
            probs = list(low)
            probs[i] = a.p_high
            out.append(PPAction(i, tuple(probs)))
    return out


@dataclass
class DpTable:
    """DP table of one subtree.

    Row ``k`` is one achievable key with stored adversary value ``za[k]``,
    decision value ``zd[k]`` and the minimum adversary cost ``cost[k]``. In
    rounded mode ``na``/``nd`` hold the integer bins and ``za = K * na``.
    ``back[s]`` gives, for child slot ``s``, the child-table row and the
    index of the policy-parameter action on that child's edge (-1 for the
    virtual empty child of a single-child node).
    """

    node: NodeId
    za: np.ndarray
    zd: np.ndarray
    cost: np.ndarray
    K: Optional[float] = None
    na: Optional[np.ndarray] = None
    nd: Optional[np.ndarray] = None
    back: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.za.size)

    @property
    def distinct_adversary_bins(self) -> int:
        return int(np.unique(self.na if self.na is not None else self.za).size)

    @property
    def distinct_decision_bins(self) -> int:
        return int(np.unique(self.nd if self.nd is not None else self.zd).size)


@dataclass
class AdversaryResult:
    objective: str
    value: float
    cost: float
    policy: Policy
    params: ParamVector
    decision_value: float
    adversary_value: float
    table_value: float = math.nan

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "value": self.value,
            "cost": self.cost,
            "decision_value": self.decision_value,
            "adversary_value": self.adversary_value,
            "table_value": self.table_value,
            "policy": {v: int(a) for v, a in self.policy.items()},
            "params": params_to_json(self.params),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdversaryResult":
        return cls(
            objective=data["objective"],
            value=float(data["value"]),
            cost=float(data["cost"]),
            policy={str(k): int(v) for k, v in data["policy"].items()},
            params=params_from_json(data["params"]),
            decision_value=float(data["decision_value"]),
            adversary_value=float(data["adversary_value"]),
            table_value=float(data.get("table_value", math.nan)),
        )


def objective_value(objective: str, decision_value: float, adversary_value: float) -> float:
    if objective == RATIO:
        return decision_value / adversary_value
    return adversary_value - decision_value


# -- table reduction and pruning -----------------------------------------

def _first_per_key(k1: np.ndarray, k2: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Sorted positions holding the minimum cost of each (k1, k2) key.

    Among equal costs the earliest position wins. Integer keys from a compact
    grid are reduced on a dense array; anything else is sorted.
    """
    n = k1.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if k1.dtype.kind == "i":
        lo1, lo2 = int(k1.min()), int(k2.min())
        span = int(k2.max()) - lo2 + 1
        size = (int(k1.max()) - lo1 + 1) * span
        key = (k1 - lo1) * span + (k2 - lo2)
        if size <= max(4 * n, 1 << 16):
            best = np.full(size, np.inf)
            np.minimum.at(best, key, cost)
            pos = np.arange(n)
            hit = cost == best[key]
            first = np.full(size, n)
            np.minimum.at(first, key[hit], pos[hit])
            return np.sort(first[first < n])
        o = np.lexsort((cost, key))
        k = key[o]
        head = np.ones(n, dtype=bool)
        head[1:] = k[1:] != k[:-1]
        return np.sort(o[head])
    # lexsort is stable, so ties keep their original (ascending) positions
    o = np.lexsort((cost, k2, k1))
    a, b = k1[o], k2[o]
    head = np.ones(n, dtype=bool)
    head[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    return np.sort(o[head])


def _pareto3(za: np.ndarray, zd: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Keep rows not dominated by another row with za >=, zd <= and cost <=.

    Rows are assumed to have distinct (za, zd) keys.
    """
    n = za.size
    if n <= 1:
        return np.arange(n)
    order = np.lexsort((np.arange(n), zd, -za, cost))
    c = cost[order]
    cuts = np.flatnonzero(c[1:] != c[:-1]) + 1
    starts = np.concatenate(([0], cuts))
    ends = np.concatenate((cuts, [n]))
    # skyline of all kept rows of cheaper levels, za ascending; zd then ascends
    # too, so the first point with za' >= za has the smallest zd' among them
    stair_a = np.zeros(0)
    stair_d = np.zeros(0)
    kept = []
    for s, e in zip(starts, ends):
        idx = order[s:e]
        a, d = za[idx], zd[idx]
        # within a level rows are sorted by za desc, zd asc
        prev_min = np.minimum.accumulate(np.concatenate(([np.inf], d[:-1])))
        ok = d < prev_min
        if stair_a.size:
            pos = np.searchsorted(stair_a, a, side="left")
            has = pos < stair_a.size
            dom = np.zeros(a.size, dtype=bool)
            dom[has] = stair_d[pos[has]] <= d[has]
            ok &= ~dom
        if ok.any():
            kept.append(idx[ok])
            all_a = np.concatenate((stair_a, a[ok]))
            all_d = np.concatenate((stair_d, d[ok]))
            o2 = np.lexsort((all_d, -all_a))
            sa, sd = all_a[o2], all_d[o2]
            pm = np.minimum.accumulate(np.concatenate(([np.inf], sd[:-1])))
            sky = sd < pm
            stair_a, stair_d = sa[sky][::-1], sd[sky][::-1]
    if not kept:
        return np.zeros(0, dtype=np.int64)
    return np.sort(np.concatenate(kept))


@njit(cache=True)
def _hull_levels(x, y, order, starts, ends):
    """Mask of rows on the upper-right hull of all rows up to their own cost level.

    ``order`` lists rows by cost level; within a level the first row of equal
    coordinates wins, and points already on the running hull beat newcomers.
    """
    n = x.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    level = np.full(n, -1, dtype=np.int64)
    hull = np.empty(n, dtype=np.int64)
    h = 0
    pts = np.empty(n, dtype=np.int64)
    chain = np.empty(n, dtype=np.int64)
    for lv in range(starts.shape[0]):
        m = 0
        for j in range(h):
            pts[m] = hull[j]
            m += 1
        for j in range(starts[lv], ends[lv]):
            pts[m] = order[j]
            level[order[j]] = lv
            m += 1
        cur = pts[:m]
        o = np.argsort(y[cur], kind="mergesort")
        cur = cur[o]
        o = np.argsort(x[cur], kind="mergesort")
        cur = cur[o]
        # drop repeated coordinates, keeping the earliest entry
        u = 0
        for j in range(m):
            r = cur[j]
            if u > 0 and x[r] == x[cur[u - 1]] and y[r] == y[cur[u - 1]]:
                continue
            cur[u] = r
            u += 1
        ymax = -np.inf
        for j in range(u):
            if y[cur[j]] > ymax:
                ymax = y[cur[j]]
        sx = -np.inf
        for j in range(u):
            if y[cur[j]] == ymax and x[cur[j]] > sx:
                sx = x[cur[j]]
        c = 0
        for j in range(u):
            r = cur[j]
            if not (x[r] > sx or (x[r] == sx and y[r] == ymax)):
                continue
            while c >= 2:
                o0, a0 = chain[c - 2], chain[c - 1]
                cross = (x[a0] - x[o0]) * (y[r] - y[o0]) - (y[a0] - y[o0]) * (x[r] - x[o0])
                if cross >= 0:
                    c -= 1
                else:
                    break
            chain[c] = r
            c += 1
        h = c
        for j in range(c):
            hull[j] = chain[j]
            if level[chain[j]] == lv:
                keep[chain[j]] = True
    return keep


def _hull_prune(za: np.ndarray, zd: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Keep rows not beaten by a convex combination of rows with lower or equal cost.

    Valid only for unrounded values: the root objective is linear-fractional
    (ratio) or linear (regret) in a subtree's value pair, so its optimum over
    a point set is attained at a vertex of the frontier.
    """
    n = za.size
    if n <= 1:
        return np.arange(n)
    order = np.lexsort((np.arange(n), zd, -za, cost))
    c = cost[order]
    cuts = np.flatnonzero(c[1:] != c[:-1]) + 1
    starts = np.concatenate(([0], cuts)).astype(np.int64)
    ends = np.concatenate((cuts, [n])).astype(np.int64)
    x = np.ascontiguousarray(za, dtype=np.float64)
    y = -np.ascontiguousarray(zd, dtype=np.float64)
    return np.flatnonzero(_hull_levels(x, y, order.astype(np.int64), starts, ends))


def _prune_rows(prune, za, zd, cost) -> np.ndarray:
    if prune == "pareto":
        return _pareto3(za, zd, cost)
    if prune == "hull":
        return _hull_prune(za, zd, cost)
    return np.arange(za.size)


# -- the DP ------------------------------------------------------------------

def _quantize(za, zd, K, objective):
    if K is None:
        return za, zd, None, None
    if objective == RATIO:
        na = np.floor(za / K).astype(np.int64)
        nd = np.ceil(zd / K).astype(np.int64)
    else:
        na = np.ceil(za / K).astype(np.int64)
        nd = np.floor(zd / K).astype(np.int64)
    return K * na, K * nd, na, nd


def _extend(table: DpTable, pps: List[PPAction], decision_action: int, costs, cap, prune):
    """Push a child table across its edge: one row per (table row, pp-action)."""
    pa = np.array([pp.probs[pp.adversary_action] for pp in pps])
    pd = np.array([pp.probs[decision_action] for pp in pps])
    pc = np.array([costs[pp.adversary_action] for pp in pps])
    A = (table.za[:, None] * pa[None, :]).ravel()
    D = (table.zd[:, None] * pd[None, :]).ravel()
    C = (table.cost[:, None] + pc[None, :]).ravel()
    idx = np.arange(A.size)
    if cap is not None:
        ok = np.flatnonzero(C <= cap)
        A, D, C, idx = A[ok], D[ok], C[ok], idx[ok]
    sel = _first_per_key(A, D, C)
    A, D, C, idx = A[sel], D[sel], C[sel], idx[sel]
    keep = _prune_rows(prune, A, D, C)
    A, D, C, idx = A[keep], D[keep], C[keep], idx[keep]
    row, pp = np.divmod(idx, len(pps))
    return A, D, C, row, pp


_EMPTY_SLOT = (np.zeros(1), np.zeros(1), np.zeros(1), np.full(1, -1), np.full(1, -1))


def combine_tables(
    node: NodeId,
    reward: float,
    slots,
    K: Optional[float],
    objective: str,
    cap: Optional[float],
    prune=None,
) -> DpTable:
    """Build the table at ``node`` from its (at most two) extended child slots.

    Each slot is ``(A, D, C, row, pp)`` as produced by :func:`_extend`: the
    child's values already multiplied by the chosen passage probabilities,
    the accumulated cost, and backpointers. Missing children are virtual
    slots contributing value 0 at cost 0.
    """
    slots = list(slots) + [_EMPTY_SLOT] * (2 - len(slots))
    A1, D1, C1 = slots[0][:3]
    A2, D2, C2 = slots[1][:3]
    n1, n2 = A1.size, A2.size
    rows = max(1, CHUNK // max(n2, 1))
    pieces = []
    for s in range(0, n1, rows):
        e = min(n1, s + rows)
        za = (reward + A1[s:e, None] + A2[None, :]).ravel()
        zd = (reward + D1[s:e, None] + D2[None, :]).ravel()
        cost = (C1[s:e, None] + C2[None, :]).ravel()
        flat = np.arange(s * n2, e * n2)
        if cap is not None:
            ok = np.flatnonzero(cost <= cap)
            za, zd, cost, flat = za[ok], zd[ok], cost[ok], flat[ok]
        za, zd, na, nd = _quantize(za, zd, K, objective)
        k1, k2 = (za, zd) if na is None else (na, nd)
        sel = _first_per_key(k1, k2, cost)
        pieces.append(tuple(x[sel] if x is not None else None for x in (za, zd, na, nd, cost, flat)))
    if len(pieces) == 1:
        za, zd, na, nd, cost, flat = pieces[0]
    else:
        za, zd, na, nd, cost, flat = (
            np.concatenate([p[i] for p in pieces]) if pieces[0][i] is not None else None for i in range(6)
        )
        k1, k2 = (za, zd) if na is None else (na, nd)
        sel = _first_per_key(k1, k2, cost)
        za, zd, cost, flat = za[sel], zd[sel], cost[sel], flat[sel]
        if na is not None:
            na, nd = na[sel], nd[sel]
    keep = _prune_rows(prune, za, zd, cost)
    za, zd, cost, flat = za[keep], zd[keep], cost[keep], flat[keep]
    if na is not None:
        na, nd = na[keep], nd[keep]
    i1, i2 = np.divmod(flat, n2)
    back = [(slots[0][3][i1], slots[0][4][i1]), (slots[1][3][i2], slots[1][4][i2])]
    return DpTable(node, za, zd, cost, K, na, nd, back)


@dataclass
class DpRun:
    """All tables of one adversary DP run, kept for extraction and diagnostics."""

    instance: NetworkInstance
    decision: Policy
    objective: str
    tables: Dict[NodeId, DpTable]
    pp_actions: Dict[NodeId, List[PPAction]]
    bin_width: Dict[NodeId, Optional[float]]
    mu: Optional[float] = None

    def reconstruct(self, row: int, node: Optional[NodeId] = None) -> Tuple[Policy, ParamVector, Dict[NodeId, int]]:
        """Adversary policy and parameters of subtree ``node`` behind table row ``row``.

        Also returns the table row used at every node of the subtree.
        """
        inst = self.instance
        node = inst.root if node is None else node
        policy: Policy = {}
        params: ParamVector = {}
        rows = {}
        stack = [(node, row)]
        while stack:
            u, r = stack.pop()
            rows[u] = r
            t = self.tables[u]
            for slot, c in enumerate(inst.children[u]):
                child_row = int(t.back[slot][0][r])
                pp = self.pp_actions[c][int(t.back[slot][1][r])]
                policy[c] = pp.adversary_action
                params[c] = pp.probs
                stack.append((c, child_row))
        return policy, params, rows

    def root_scores(self) -> np.ndarray:
        t = self.tables[self.instance.root]
        if self.objective == RATIO:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(t.za > 0, t.zd / t.za, np.inf)
        return t.za - t.zd

    def best_row(self) -> int:
        t = self.tables[self.instance.root]
        feasible = t.cost <= self.instance.budget + BUDGET_SLACK
        if not feasible.any():
            raise AssertionError("no budget-feasible adversary entry; the null adversary costs 0")
        score = self.root_scores()
        score = score if self.objective == RATIO else -score
        score = np.where(feasible, score, np.inf)
        if not np.isfinite(score).any():
            # degenerate constant-K rounding: every adversary value rounded to 0
            score = np.where(feasible, -t.za, np.inf)
        # best score, then cheapest, then earliest row
        rows = np.lexsort((np.arange(score.size), t.cost, score))
        return int(rows[0])


def _check(instance: NetworkInstance, policy: Policy, objective: str):
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    if not instance.is_binary():
        raise InstanceError(["instance is not binarized (a node has more than two children)"])
    missing = [e.child for e in instance.edges if e.child not in policy]
    if missing:
        raise KeyError(f"decision policy has no action for edges {missing}")


def run_dp(
    instance: NetworkInstance,
    policy: Policy,
    objective: str = RATIO,
    *,
    epsilon: Optional[float] = None,
    K: Optional[float] = None,
    prune=None,
) -> DpRun:
    """Run the (optionally rounded) adversary DP and keep every table.

    ``prune`` selects optional table reductions that never change the
    optimum: ``"budget"`` drops rows already over budget at every node,
    ``"pareto"`` additionally drops dominated rows and ``"hull"`` (exact mode
    only) drops rows beaten by convex combinations of cheaper rows.
    """
    _check(instance, policy, objective)
    if prune not in PRUNE_MODES:
        raise ValueError(f"prune must be one of {PRUNE_MODES}")
    if epsilon is not None and K is not None:
        raise ValueError("epsilon and K are mutually exclusive")
    if epsilon is not None and not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if K is not None and not K > 0:
        raise ValueError("K must be positive")
    rounded = epsilon is not None or K is not None
    if prune == "hull" and rounded:
        raise ValueError("hull pruning is only valid for the exact DP")
    mu = epsilon / (2.0 + epsilon) if epsilon is not None else None
    cap = instance.budget + BUDGET_SLACK if prune is not None else None

    tables: Dict[NodeId, DpTable] = {}
    pps: Dict[NodeId, List[PPAction]] = {}
    widths: Dict[NodeId, Optional[float]] = {}
    for u in instance.postorder:
        r = instance.rewards[u]
        if mu is not None:
            width = mu * r if (r > 0 and u not in instance.dummies) else None
        elif K is not None:
            width = K if u not in instance.dummies else None
        else:
            width = None
        widths[u] = width
        slots = []
        for c in instance.children[u]:
            acts = instance.edge_of[c].actions
            pps[c] = gen_pp_actions(acts, policy[c])
            slots.append(_extend(tables[c], pps[c], policy[c], [a.cost for a in acts], cap, prune))
        tables[u] = combine_tables(u, r, slots, width, objective, cap, prune)
    return DpRun(instance, dict(policy), objective, tables, pps, widths, mu)


def _result(run: DpRun) -> AdversaryResult:
    inst = run.instance
    row = run.best_row()
    adv_policy, params, _ = run.reconstruct(row)
    zd = evaluate(inst, run.decision, params)
    za = evaluate(inst, adv_policy, params)
    table_value = float(run.root_scores()[row])
    return AdversaryResult(
        objective=run.objective,
        value=objective_value(run.objective, zd, za),
        cost=policy_cost(inst, adv_policy),
        policy=adv_policy,
        params=params,
        decision_value=zd,
        adversary_value=za,
        table_value=table_value,
    )


def solve_exact(instance: NetworkInstance, policy: Policy, objective: str = RATIO, *, prune=None) -> AdversaryResult:
    """Globally optimal adversary for ``policy`` on a binarized instance."""
    return _result(run_dp(instance, policy, objective, prune=prune))


def solve_rdp(
    instance: NetworkInstance,
    policy: Policy,
    objective: str = RATIO,
    *,
    epsilon: Optional[float] = None,
    K: Optional[float] = None,
    prune=None,
) -> AdversaryResult:
    """Rounded DP. With ``epsilon`` the ratio found is at most ``(1 + epsilon)`` times optimal."""
    if (epsilon is None) == (K is None):
        raise ValueError("give exactly one of epsilon or K")
    return _result(run_dp(instance, policy, objective, epsilon=epsilon, K=K, prune=prune))


# -- convenience on arbitrary (non-binary) instances -------------------------------

@dataclass(frozen=True)
class AdversaryConfig:
    """How to solve the adversary problem.

    ``mode`` is ``"exact"``, ``"epsilon"`` or ``"constant"``. ``prune="auto"``
    picks hull pruning for the exact DP and dominance pruning for the rounded
    DP; both leave the optimum unchanged.
    """

    mode: str = "exact"
    epsilon: Optional[float] = None
    K: Optional[float] = None
    prune: Optional[str] = "auto"

    def __post_init__(self):
        if self.mode not in ("exact", "epsilon", "constant"):
            raise ValueError(f"unknown adversary mode {self.mode!r}")
        if self.mode == "epsilon" and not (self.epsilon is not None and self.epsilon > 0):
            raise ValueError("epsilon mode needs epsilon > 0")
        if self.mode == "constant" and not (self.K is not None and self.K > 0):
            raise ValueError("constant mode needs K > 0")
        if self.mode == "exact" and (self.epsilon is not None or self.K is not None):
            raise ValueError("exact mode takes neither epsilon nor K")
        if self.mode == "epsilon" and self.K is not None or self.mode == "constant" and self.epsilon is not None:
            raise ValueError("epsilon and K are mutually exclusive")

    @classmethod
    def exact(cls, prune="auto") -> "AdversaryConfig":
        return cls("exact", prune=prune)

    @classmethod
    def eps(cls, epsilon: float, prune="auto") -> "AdversaryConfig":
        return cls("epsilon", epsilon=epsilon, prune=prune)

    @classmethod
    def constant(cls, K: float, prune="auto") -> "AdversaryConfig":
        return cls("constant", K=K, prune=prune)

    @property
    def resolved_prune(self):
        if self.prune != "auto":
            return self.prune
        return "hull" if self.mode == "exact" else "pareto"

    @property
    def guarantee(self) -> float:
        """Factor by which a found ratio may exceed the optimum (1 when exact)."""
        return 1.0 + self.epsilon if self.mode == "epsilon" else 1.0

    @property
    def label(self) -> str:
        if self.mode == "epsilon":
            return f"eps={self.epsilon:g}"
        if self.mode == "constant":
            return f"K={self.K:g}"
        return "exact"

    def solve_binary(self, instance: NetworkInstance, policy: Policy, objective: str) -> AdversaryResult:
        if self.mode == "exact":
            return solve_exact(instance, policy, objective, prune=self.resolved_prune)
        return solve_rdp(instance, policy, objective, epsilon=self.epsilon, K=self.K, prune=self.resolved_prune)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "epsilon": self.epsilon, "K": self.K, "prune": self.prune}


def solve_adversary(
    instance: NetworkInstance,
    policy: Policy,
    objective: str = RATIO,
    config: AdversaryConfig = AdversaryConfig(),
    binary: Optional[NetworkInstance] = None,
) -> AdversaryResult:
    """Adversary for any valid instance; binarizes internally and maps the answer back."""
    if binary is None:
        binary, _ = binarize(instance)
    res = config.solve_binary(binary, lift_policy(binary, policy), objective)
    res.policy = project_policy(binary, res.policy)
    res.params = project_params(binary, res.params)
    return res
