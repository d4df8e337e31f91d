"""Compiled depth-first branch-and-bound kernel behind :func:`riverguard.master.solve_master`.

The search state lives in flat arrays indexed by branching position ``t``
(the ``t``-th edge in branching order). Accessibilities share one ``K x N``
array: an edge's child column is written when the edge is fixed and is only
read by edges below it, so backtracking never needs to restore it.
"""

from __future__ import annotations

import numpy as np
from numba import njit

BUDGET_SLACK = 1e-9
# merged frontiers larger than this fall back to the cheap bound
KNAPSACK_LIMIT = 512


@njit(cache=True)
def _last_affordable(row, cap):
    # frontier costs ascend and padding is +inf; index of the last cost <= cap
    lo, hi = 0, row.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] <= cap:
            lo = mid + 1
        else:
            hi = mid
    return lo - 1


@njit(cache=True)
def _base(acc, fixed, front, n_front, parent_node, g0, base):
    """All-null completion value of every scenario."""
    for k in range(acc.shape[0]):
        z = fixed[k]
        for j in range(n_front):
            e = front[j]
            z += acc[k, parent_node[e]] * g0[k, e]
        base[k] = z


@njit(cache=True)
def _bound(acc, fixed, front, n_front, b, parent_node, g0, f_cost, f_gain, f_rate,
           offset, scale, any_repair, cut, perm, tight):
    """Upper bound on the objective below a node, stopping at the first scenario under ``cut``.

    Scenarios are visited in the order ``perm``; the one that triggers a cut is
    moved to the front, since neighbouring nodes tend to be cut by the same one.
    """
    cap = b + BUDGET_SLACK
    ub = np.inf
    for q in range(perm.shape[0]):
        k = perm[q]
        z = fixed[k]
        g1 = 0.0
        best_rate = 0.0
        for j in range(n_front):
            e = front[j]
            w = acc[k, parent_node[e]]
            z += w * g0[k, e]
            if any_repair:
                last = _last_affordable(f_cost[k, e], cap)
                g1 += w * f_gain[k, e, last]
                r = w * f_rate[k, e, last]
                if r > best_rate:
                    best_rate = r
        if any_repair and n_front > 0:
            z += min(g1, b * best_rate)
        s = (z - offset[k]) / scale[k]
        if s < ub:
            ub = s
            if ub < cut:
                for m in range(q, 0, -1):
                    perm[m] = perm[m - 1]
                perm[0] = k
                return ub
    if not any_repair or n_front == 0:
        return ub
    # no cheap cut: solve the subforest knapsack exactly for the leading scenarios
    for q in range(min(tight, perm.shape[0])):
        k = perm[q]
        g = _knapsack_gain(k, acc, front, n_front, b, parent_node, f_cost, f_gain, KNAPSACK_LIMIT)
        if g < 0:
            continue
        z = fixed[k]
        for j in range(n_front):
            e = front[j]
            z += acc[k, parent_node[e]] * g0[k, e]
        s = (z + g - offset[k]) / scale[k]
        if s < cut:
            for m in range(q, 0, -1):
                perm[m] = perm[m - 1]
            perm[0] = k
            return s
    return ub


@njit(cache=True)
def _knapsack_gain(k, acc, front, n_front, b, parent_node, f_cost, f_gain, limit):
    """Best total frontier gain of scenario ``k`` within budget ``b``, or -1 if the merge grows past ``limit``."""
    cap = b + BUDGET_SLACK
    cost = np.zeros(limit)
    gain = np.zeros(limit)
    size = 1
    cand_cost = np.empty(limit * f_cost.shape[2])
    cand_gain = np.empty(limit * f_cost.shape[2])
    for j in range(n_front):
        e = front[j]
        w = acc[k, parent_node[e]]
        row = f_cost[k, e]
        n = 0
        for p in range(size):
            for q in range(row.shape[0]):
                c = cost[p] + row[q]
                if c > cap:
                    break
                cand_cost[n] = c
                cand_gain[n] = gain[p] + w * f_gain[k, e, q]
                n += 1
        order = np.argsort(cand_cost[:n], kind="mergesort")
        size = 0
        for r in range(n):
            i = order[r]
            if size == 0 or cand_gain[i] > gain[size - 1]:
                if size > 0 and cand_cost[i] == cost[size - 1]:
                    gain[size - 1] = cand_gain[i]
                    continue
                if size == limit:
                    return -1.0
                cost[size] = cand_cost[i]
                gain[size] = cand_gain[i]
                size += 1
    return gain[size - 1]


@njit(cache=True)
def _score(base, offset, scale):
    s = np.inf
    for k in range(base.shape[0]):
        v = (base[k] - offset[k]) / scale[k]
        if v < s:
            s = v
    return s


@njit(cache=True)
def _key_less(cost, chosen, t, best_cost, best_actions, key_pos):
    # (cost, action vector in instance edge order) compared lexicographically
    if cost != best_cost:
        return cost < best_cost
    for j in range(key_pos.shape[0]):
        p = key_pos[j]
        a = chosen[p] if p < t else 0
        if a != best_actions[p]:
            return a < best_actions[p]
    return False


@njit(cache=True)
def search(root, budget, rewards, child_node, parent_node, sub_ptr, sub_idx, root_edges,
           n_act, act_order, costs, probs, g0, f_cost, f_gain, f_rate, suffix_min_cost,
           offset, scale, cost_pos, key_pos, best, best_actions, tight, history):
    """Run the search from an incumbent; returns ``(best, nodes, improvements)``.

    ``best_actions`` is updated in place. Every new incumbent is also written to
    the ring buffer ``history`` (one row per incumbent), so the caller can read
    back the last ``min(improvements, len(history))`` of them.
    """
    K = probs.shape[0]
    E = child_node.shape[0]
    N = rewards.shape[0]
    acc = np.zeros((K, N))
    acc[:, root] = 1.0
    fixed = np.zeros((E + 1, K))
    fixed[0, :] = rewards[root]
    # frontier edges per level, kept as an unordered list plus membership flags
    front = np.zeros((E + 1, E), dtype=np.int64)
    n_front = np.zeros(E + 1, dtype=np.int64)
    for j in range(root_edges.shape[0]):
        front[0, j] = root_edges[j]
    n_front[0] = root_edges.shape[0]
    left = np.zeros(E + 1)
    left[0] = budget
    chosen = np.zeros(E, dtype=np.int64)
    next_action = np.zeros(E + 1, dtype=np.int64)
    base = np.zeros(K)
    perm = np.arange(K)
    best_cost = 0.0
    for j in range(cost_pos.shape[0]):
        best_cost += costs[cost_pos[j], best_actions[cost_pos[j]]]

    nodes = 0
    improvements = 0
    t = 0
    entering = True
    while t >= 0:
        if entering:
            nodes += 1
            b = left[t]
            cut = best - 1e-12 * max(1.0, abs(best))
            ub = _bound(acc, fixed[t], front[t], n_front[t], b, parent_node, g0, f_cost, f_gain,
                        f_rate, offset, scale, b + BUDGET_SLACK >= suffix_min_cost[0], cut, perm, tight)
            if ub < cut:
                t -= 1
                entering = False
                continue
            if t == E or b + BUDGET_SLACK < suffix_min_cost[t]:
                _base(acc, fixed[t], front[t], n_front[t], parent_node, g0, base)
                value = _score(base, offset, scale)
                tol = 1e-12 * max(1.0, abs(best))
                if value > best + tol:
                    take = True
                elif value >= best - tol:
                    cost = 0.0
                    for j in range(cost_pos.shape[0]):
                        p = cost_pos[j]
                        cost += costs[p, chosen[p] if p < t else 0]
                    take = _key_less(cost, chosen, t, best_cost, best_actions, key_pos)
                else:
                    take = False
                if take:
                    best = max(best, value)
                    best_cost = 0.0
                    for p in range(E):
                        best_actions[p] = chosen[p] if p < t else 0
                    if history.shape[0] > 0:
                        slot = improvements % history.shape[0]
                        for p in range(E):
                            history[slot, p] = best_actions[p]
                    improvements += 1
                    for j in range(cost_pos.shape[0]):
                        best_cost += costs[cost_pos[j], best_actions[cost_pos[j]]]
                t -= 1
                entering = False
                continue
            next_action[t] = 0
        moved = False
        while next_action[t] < n_act[t]:
            i = act_order[t, next_action[t]]
            next_action[t] += 1
            c = costs[t, i]
            if c > left[t] + BUDGET_SLACK:
                continue
            v = child_node[t]
            u = parent_node[t]
            r = rewards[v]
            for k in range(K):
                a = acc[k, u] * probs[k, t, i]
                acc[k, v] = a
                fixed[t + 1, k] = fixed[t, k] + r * a
            m = 0
            for j in range(n_front[t]):
                e = front[t, j]
                if e != t:
                    front[t + 1, m] = e
                    m += 1
            for j in range(sub_ptr[t], sub_ptr[t + 1]):
                front[t + 1, m] = sub_idx[j]
                m += 1
            n_front[t + 1] = m
            left[t + 1] = left[t] - c
            chosen[t] = i
            t += 1
            entering = True
            moved = True
            break
        if not moved:
            t -= 1
            entering = False
    return best, nodes, improvements
