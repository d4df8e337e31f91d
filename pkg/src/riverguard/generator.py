"""Synthetic river networks of culverts and dams.

Point estimates of passage probabilities are widened into intervals
``[p - beta*p, p + beta*p]`` and clipped to [0, 1]. The sampling ranges below
are assumptions: culvert estimates are drawn from [0.8, 0.9] and dam
estimates from [0.05, 0.2], matching the qualitative description of the
field data ("mostly" and "less than"), which is not distributed.

All random draws are made up front and do not depend on ``beta`` or the
budget fraction, so two configs that differ only in those produce the same
tree, rewards and point estimates with nested intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .model import Action, Edge, NetworkInstance

CULVERT_COST = 100_000.0
DAM_COST = 173_030.0
CULVERT_RANGE = (0.8, 0.9)
DAM_RANGE = (0.05, 0.2)
DAM_SHIFT_RANGE = (0.5, 0.9)


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 100
    reward_min: float = 1.0
    reward_max: float = 10.0
    culvert_fraction: float = 0.9
    beta: float = 0.3
    budget_fraction: float = 0.05
    # cap on children per node; None means plain uniform attachment
    max_children: Optional[int] = None
    seed: int = 0

    def problems(self) -> list:
        out = []
        if self.n < 1:
            out.append("n must be at least 1")
        if not 0 < self.reward_min <= self.reward_max:
            out.append("need 0 < reward_min <= reward_max")
        if not 0 <= self.culvert_fraction <= 1:
            out.append("culvert_fraction must lie in [0, 1]")
        if self.beta < 0:
            out.append("beta must be nonnegative")
        if not 0 <= self.budget_fraction <= 1:
            out.append("budget_fraction must lie in [0, 1]")
        if self.max_children is not None and self.max_children < 1:
            out.append("max_children must be positive")
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def _interval(p: float, beta: float):
    return max(0.0, p - beta * p), min(1.0, p + beta * p)


def generate(config: GeneratorConfig) -> NetworkInstance:
    bad = config.problems()
    if bad:
        raise ValueError("; ".join(bad))
    n = config.n
    rng = np.random.default_rng(config.seed)
    attach = rng.random(n)
    rewards = rng.uniform(config.reward_min, config.reward_max, n)
    is_culvert = rng.random(n) < config.culvert_fraction
    p_culvert = rng.uniform(*CULVERT_RANGE, n)
    p_dam = rng.uniform(*DAM_RANGE, n)
    shift = rng.uniform(*DAM_SHIFT_RANGE, n)

    n_children = [0] * n
    open_nodes = [0]
    parents = [-1] * n
    for v in range(1, n):
        # each new node hangs from a uniformly chosen earlier node with room left
        k = int(attach[v] * len(open_nodes))
        u = open_nodes[k]
        parents[v] = u
        n_children[u] += 1
        if config.max_children is not None and n_children[u] >= config.max_children:
            open_nodes.pop(k)
        open_nodes.append(v)

    beta = config.beta
    edges = []
    total = 0.0
    for v in range(1, n):
        if is_culvert[v]:
            p = float(p_culvert[v])
            repair = Action(CULVERT_COST, 1.0, 1.0)
        else:
            p = float(p_dam[v])
            p_new = min(1.0, p + float(shift[v]))
            repair = Action(DAM_COST, *_interval(p_new, beta))
        null = Action(0.0, *_interval(p, beta))
        edges.append(Edge(str(parents[v]), str(v), (null, repair)))
        total += repair.cost
    return NetworkInstance(
        root="0",
        rewards={str(v): float(rewards[v]) for v in range(n)},
        edges=tuple(edges),
        budget=config.budget_fraction * total,
    )
