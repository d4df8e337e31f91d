"""Baseline policies and robustness metrics for arbitrary policies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adversary import RATIO, REGRET, AdversaryConfig, AdversaryResult, solve_adversary
from .binarize import binarize
from .model import (
    NetworkInstance,
    ParamVector,
    Policy,
    accessibilities,
    lower_params,
    midpoint_params,
    null_policy,
)
from .pareto import BUDGET_SLACK, PointDP


def solve_point(instance: NetworkInstance, params: ParamVector) -> Policy:
    """Exact budgeted optimum for fixed passage probabilities (ties go to the cheaper policy)."""
    return PointDP(instance, params).best()[2]


def midpoint_policy(instance: NetworkInstance) -> Policy:
    return solve_point(instance, midpoint_params(instance))


def worst_policy(instance: NetworkInstance) -> Policy:
    return solve_point(instance, lower_params(instance))


def random_policy(instance: NetworkInstance, seed: int = 0) -> Policy:
    """Visit edges in random order, giving each a random affordable repair until money runs out."""
    rng = np.random.default_rng(seed)
    policy = null_policy(instance)
    left = instance.budget
    edges = [e.child for e in instance.edges]
    for k in rng.permutation(len(edges)):
        e = instance.edge_of[edges[k]]
        affordable = [i for i, a in enumerate(e.actions) if i > 0 and a.cost <= left + BUDGET_SLACK]
        if not affordable:
            continue
        i = affordable[int(rng.integers(len(affordable)))]
        policy[e.child] = i
        left -= e.actions[i].cost
    return policy


@dataclass
class RobustnessReport:
    robust_ratio: float
    regret: float
    ratio_certificate: AdversaryResult
    regret_certificate: AdversaryResult

    def to_dict(self) -> dict:
        return {
            "robust_ratio": self.robust_ratio,
            "regret": self.regret,
            "ratio_certificate": self.ratio_certificate.to_dict(),
            "regret_certificate": self.regret_certificate.to_dict(),
        }


def evaluate_robustness(
    instance: NetworkInstance,
    policy: Policy,
    config: AdversaryConfig = AdversaryConfig(),
    binary: Optional[NetworkInstance] = None,
) -> RobustnessReport:
    """Robust ratio and regret of a fixed policy, with the adversary pairs that certify them."""
    if binary is None:
        binary, _ = binarize(instance)
    r = solve_adversary(instance, policy, RATIO, config, binary)
    g = solve_adversary(instance, policy, REGRET, config, binary)
    return RobustnessReport(r.value, g.value, r, g)


def ratio_from_regret(regret: float, adversary_value: float) -> float:
    """The ratio implied by a regret on the same (adversary policy, parameters) pair."""
    return 1.0 - regret / adversary_value


def accessibility_rows(instance: NetworkInstance, policy: Policy, certificate: AdversaryResult):
    """Per-edge accessibility of the decision and of the adversary under the certificate's parameters."""
    dec = accessibilities(instance, policy, certificate.params)
    adv = accessibilities(instance, certificate.policy, certificate.params)
    return [(e.child, dec[e.child], adv[e.child]) for e in instance.edges]
