"""Constraint generation for robust barrier-removal policies.

The loop alternates two solvers. The master picks the best decision policy
against the adversary scenarios collected so far; the adversary then finds
the worst (policy, parameters) pair for that decision, which is added to the
collection. For the ratio the master value is an upper bound on the best
achievable robust ratio and the adversary value a lower bound; for the regret
the roles swap. The loop stops once the bounds meet within ``threshold``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import List

from .adversary import RATIO, REGRET, AdversaryConfig, solve_adversary
from .binarize import binarize
from .master import ScenarioSet, solve_master
from .model import NetworkInstance, Policy, midpoint_params, null_policy, policy_cost

log = logging.getLogger(__name__)

CONVERGED = "converged"
DUPLICATE = "duplicate_scenario"
MAX_ITERATIONS = "max_iterations"


@dataclass
class TraceRow:
    iteration: int
    master: float
    adversary: float
    upper: float
    lower: float
    master_nodes: int


@dataclass
class RobustResult:
    objective: str
    policy: Policy
    upper: float
    lower: float
    iterations: int
    status: str
    threshold: float
    config: AdversaryConfig
    scenarios: ScenarioSet
    trace: List[TraceRow] = field(default_factory=list)
    extra_cuts: int = 0

    @property
    def converged(self) -> bool:
        """False only when the iteration cap stopped the loop."""
        return self.status != MAX_ITERATIONS

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "status": self.status,
            "converged": self.converged,
            "upper": self.upper,
            "lower": self.lower,
            "gap": self.gap,
            "iterations": self.iterations,
            "threshold": self.threshold,
            "extra_cuts": self.extra_cuts,
            "adversary": self.config.to_dict(),
            "policy": {v: int(a) for v, a in self.policy.items()},
            "cost": policy_cost(self.scenarios.instance, self.policy),
            "trace": [asdict(row) for row in self.trace],
            "scenarios": json.loads(self.scenarios.to_json())["scenarios"],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, instance: NetworkInstance, data: dict) -> "RobustResult":
        cfg = data["adversary"]
        return cls(
            objective=data["objective"],
            policy={str(k): int(v) for k, v in data["policy"].items()},
            upper=float(data["upper"]),
            lower=float(data["lower"]),
            iterations=int(data["iterations"]),
            status=data["status"],
            threshold=float(data["threshold"]),
            config=AdversaryConfig(cfg["mode"], cfg.get("epsilon"), cfg.get("K"), cfg.get("prune", "auto")),
            scenarios=ScenarioSet.from_data(instance, data),
            trace=[TraceRow(**row) for row in data["trace"]],
            extra_cuts=int(data.get("extra_cuts", 0)),
        )


def _loop(
    instance: NetworkInstance,
    objective: str,
    config: AdversaryConfig,
    threshold: float,
    max_iterations: int,
    extra_cuts: int = 0,
) -> RobustResult:
    if extra_cuts < 0:
        raise ValueError("extra_cuts must be nonnegative")
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    binary, _ = binarize(instance)
    scenarios = ScenarioSet(instance)
    scenarios.add(null_policy(instance), midpoint_params(instance))
    trace: List[TraceRow] = []
    status = MAX_ITERATIONS
    policy, upper, lower = None, float("nan"), float("nan")
    for t in range(1, max_iterations + 1):
        m = solve_master(instance, scenarios, objective, runners_up=extra_cuts)
        adv = solve_adversary(instance, m.policy, objective, config, binary)
        policy = m.policy
        if objective == RATIO:
            # a (1+eps)-approximate minimum ratio, scaled down, is a valid lower bound
            upper, lower = m.value, adv.value / config.guarantee
        else:
            upper, lower = adv.value, m.value
        trace.append(TraceRow(t, m.value, adv.value, upper, lower, m.nodes))
        log.info("iteration %d: upper %.9g lower %.9g (%d master nodes)", t, upper, lower, m.nodes)
        if upper - lower <= threshold:
            status = CONVERGED
            break
        if not scenarios.add(adv.policy, adv.params):
            status = DUPLICATE
            break
        # also cut off the near-optimal policies the master passed through
        for other in m.runners_up:
            extra = solve_adversary(instance, other, objective, config, binary)
            scenarios.add(extra.policy, extra.params)
    return RobustResult(
        objective, policy, upper, lower, len(trace), status, threshold, config, scenarios, trace, extra_cuts
    )


def solve_mrr(
    instance: NetworkInstance,
    config: AdversaryConfig = AdversaryConfig(),
    threshold: float = 1e-3,
    max_iterations: int = 200,
    extra_cuts: int = 0,
) -> RobustResult:
    """Policy maximizing the robust ratio, with certified upper and lower bounds.

    With the exact adversary and ``threshold=0`` the returned policy is
    optimal. With ``K``-constant rounding the lower bound is heuristic.

    Each iteration adds the adversary's answer to the master's policy. With
    ``extra_cuts > 0`` it also adds the answers to up to that many earlier
    incumbents of the master search, which usually cuts the iteration count
    on larger instances; the bounds keep their meaning either way.
    """
    return _loop(instance, RATIO, config, threshold, max_iterations, extra_cuts)


def solve_mr(
    instance: NetworkInstance,
    config: AdversaryConfig = AdversaryConfig(),
    threshold: float = 1e-3,
    max_iterations: int = 200,
    extra_cuts: int = 0,
) -> RobustResult:
    """Policy minimizing the maximum regret.

    ``upper`` is the regret the adversary found against the returned policy
    and ``lower`` the master's min-max regret over the scenarios. Rounded
    adversaries carry no approximation guarantee for the regret.
    ``extra_cuts`` works as in :func:`solve_mrr`.
    """
    return _loop(instance, REGRET, config, threshold, max_iterations, extra_cuts)
