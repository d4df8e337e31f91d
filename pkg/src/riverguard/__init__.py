"""Robust barrier removal on tree-shaped river networks with interval passage probabilities."""

from .adversary import REGRET, RATIO, AdversaryConfig, AdversaryResult, solve_adversary, solve_exact, solve_rdp
from .baselines import evaluate_robustness, midpoint_policy, random_policy, solve_point, worst_policy
from .binarize import binarize
from .generator import GeneratorConfig, generate
from .lpformat import export_milp, parse_lp
from .master import ScenarioSet, solve_master
from .model import (
    Action,
    Edge,
    InstanceError,
    NetworkInstance,
    evaluate,
    load_instance,
    make_instance,
    validate,
)
from .robust import RobustResult, solve_mr, solve_mrr

__all__ = [
    "Action", "AdversaryConfig", "AdversaryResult", "Edge", "GeneratorConfig", "InstanceError",
    "NetworkInstance", "RATIO", "REGRET", "RobustResult", "ScenarioSet", "binarize", "evaluate",
    "evaluate_robustness", "export_milp", "generate", "load_instance", "make_instance", "midpoint_policy",
    "parse_lp", "random_policy", "solve_adversary", "solve_exact", "solve_master", "solve_mr", "solve_mrr",
    "solve_point", "solve_rdp", "validate", "worst_policy",
]
