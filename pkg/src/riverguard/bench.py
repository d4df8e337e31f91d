"""Sweeps over generated instances comparing robust and baseline policies.

Each case (seed, n, beta, budget fraction) generates one instance, builds the
requested policies and scores every policy with the same evaluation
adversary. Random policies are scored over several seeded draws and averaged.
"""

from __future__ import annotations

import csv
import io
import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

from .adversary import AdversaryConfig
from .baselines import evaluate_robustness, midpoint_policy, random_policy, worst_policy
from .binarize import binarize
from .generator import GeneratorConfig, generate
from .robust import solve_mr, solve_mrr

POLICY_KINDS = ("mrr", "mr", "midpoint", "worst", "random")
COLUMNS = ("seed", "n", "beta", "budget_fraction", "policy_kind", "robust_ratio", "regret", "wall_ms")
THREADS_ENV = "RIVERGUARD_THREADS"


@dataclass(frozen=True)
class BenchConfig:
    ns: Tuple[int, ...] = (22,)
    betas: Tuple[float, ...] = (0.1, 0.3, 0.5)
    budget_fractions: Tuple[float, ...] = (0.05, 0.1)
    seeds: Tuple[int, ...] = (0,)
    policies: Tuple[str, ...] = POLICY_KINDS
    # adversaries used inside the robust solvers; one row per solver and robust policy
    solvers: Tuple[AdversaryConfig, ...] = (AdversaryConfig(),)
    # adversary that scores every policy
    evaluator: AdversaryConfig = AdversaryConfig()
    threshold: float = 1e-3
    max_iterations: int = 200
    extra_cuts: int = 0
    random_runs: int = 10
    base: GeneratorConfig = field(default_factory=GeneratorConfig)
    timing: bool = False

    def cases(self) -> List[GeneratorConfig]:
        return [
            replace(self.base, n=n, beta=beta, budget_fraction=bf, seed=seed)
            for seed, n, beta, bf in itertools.product(self.seeds, self.ns, self.betas, self.budget_fractions)
        ]


@dataclass
class BenchRow:
    seed: int
    n: int
    beta: float
    budget_fraction: float
    policy_kind: str
    robust_ratio: float
    regret: float
    wall_ms: Optional[float] = None

    def as_list(self) -> list:
        wall = "" if self.wall_ms is None else f"{self.wall_ms:.1f}"
        return [self.seed, self.n, repr(self.beta), repr(self.budget_fraction), self.policy_kind,
                repr(self.robust_ratio), repr(self.regret), wall]


def _kind(name: str, solver: AdversaryConfig, many: bool) -> str:
    return f"{name}[{solver.label}]" if many or solver.mode != "exact" else name


def run_case(config: BenchConfig, gen: GeneratorConfig) -> List[BenchRow]:
    inst = generate(gen)
    binary, _ = binarize(inst)
    rows: List[BenchRow] = []

    def score(kind: str, policy, started: float):
        rep = evaluate_robustness(inst, policy, config.evaluator, binary)
        wall = (time.perf_counter() - started) * 1e3 if config.timing else None
        rows.append(BenchRow(gen.seed, gen.n, gen.beta, gen.budget_fraction, kind, rep.robust_ratio, rep.regret, wall))

    many = len(config.solvers) > 1
    for name in config.policies:
        t0 = time.perf_counter()
        if name in ("mrr", "mr"):
            solve = solve_mrr if name == "mrr" else solve_mr
            for solver in config.solvers:
                t0 = time.perf_counter()
                res = solve(inst, solver, config.threshold, config.max_iterations, config.extra_cuts)
                score(_kind(name, solver, many), res.policy, t0)
        elif name == "midpoint":
            score(name, midpoint_policy(inst), t0)
        elif name == "worst":
            score(name, worst_policy(inst), t0)
        elif name == "random":
            reps = [
                evaluate_robustness(inst, random_policy(inst, gen.seed * config.random_runs + k), config.evaluator, binary)
                for k in range(config.random_runs)
            ]
            wall = (time.perf_counter() - t0) * 1e3 / config.random_runs if config.timing else None
            rows.append(BenchRow(
                gen.seed, gen.n, gen.beta, gen.budget_fraction, name,
                sum(r.robust_ratio for r in reps) / len(reps), sum(r.regret for r in reps) / len(reps), wall,
            ))
        else:
            raise ValueError(f"unknown policy kind {name!r}")
    return rows


def _case(args):
    return run_case(*args)


def thread_count(default: Optional[int] = None) -> int:
    """Worker count from ``RIVERGUARD_THREADS``, else ``default``, else the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer")
        return n
    return default or os.cpu_count() or 1


def run_bench(config: BenchConfig, threads: Optional[int] = None) -> List[BenchRow]:
    """All rows, in case order regardless of how many workers ran them."""
    bad = [p for p in config.policies if p not in POLICY_KINDS]
    if bad:
        raise ValueError(f"unknown policy kinds {bad}")
    if config.random_runs < 1:
        raise ValueError("random_runs must be positive")
    cases = config.cases()
    for gen in cases:
        problems = gen.problems()
        if problems:
            raise ValueError("; ".join(problems))
    workers = min(threads or thread_count(), max(1, len(cases)))
    if workers == 1:
        chunks = [run_case(config, g) for g in cases]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_case, [(config, g) for g in cases]))
    return [row for chunk in chunks for row in chunk]


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow(row.as_list())
    return buf.getvalue()
