"""Command-line entry point.

Exit codes: 0 on success, 1 on bad input (invalid files or flags), 2 when a
robust solve hits its iteration cap before the bounds meet.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from typing import Optional, Sequence

from .adversary import OBJECTIVES, PRUNE_MODES, RATIO, AdversaryConfig, solve_adversary
from .baselines import accessibility_rows, evaluate_robustness, midpoint_policy, random_policy, worst_policy
from .bench import POLICY_KINDS, BenchConfig, rows_to_csv, run_bench
from .generator import GeneratorConfig, generate
from .lpformat import export_milp
from .master import ScenarioSet
from .model import InstanceError, load_instance, policy_cost, policy_from_json, policy_to_json
from .robust import solve_mr, solve_mrr

log = logging.getLogger("riverguard")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which is reserved for non-convergence here
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _csv_list(kind):
    def parse(text: str):
        try:
            return tuple(kind(x) for x in text.split(",") if x.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _add_output(p):
    p.add_argument("-o", "--output", help="output file (default: standard output)")


def _add_adversary(p, single=True):
    g = p.add_argument_group("adversary")
    mode = g.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="exact adversary DP (default)")
    if single:
        mode.add_argument("--epsilon", type=float, help="rounded DP with K_u = mu*r_u, mu = eps/(2+eps)")
        mode.add_argument("-K", "--K", dest="K", type=float, help="rounded DP with constant bin width K")
    else:
        mode.add_argument("--epsilon", type=_csv_list(float), help="comma-separated epsilons for the robust solvers")
        mode.add_argument("-K", "--K", dest="K", type=_csv_list(float), help="comma-separated constant bin widths")
    g.add_argument("--prune", default="auto", choices=["auto", "none"] + [m for m in PRUNE_MODES if m],
                   help="table reduction (never changes the optimum; default: auto)")


def _add_loop(p):
    p.add_argument("--threshold", type=float, default=1e-3, help="stop when U - L <= threshold (default 1e-3)")
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--extra-cuts", type=int, default=0, metavar="N",
                   help="per iteration, also cut off up to N earlier master incumbents (default 0)")


def _add_generator(p, grid=False):
    g = p.add_argument_group("generator")
    if grid:
        g.add_argument("--n", type=_csv_list(int), default=(22,), help="node counts")
        g.add_argument("--beta", type=_csv_list(float), default=(0.1, 0.3, 0.5), help="interval widths")
        g.add_argument("--budget-fraction", type=_csv_list(float), default=(0.05, 0.1))
        g.add_argument("--seeds", type=_csv_list(int), default=(0,))
    else:
        g.add_argument("--n", type=int, default=100)
        g.add_argument("--beta", type=float, default=0.3)
        g.add_argument("--budget-fraction", type=float, default=0.05)
        g.add_argument("--seed", type=int, default=0)
    g.add_argument("--reward-min", type=float, default=1.0)
    g.add_argument("--reward-max", type=float, default=10.0)
    g.add_argument("--culvert-fraction", type=float, default=0.9)
    g.add_argument("--max-children", type=int, default=None, help="cap on children per node")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riverguard", description="Robust barrier removal on tree-shaped river networks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress on standard error")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a random instance")
    _add_generator(p)
    _add_output(p)

    for name, helptext in (("solve-mrr", "maximize the robust ratio"), ("solve-mr", "minimize the maximum regret")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("instance")
        _add_adversary(p)
        _add_loop(p)
        _add_output(p)

    p = sub.add_parser("adversary", help="worst case for a fixed policy")
    p.add_argument("instance")
    p.add_argument("--policy", required=True, help="policy JSON file")
    p.add_argument("--objective", choices=OBJECTIVES, default=RATIO)
    _add_adversary(p)
    _add_output(p)

    p = sub.add_parser("baseline", help="write a baseline policy")
    p.add_argument("instance")
    p.add_argument("--kind", choices=("midpoint", "worst", "random"), default="midpoint")
    p.add_argument("--seed", type=int, default=0, help="seed for --kind random")
    _add_output(p)

    p = sub.add_parser("eval", help="robust ratio and regret of policies (CSV)")
    p.add_argument("instance")
    p.add_argument("--policy", required=True, action="append", help="policy JSON file (repeatable)")
    p.add_argument("--accessibility", help="write per-edge accessibilities under the ratio certificate of the first policy")
    _add_adversary(p)
    _add_output(p)

    p = sub.add_parser("export-milp", help="write the master problem in LP format")
    p.add_argument("instance")
    p.add_argument("--scenarios", required=True, help="scenario JSON (a list or a solve result)")
    p.add_argument("--objective", choices=OBJECTIVES, default=RATIO)
    _add_output(p)

    p = sub.add_parser("bench", help="sweep generated instances and score policies (CSV)")
    _add_generator(p, grid=True)
    p.add_argument("--policies", type=_csv_list(str), default=POLICY_KINDS)
    _add_adversary(p, single=False)
    p.add_argument("--eval-epsilon", type=float, default=None, help="score policies with a rounded adversary instead of the exact one")
    _add_loop(p)
    p.add_argument("--random-runs", type=int, default=10)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: RIVERGUARD_THREADS or CPU count)")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column (makes output run-dependent)")
    _add_output(p)
    return parser


def _prune(args):
    return None if args.prune == "none" else args.prune


def _adversary_config(args) -> AdversaryConfig:
    if args.epsilon is not None:
        return AdversaryConfig.eps(args.epsilon, prune=_prune(args))
    if args.K is not None:
        return AdversaryConfig.constant(args.K, prune=_prune(args))
    return AdversaryConfig.exact(prune=_prune(args))


def _solver_configs(args) -> tuple:
    if args.epsilon:
        return tuple(AdversaryConfig.eps(e, prune=_prune(args)) for e in args.epsilon)
    if args.K:
        return tuple(AdversaryConfig.constant(k, prune=_prune(args)) for k in args.K)
    return (AdversaryConfig.exact(prune=_prune(args)),)


def _emit(text: str, path: Optional[str]) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InstanceError([f"{path}: {exc.strerror or exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise InstanceError([f"{path}: invalid JSON ({exc})"]) from exc


def _load(path: str):
    try:
        return load_instance(path)
    except OSError as exc:
        raise InstanceError([f"{path}: {exc.strerror or exc}"]) from exc


def _generator_config(args, **over) -> GeneratorConfig:
    return GeneratorConfig(
        reward_min=args.reward_min,
        reward_max=args.reward_max,
        culvert_fraction=args.culvert_fraction,
        max_children=args.max_children,
        **over,
    )


def _cmd_gen(args) -> int:
    cfg = _generator_config(args, n=args.n, beta=args.beta, budget_fraction=args.budget_fraction, seed=args.seed)
    problems = cfg.problems()
    if problems:
        raise InstanceError(problems)
    _emit(generate(cfg).to_json(), args.output)
    return EXIT_OK


def _cmd_solve(args) -> int:
    inst = _load(args.instance)
    if args.threshold < 0:
        raise InstanceError(["--threshold must be nonnegative"])
    if args.max_iterations < 1:
        raise InstanceError(["--max-iterations must be at least 1"])
    if args.extra_cuts < 0:
        raise InstanceError(["--extra-cuts must be nonnegative"])
    solve = solve_mrr if args.command == "solve-mrr" else solve_mr
    res = solve(inst, _adversary_config(args), args.threshold, args.max_iterations, args.extra_cuts)
    _emit(res.to_json(), args.output)
    if not res.converged:
        print(f"not converged after {res.iterations} iterations (gap {res.gap:.6g})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_adversary(args) -> int:
    inst = _load(args.instance)
    policy = policy_from_json(_read_json(args.policy), inst)
    res = solve_adversary(inst, policy, args.objective, _adversary_config(args))
    _emit(json.dumps(res.to_dict(), indent=2), args.output)
    return EXIT_OK


def _cmd_baseline(args) -> int:
    inst = _load(args.instance)
    if args.kind == "midpoint":
        policy = midpoint_policy(inst)
    elif args.kind == "worst":
        policy = worst_policy(inst)
    else:
        policy = random_policy(inst, args.seed)
    out = policy_to_json(policy)
    out["kind"] = args.kind
    out["cost"] = policy_cost(inst, policy)
    _emit(json.dumps(out, indent=2), args.output)
    return EXIT_OK


def _cmd_eval(args) -> int:
    inst = _load(args.instance)
    cfg = _adversary_config(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "cost", "robust_ratio", "regret", "ratio_adversary_value", "regret_adversary_value"])
    first = None
    for path in args.policy:
        policy = policy_from_json(_read_json(path), inst)
        rep = evaluate_robustness(inst, policy, cfg)
        if first is None:
            first = (policy, rep)
        w.writerow([path, repr(policy_cost(inst, policy)), repr(rep.robust_ratio), repr(rep.regret),
                    repr(rep.ratio_certificate.adversary_value), repr(rep.regret_certificate.adversary_value)])
    _emit(buf.getvalue(), args.output)
    if args.accessibility:
        policy, rep = first
        acc = io.StringIO()
        aw = csv.writer(acc, lineterminator="\n")
        aw.writerow(["edge", "decision_accessibility", "adversary_accessibility"])
        for edge, d, a in accessibility_rows(inst, policy, rep.ratio_certificate):
            aw.writerow([edge, repr(d), repr(a)])
        _emit(acc.getvalue(), args.accessibility)
    return EXIT_OK


def _cmd_export(args) -> int:
    inst = _load(args.instance)
    try:
        scenarios = ScenarioSet.from_data(inst, _read_json(args.scenarios))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError([f"{args.scenarios}: malformed scenarios ({exc!r})"]) from exc
    if len(scenarios) == 0:
        raise InstanceError([f"{args.scenarios}: no scenarios"])
    _emit(export_milp(inst, scenarios, args.objective), args.output)
    return EXIT_OK


def _cmd_bench(args) -> int:
    if args.threads is not None and args.threads < 1:
        raise InstanceError(["--threads must be positive"])
    evaluator = AdversaryConfig() if args.eval_epsilon is None else AdversaryConfig.eps(args.eval_epsilon)
    cfg = BenchConfig(
        ns=args.n,
        betas=args.beta,
        budget_fractions=args.budget_fraction,
        seeds=args.seeds,
        policies=args.policies,
        solvers=_solver_configs(args),
        evaluator=evaluator,
        threshold=args.threshold,
        max_iterations=args.max_iterations,
        extra_cuts=args.extra_cuts,
        random_runs=args.random_runs,
        base=_generator_config(args),
        timing=args.timing,
    )
    try:
        rows = run_bench(cfg, args.threads)
    except ValueError as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError([str(exc)]) from exc
    _emit(rows_to_csv(rows), args.output)
    return EXIT_OK


COMMANDS = {
    "gen": _cmd_gen,
    "solve-mrr": _cmd_solve,
    "solve-mr": _cmd_solve,
    "adversary": _cmd_adversary,
    "baseline": _cmd_baseline,
    "eval": _cmd_eval,
    "export-milp": _cmd_export,
    "bench": _cmd_bench,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InstanceError as exc:
        for v in exc.violations:
            print(v, file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"{exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())
