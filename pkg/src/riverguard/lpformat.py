"""LP-format export of the scenario master problem, plus a small reader.

The exported model maximizes ``M`` subject to ``Z_k * M <= z_s{k}`` for each
scenario ``k`` with adversary value ``Z_k``, where ``z_s{k}`` is tied to the
decision's value under that scenario's probabilities by an accessibility
recursion. Names: ``x_{edge}_{i}`` for binaries, ``a_s{k}_{node}`` for
accessibilities, ``l_s{k}_{node}_{i}`` for per-action increments.

When a scenario sets an action's probability below the action-0 probability,
the increment is negative. Its variable then lives in ``[-1, 0]`` and the cap
becomes ``l - d*a_parent + |d|*x <= |d|``, which pins it to ``d*a_parent``
when ``x = 1`` and relaxes to ``l <= 0`` otherwise.

The reader covers the subset of the CPLEX LP dialect written here, enough to
count variables and constraints and to hand the model to any MILP backend as
dense arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .adversary import RATIO, OBJECTIVES
from .master import ScenarioSet
from .model import NetworkInstance

_NAME_OK = re.compile(r"^[A-Za-z0-9_.~]+$")
_TERMS_PER_LINE = 6


def _num(x: float) -> str:
    return repr(float(x))


def _expr(terms: List[Tuple[float, str]]) -> str:
    """Render coefficient/variable pairs, wrapping long rows over several lines."""
    parts = []
    for k, (c, var) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = var if mag == 1.0 else f"{_num(mag)} {var}"
        if k == 0:
            parts.append(body if sign == "+" else f"- {body}")
        else:
            parts.append(f"{sign} {body}")
    lines = [" ".join(parts[i:i + _TERMS_PER_LINE]) for i in range(0, len(parts), _TERMS_PER_LINE)]
    return "\n   ".join(lines)


def _check_names(instance: NetworkInstance) -> None:
    bad = [v for v in instance.nodes if not _NAME_OK.match(v)]
    if bad:
        raise ValueError(f"node ids not usable in LP names: {bad[:5]}")


def export_milp(instance: NetworkInstance, scenarios: ScenarioSet, objective: str = RATIO) -> str:
    """Model text in CPLEX LP format for the master problem over ``scenarios``.

    ``objective="regret"`` writes the min-max regret variant, with ``R`` in
    place of ``M`` and rows ``R + z_s{k} >= Z_k``.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if len(scenarios) == 0:
        raise ValueError("scenario set is empty")
    _check_names(instance)
    inst = instance
    rows: List[str] = []
    bounds: List[str] = []
    binaries: List[str] = []

    def row(name: str, terms, sense: str, rhs: float):
        rows.append(f" {name}: {_expr(terms)} {sense} {_num(rhs)}")

    for e in inst.edges:
        xs = [f"x_{e.child}_{i}" for i in range(len(e.actions))]
        binaries.extend(xs)
        row(f"one_{e.child}", [(1.0, x) for x in xs], "=", 1.0)
    budget_terms = [
        (a.cost, f"x_{e.child}_{i}") for e in inst.edges for i, a in enumerate(e.actions) if a.cost != 0
    ]
    if budget_terms:
        row("budget", budget_terms, "<=", inst.budget)

    top = "M" if objective == RATIO else "R"
    for k, s in enumerate(scenarios):
        assert s.value > 0, "scenario value must be positive"
        z = f"z_s{k}"
        if objective == RATIO:
            row(f"ratio_s{k}", [(s.value, top), (-1.0, z)], "<=", 0.0)
        else:
            row(f"regret_s{k}", [(1.0, top), (1.0, z)], ">=", s.value)
        row(f"value_s{k}", [(1.0, z)] + [(-inst.rewards[v], f"a_s{k}_{v}") for v in inst.preorder if inst.rewards[v] != 0], "=", 0.0)
        row(f"root_s{k}", [(1.0, f"a_s{k}_{inst.root}")], "=", 1.0)
        bounds.append(f" 0 <= {z} <= {_num(sum(inst.rewards.values()))}")
        for v in inst.preorder:
            bounds.append(f" 0 <= a_s{k}_{v} <= 1")
        for v in inst.preorder:
            if v == inst.root:
                continue
            e = inst.edge_of[v]
            u = e.parent
            p = s.params[v]
            a_v, a_u = f"a_s{k}_{v}", f"a_s{k}_{u}"
            acc = [(1.0, a_v)]
            if p[0] != 0:
                acc.append((-p[0], a_u))
            acc += [(-1.0, f"l_s{k}_{v}_{i}") for i in range(len(e.actions))]
            row(f"acc_s{k}_{v}", acc, "=", 0.0)
            for i in range(len(e.actions)):
                lam, x = f"l_s{k}_{v}_{i}", f"x_{v}_{i}"
                d = p[i] - p[0]
                row(f"act_s{k}_{v}_{i}", [(1.0, lam), (-1.0, x)], "<=", 0.0)
                if d >= 0:
                    cap = [(1.0, lam)] + ([(-d, a_u)] if d != 0 else [])
                    row(f"cap_s{k}_{v}_{i}", cap, "<=", 0.0)
                    bounds.append(f" 0 <= {lam} <= 1")
                else:
                    row(f"cap_s{k}_{v}_{i}", [(1.0, lam), (-d, a_u), (-d, x)], "<=", -d)
                    bounds.append(f" -1 <= {lam} <= 0")
    if objective == RATIO:
        bounds.insert(0, " M >= 0")
    else:
        bounds.insert(0, " R free")

    out = ["\\ robust barrier removal master problem", f"\\ {len(scenarios)} scenario(s), objective {objective}"]
    out.append("Maximize" if objective == RATIO else "Minimize")
    out.append(f" obj: {top}")
    out.append("Subject To")
    out.extend(rows)
    out.append("Bounds")
    out.extend(bounds)
    if binaries:
        out.append("Binary")
        out.extend(" " + " ".join(binaries[i:i + 8]) for i in range(0, len(binaries), 8))
    out.append("End")
    return "\n".join(out) + "\n"


def expected_counts(instance: NetworkInstance, n_scenarios: int) -> Dict[str, int]:
    """Variable and row counts that ``export_milp`` produces."""
    n_nodes = instance.n_nodes
    n_actions = sum(len(e.actions) for e in instance.edges)
    per_scenario = 3 + (n_nodes - 1) + 2 * n_actions
    return {
        "binaries": n_actions,
        "continuous": 1 + n_scenarios * (1 + n_nodes + n_actions),
        "scenario_rows": n_scenarios * per_scenario,
        "rows": len(instance.edges) + (1 if any(a.cost for e in instance.edges for a in e.actions) else 0)
        + n_scenarios * per_scenario,
    }


# ---------------------------------------------------------------- reader

@dataclass
class LpConstraint:
    name: str
    coeffs: Dict[str, float]
    sense: str  # "<=", ">=" or "="
    rhs: float


@dataclass
class LpModel:
    sense: str  # "max" or "min"
    objective: Dict[str, float]
    constraints: List[LpConstraint] = field(default_factory=list)
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    binaries: List[str] = field(default_factory=list)
    integers: List[str] = field(default_factory=list)

    @property
    def variables(self) -> List[str]:
        """All variable names in first-appearance order."""
        seen: Dict[str, None] = {}
        for v in self.objective:
            seen.setdefault(v)
        for c in self.constraints:
            for v in c.coeffs:
                seen.setdefault(v)
        for v in list(self.bounds) + self.binaries + self.integers:
            seen.setdefault(v)
        return list(seen)

    def var_bounds(self, name: str) -> Tuple[float, float]:
        if name in self.bounds:
            return self.bounds[name]
        if name in self.binaries:
            return (0.0, 1.0)
        return (0.0, math.inf)

    def to_arrays(self):
        """Dense arrays ``(c, A, row_lo, row_hi, lb, ub, integrality, names)`` for a minimizing solver.

        For a maximization model ``c`` is negated.
        """
        names = self.variables
        col = {v: j for j, v in enumerate(names)}
        c = np.zeros(len(names))
        for v, a in self.objective.items():
            c[col[v]] = a
        if self.sense == "max":
            c = -c
        A = np.zeros((len(self.constraints), len(names)))
        lo = np.full(len(self.constraints), -np.inf)
        hi = np.full(len(self.constraints), np.inf)
        for r, con in enumerate(self.constraints):
            for v, a in con.coeffs.items():
                A[r, col[v]] += a
            if con.sense in ("<=", "="):
                hi[r] = con.rhs
            if con.sense in (">=", "="):
                lo[r] = con.rhs
        lb = np.array([self.var_bounds(v)[0] for v in names])
        ub = np.array([self.var_bounds(v)[1] for v in names])
        ints = set(self.binaries) | set(self.integers)
        integrality = np.array([1 if v in ints else 0 for v in names])
        return c, A, lo, hi, lb, ub, integrality, names


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|inf(?:inity)?)|(?P<op><=|>=|=<|=>|<|>|=)"
    r"|(?P<sign>[+-])|(?P<name>[A-Za-z_][A-Za-z0-9_.~]*))",
    re.IGNORECASE,
)
_SECTIONS = {
    "maximize": "obj", "maximum": "obj", "max": "obj",
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "subject to": "rows", "such that": "rows", "st": "rows", "s.t.": "rows",
    "bounds": "bounds", "bound": "bounds",
    "binary": "bin", "binaries": "bin", "bin": "bin",
    "general": "int", "generals": "int", "gen": "int",
    "end": "end",
}


class LpParseError(ValueError):
    pass


def _tokens(text: str):
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LpParseError(f"cannot parse near {text[pos:pos + 20]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


def _number(tok: str) -> float:
    return math.inf if tok.lower().startswith("inf") else float(tok)


def _linear(tokens) -> Dict[str, float]:
    coeffs: Dict[str, float] = {}
    sign, num = 1.0, None
    for kind, tok in tokens:
        if kind == "sign":
            sign = sign * (-1.0 if tok == "-" else 1.0)
        elif kind == "num":
            num = _number(tok)
        elif kind == "name":
            coeffs[tok] = coeffs.get(tok, 0.0) + sign * (1.0 if num is None else num)
            sign, num = 1.0, None
        else:
            raise LpParseError(f"unexpected {tok!r} in expression")
    if num is not None:
        raise LpParseError("constant terms are not supported in expressions")
    return coeffs


def _split_label(stmt: str) -> Tuple[Optional[str], str]:
    m = re.match(r"\s*([A-Za-z_][A-Za-z0-9_.~]*)\s*:(.*)$", stmt, re.S)
    return (m.group(1), m.group(2)) if m else (None, stmt)


def _norm_op(op: str) -> str:
    return {"<": "<=", "=<": "<=", ">": ">=", "=>": ">="}.get(op, op)


def _signed_number(tokens) -> float:
    if not tokens:
        raise LpParseError("missing right-hand side")
    sign = 1.0
    for kind, tok in tokens[:-1]:
        if kind != "sign":
            raise LpParseError(f"expected a number, got {tok!r}")
        sign *= -1.0 if tok == "-" else 1.0
    kind, tok = tokens[-1]
    if kind != "num":
        raise LpParseError(f"expected a number, got {tok!r}")
    return sign * _number(tok)


def _parse_bound(model: LpModel, line: str) -> None:
    parts = line.split()
    if len(parts) == 2 and parts[1].lower() == "free":
        model.bounds[parts[0]] = (-math.inf, math.inf)
        return
    toks = _tokens(line)
    ops = [k for k, (kind, _) in enumerate(toks) if kind == "op"]
    pieces, start = [], 0
    for k in ops:
        pieces.append(toks[start:k])
        start = k + 1
    pieces.append(toks[start:])
    opers = [_norm_op(toks[k][1]) for k in ops]
    if len(pieces) == 3:
        name = pieces[1][0][1]
        model.bounds[name] = (_signed_number(pieces[0]), _signed_number(pieces[2]))
        return
    if len(pieces) != 2:
        raise LpParseError(f"bad bound {line!r}")
    op = opers[0]
    if len(pieces[0]) == 1 and pieces[0][0][0] == "name":
        name, val = pieces[0][0][1], _signed_number(pieces[1])
    else:
        name, val = pieces[1][0][1], _signed_number(pieces[0])
        op = {"<=": ">=", ">=": "<=", "=": "="}[op]
    lo, hi = model.var_bounds(name)
    if op == "=":
        lo = hi = val
    elif op == "<=":
        hi = val
    else:
        lo = val
    model.bounds[name] = (lo, hi)


def parse_lp(text: str) -> LpModel:
    """Read a model in the CPLEX LP subset written by :func:`export_milp`."""
    section = None
    sense = None
    buffers: Dict[str, List[str]] = {"obj": [], "rows": [], "bounds": [], "bin": [], "int": []}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in _SECTIONS and not raw[:1].isspace():
            section = _SECTIONS[key]
            if section == "obj":
                sense = "max" if key.startswith("max") else "min"
            if section == "end":
                break
            continue
        if section is None:
            raise LpParseError(f"text before the objective section: {line!r}")
        if section == "end":
            break
        if raw[:1].isspace() and buffers[section] and section in ("obj", "rows") and not _split_label(line)[0]:
            buffers[section][-1] += " " + line.strip()
        else:
            buffers[section].append(line.strip())
    if sense is None:
        raise LpParseError("missing objective section")

    obj = " ".join(buffers["obj"])
    model = LpModel(sense=sense, objective=_linear(_tokens(_split_label(obj)[1])) if obj else {})
    for k, stmt in enumerate(buffers["rows"]):
        name, body = _split_label(stmt)
        toks = _tokens(body)
        ops = [j for j, (kind, _) in enumerate(toks) if kind == "op"]
        if len(ops) != 1:
            raise LpParseError(f"constraint needs exactly one comparison: {stmt!r}")
        j = ops[0]
        model.constraints.append(
            LpConstraint(name or f"R{k + 1}", _linear(toks[:j]), _norm_op(toks[j][1]), _signed_number(toks[j + 1:]))
        )
    for line in buffers["bounds"]:
        _parse_bound(model, line)
    for line in buffers["bin"]:
        model.binaries.extend(line.split())
    for line in buffers["int"]:
        model.integers.extend(line.split())
    return model
