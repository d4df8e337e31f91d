import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_instance
from riverguard.adversary import RATIO, REGRET
from riverguard.lpformat import LpParseError, expected_counts, export_milp, parse_lp
from riverguard.master import ScenarioSet, solve_master
from riverguard.model import (
    accessibilities,
    lower_params,
    make_instance,
    midpoint_params,
    null_policy,
    upper_params,
)
from strategies import instances, params_in, policies

scipy_optimize = pytest.importorskip("scipy.optimize")


def _solve(text):
    """Optimal objective of an exported model via scipy's MILP backend."""
    model = parse_lp(text)
    c, A, lo, hi, lb, ub, integrality, names = model.to_arrays()
    res = scipy_optimize.milp(
        c,
        constraints=scipy_optimize.LinearConstraint(A, lo, hi),
        bounds=scipy_optimize.Bounds(lb, ub),
        integrality=integrality,
        options={"mip_rel_gap": 1e-12},
    )
    assert res.status == 0, res.message
    x = dict(zip(names, res.x))
    value = -res.fun if model.sense == "max" else res.fun
    return value, x


def _kinds(model):
    names = model.variables
    return {
        "x": sum(v.startswith("x_") for v in names),
        "a": sum(v.startswith("a_") for v in names),
        "l": sum(v.startswith("l_") for v in names),
        "z": sum(v.startswith("z_") for v in names),
    }


class TestLayout:
    def test_tiny_counts(self, tiny):
        c = ScenarioSet(tiny)
        c.add({"v": 1}, upper_params(tiny))
        text = export_milp(tiny, c)
        lines = [ln for ln in text.splitlines() if not ln.startswith("\\")]
        assert lines[0] == "Maximize"
        assert lines[1] == " obj: M"
        model = parse_lp(text)
        assert model.sense == "max"
        assert sorted(model.binaries) == ["x_v_0", "x_v_1"]
        assert "M" in model.variables
        assert _kinds(model) == {"x": 2, "a": 2, "l": 2, "z": 1}

    def test_regret_header(self, tiny):
        c = ScenarioSet(tiny)
        c.add({"v": 1}, upper_params(tiny))
        text = export_milp(tiny, c, REGRET)
        assert "\nMinimize\n obj: R\n" in text
        assert parse_lp(text).var_bounds("R") == (-np.inf, np.inf)

    @given(st.data())
    def test_counts_match_formula(self, data):
        inst = data.draw(instances(max_n=8))
        c = ScenarioSet(inst)
        for _ in range(data.draw(st.integers(1, 3))):
            c.add(data.draw(policies(inst)), data.draw(params_in(inst)))
        model = parse_lp(export_milp(inst, c))
        want = expected_counts(inst, len(c))
        assert len(model.binaries) == want["binaries"]
        assert len(model.variables) - len(model.binaries) == want["continuous"]
        assert len(model.constraints) == want["rows"]
        scen_rows = [r for r in model.constraints if "_s" in r.name]
        assert len(scen_rows) == want["scenario_rows"]

    def test_bad_node_names(self):
        inst = make_instance("s", {"s": 1, "a b": 1}, [("s", "a b", [(0, 0.1, 0.2), (1, 0.5, 0.9)])], 1)
        c = ScenarioSet(inst)
        c.add(null_policy(inst), lower_params(inst))
        with pytest.raises(ValueError):
            export_milp(inst, c)

    def test_empty_scenarios(self, tiny):
        with pytest.raises(ValueError):
            export_milp(tiny, ScenarioSet(tiny))


class TestParser:
    def test_sections_and_bounds(self):
        text = """\\ comment
Minimize
 obj: 2 x + 3 y
   - z
Subject To
 c1: x + y >= 1
 c2: - x + 2.5e0 z <= 4
 c3: y - z = 0
Bounds
 x <= 5
 -2 <= z <= 3
 y free
General
 x
End
"""
        m = parse_lp(text)
        assert m.sense == "min"
        assert m.objective == {"x": 2.0, "y": 3.0, "z": -1.0}
        assert [r.name for r in m.constraints] == ["c1", "c2", "c3"]
        assert m.constraints[1].coeffs == {"x": -1.0, "z": 2.5}
        assert m.var_bounds("x") == (0.0, 5.0)
        assert m.var_bounds("z") == (-2.0, 3.0)
        assert m.var_bounds("y") == (-np.inf, np.inf)
        assert m.integers == ["x"]

    def test_garbage(self):
        with pytest.raises(LpParseError):
            parse_lp("Maximize\n obj: M\nSubject To\n c1: M <=\nEnd\n")


class TestAgainstMaster:
    @settings(max_examples=25)
    @given(st.data())
    def test_optimum_matches_branch_and_bound(self, data):
        inst = data.draw(instances(max_n=6, max_actions=3))
        c = ScenarioSet(inst)
        for _ in range(data.draw(st.integers(1, 3))):
            c.add(data.draw(policies(inst)), data.draw(params_in(inst)))
        for objective in (RATIO, REGRET):
            value, _ = _solve(export_milp(inst, c, objective))
            assert value == pytest.approx(solve_master(inst, c, objective).value, abs=1e-6)

    def test_three_nodes_two_scenarios(self):
        inst = make_instance(
            "s", {"s": 1, "a": 2, "b": 3},
            [("s", "a", [(0, 0.2, 0.4), (1, 0.7, 0.9)]), ("s", "b", [(0, 0.1, 0.3), (1, 0.6, 1.0)])], 1,
        )
        c = ScenarioSet(inst)
        c.add({"a": 1, "b": 0}, upper_params(inst))
        c.add({"a": 0, "b": 1}, lower_params(inst))
        value, _ = _solve(export_milp(inst, c))
        assert value == pytest.approx(solve_master(inst, c).value, abs=1e-6)

    def test_no_decisions(self):
        inst = make_instance("s", {"s": 1, "a": 2, "b": 1}, [("s", "a", [(0, 0.2, 0.6)]), ("a", "b", [(0, 0.5, 0.9)])], 0)
        c = ScenarioSet(inst)
        c.add(null_policy(inst), upper_params(inst))
        c.add(null_policy(inst), midpoint_params(inst))
        text = export_milp(inst, c)
        assert "budget:" not in text
        value, x = _solve(text)
        assert x["x_a_0"] == pytest.approx(1.0)
        assert x["x_b_0"] == pytest.approx(1.0)
        # the decision's own values, one scenario at a time, over the adversary constants
        want = min(
            sum(inst.rewards[v] * a for v, a in accessibilities(inst, null_policy(inst), s.params).items()) / s.value
            for s in c
        )
        assert value == pytest.approx(want, abs=1e-9)

    def test_accessibilities_are_linearized_exactly(self):
        # with the binaries fixed, every a variable equals the product-form accessibility,
        # including actions whose scenario probability is below the action-0 probability
        rng = np.random.default_rng(5)
        for _ in range(15):
            inst = random_instance(rng, 7, max_actions=3, budget_share=1.0)
            pol = {e.child: int(rng.integers(0, len(e.actions))) for e in inst.edges}
            params = {e.child: tuple(float(rng.uniform(a.p_low, a.p_high)) for a in e.actions) for e in inst.edges}
            c = ScenarioSet(inst)
            c.add(null_policy(inst), params)
            text = export_milp(inst, c)
            fix = "".join(
                f" fix_{e.child}_{i}: x_{e.child}_{i} = {1 if pol[e.child] == i else 0}\n"
                for e in inst.edges for i in range(len(e.actions))
            )
            _, x = _solve(text.replace("Subject To\n", "Subject To\n" + fix, 1))
            acc = accessibilities(inst, pol, params)
            for v, a in acc.items():
                assert x[f"a_s0_{v}"] == pytest.approx(a, abs=1e-7)
