import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import master_oracle, path_value, random_instance
from riverguard.adversary import RATIO, REGRET
from riverguard.master import ScenarioSet, master_value, solve_master
from riverguard.model import (
    Action,
    Edge,
    NetworkInstance,
    evaluate,
    lower_params,
    make_instance,
    null_policy,
    policy_cost,
    upper_params,
)
from strategies import instances, params_in, policies


@st.composite
def scenario_sets(draw, inst, max_size=4):
    out = ScenarioSet(inst)
    for _ in range(draw(st.integers(1, max_size))):
        out.add(draw(policies(inst)), draw(params_in(inst)))
    return out


def _pairs(scenarios):
    return [(s.params, s.value) for s in scenarios]


class TestScenarioSet:
    def test_duplicates_are_rejected(self, tiny):
        c = ScenarioSet(tiny)
        assert c.add({"v": 1}, upper_params(tiny))
        assert not c.add({"v": 1}, upper_params(tiny))
        assert len(c) == 1
        assert ({"v": 1}, upper_params(tiny)) in c

    def test_stored_value_is_checked(self, tiny):
        c = ScenarioSet(tiny)
        with pytest.raises(ValueError):
            c.add({"v": 1}, upper_params(tiny), value=1.5)
        assert c.add({"v": 1}, upper_params(tiny), value=2.0)

    def test_json_round_trip(self, tiny):
        c = ScenarioSet(tiny)
        c.add({"v": 1}, upper_params(tiny))
        c.add({"v": 0}, lower_params(tiny))
        back = ScenarioSet.from_data(tiny, json.loads(c.to_json()))
        assert [s.key() for s in back] == [s.key() for s in c]
        assert [s.value for s in back] == pytest.approx([s.value for s in c])

    def test_accepts_bare_list(self, tiny):
        c = ScenarioSet(tiny)
        c.add({"v": 0}, lower_params(tiny))
        data = json.loads(c.to_json())["scenarios"]
        assert len(ScenarioSet.from_data(tiny, data)) == 1


class TestExamples:
    def test_tiny_single_scenario(self, tiny):
        c = ScenarioSet(tiny)
        c.add({"v": 1}, upper_params(tiny))
        res = solve_master(tiny, c, RATIO)
        assert res.policy == {"v": 1}
        assert res.value == pytest.approx(1.0)
        assert res.scenario_values == pytest.approx([2.0])

    def test_point_problem_on_three_edges(self):
        # one scenario at degenerate parameters: the master is the budgeted point problem
        inst = make_instance(
            "s", {"s": 1, "a": 2, "b": 3, "c": 4},
            [("s", "a", [(0, 0.5, 0.5), (1, 0.9, 0.9)]),
             ("a", "b", [(0, 0.3, 0.3), (1, 0.95, 0.95)]),
             ("s", "c", [(0, 0.2, 0.2), (1, 0.7, 0.7)])],
            1,
        )
        params = lower_params(inst)
        c = ScenarioSet(inst)
        c.add(null_policy(inst), params)
        res = solve_master(inst, c, RATIO)
        brute = max(
            (path_value(inst, {"a": x, "b": y, "c": w}, params), (x, y, w))
            for x in (0, 1) for y in (0, 1) for w in (0, 1) if x + y + w <= 1
        )
        assert evaluate(inst, res.policy, params) == pytest.approx(brute[0])
        assert res.value == pytest.approx(brute[0] / c[0].value)

    def test_dominating_scenario_decides(self):
        rng = np.random.default_rng(3)
        checked = 0
        for _ in range(40):
            inst = random_instance(rng, 6, max_actions=3, budget_share=0.4)
            weak = (null_policy(inst), upper_params(inst))
            strong = ({e.child: len(e.actions) - 1 for e in inst.edges}, lower_params(inst))
            c = ScenarioSet(inst)
            c.add(*strong)
            c.add(*weak)
            pols = list(_all_policies(inst))
            ratios = [[evaluate(inst, p, s.params) / s.value for s in c] for p in pols]
            if not all(r[0] <= r[1] for r in ratios):
                continue
            checked += 1
            alone = ScenarioSet(inst)
            alone.add(*strong)
            assert solve_master(inst, c, RATIO).policy == solve_master(inst, alone, RATIO).policy
        assert checked > 0

    def test_empty_set_rejected(self, tiny):
        with pytest.raises(ValueError):
            solve_master(tiny, ScenarioSet(tiny), RATIO)

    def test_unknown_objective(self, tiny):
        c = ScenarioSet(tiny)
        c.add({"v": 0}, lower_params(tiny))
        with pytest.raises(ValueError):
            solve_master(tiny, c, "profit")


def _all_policies(inst):
    edges = list(inst.edges)
    for combo in itertools.product(*[range(len(e.actions)) for e in edges]):
        pol = {e.child: i for e, i in zip(edges, combo)}
        if policy_cost(inst, pol) <= inst.budget + 1e-9:
            yield pol


class TestAgainstEnumeration:
    @given(st.data())
    def test_optimum(self, data):
        inst = data.draw(instances(max_n=8, max_actions=3))
        c = data.draw(scenario_sets(inst))
        for objective in (RATIO, REGRET):
            res = solve_master(inst, c, objective)
            want = master_oracle(inst, _pairs(c), objective)
            assert res.value == pytest.approx(want, rel=1e-9, abs=1e-12)
            assert res.cost <= inst.budget + 1e-9
            got, _ = master_value(objective, inst, res.policy, c)
            assert got == pytest.approx(res.value, rel=1e-9, abs=1e-12)

    @settings(max_examples=30)
    @given(st.data())
    def test_value_monotone_as_scenarios_grow(self, data):
        inst = data.draw(instances(max_n=7))
        c = ScenarioSet(inst)
        prev = {RATIO: np.inf, REGRET: -np.inf}
        for _ in range(4):
            c.add(data.draw(policies(inst)), data.draw(params_in(inst)))
            r = solve_master(inst, c, RATIO).value
            g = solve_master(inst, c, REGRET).value
            assert r <= prev[RATIO] + 1e-12
            assert g >= prev[REGRET] - 1e-12
            prev = {RATIO: r, REGRET: g}

    @settings(max_examples=20)
    @given(st.data())
    def test_deterministic(self, data):
        inst = data.draw(instances(max_n=8))
        c = data.draw(scenario_sets(inst))
        a = solve_master(inst, c, RATIO)
        b = solve_master(inst, ScenarioSet.from_data(inst, json.loads(c.to_json())), RATIO)
        assert a.policy == b.policy

    @settings(max_examples=30)
    @given(st.data(), st.sampled_from([RATIO, REGRET]), st.integers(1, 4))
    def test_runners_up_are_earlier_feasible_incumbents(self, data, objective, keep):
        inst = data.draw(instances(max_n=8, max_actions=3))
        c = data.draw(scenario_sets(inst))
        plain = solve_master(inst, c, objective)
        res = solve_master(inst, c, objective, runners_up=keep)
        assert res.policy == plain.policy
        assert res.value == plain.value
        assert len(res.runners_up) <= keep
        for pol in res.runners_up:
            assert pol != res.policy
            assert policy_cost(inst, pol) <= inst.budget + 1e-9
            got, _ = master_value(objective, inst, pol, c)
            if objective == RATIO:
                assert got <= res.value + 1e-9
            else:
                assert got >= res.value - 1e-9
        assert solve_master(inst, c, objective).runners_up == []

    def test_ties_go_to_the_cheaper_policy(self):
        # repairing does nothing here, so the free policy must win
        inst = NetworkInstance(
            root="s", rewards={"s": 1.0, "v": 1.0},
            edges=(Edge("s", "v", (Action(0.0, 0.5, 0.5), Action(2.0, 0.5, 0.5))),), budget=5.0,
        )
        c = ScenarioSet(inst)
        c.add({"v": 0}, lower_params(inst))
        assert solve_master(inst, c, RATIO).policy == {"v": 0}
        assert solve_master(inst, c, REGRET).policy == {"v": 0}

    def test_wide_instance(self):
        # 10 edges with 3 actions each, a handful of scenarios
        rng = np.random.default_rng(11)
        for _ in range(3):
            inst = random_instance(rng, 11, max_actions=3, budget_share=0.3)
            c = ScenarioSet(inst)
            for _ in range(3):
                pol = {e.child: int(rng.integers(0, len(e.actions))) for e in inst.edges}
                params = {
                    e.child: tuple(float(rng.uniform(a.p_low, a.p_high)) for a in e.actions) for e in inst.edges
                }
                c.add(pol, params)
            for objective in (RATIO, REGRET):
                assert solve_master(inst, c, objective).value == pytest.approx(
                    master_oracle(inst, _pairs(c), objective), rel=1e-9, abs=1e-12
                )

