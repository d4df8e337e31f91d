import pytest
from hypothesis import given
from hypothesis import strategies as st

from riverguard.binarize import DUMMY_ACTIONS, binarize, lift_params, lift_policy, project_params, project_policy
from riverguard.model import InstanceError, NetworkInstance, evaluate, make_instance, policy_cost
from strategies import instances, params_in, policies


@pytest.fixture
def star():
    leaf = [(0, 0.5, 0.6), (2, 0.9, 1.0)]
    return make_instance(
        "u", {"u": 1, "a": 2, "b": 3, "c": 4},
        [("u", "a", leaf), ("u", "b", leaf), ("u", "c", leaf)], 2,
    )


class TestBinarize:
    def test_three_children_split_with_one_dummy(self, star):
        binary, mapping = binarize(star)
        (d,) = binary.dummies
        assert binary.children["u"] == ["a", d]
        assert binary.children[d] == ["b", "c"]
        assert binary.rewards[d] == 0.0
        assert binary.edge_of[d].actions == DUMMY_ACTIONS
        assert DUMMY_ACTIONS[0].cost == 0 and DUMMY_ACTIONS[0].p_low == DUMMY_ACTIONS[0].p_high == 1.0
        assert mapping[d] == "u"
        assert all(mapping[v] == v for v in star.rewards)

    def test_binary_tree_is_returned_unchanged(self, tiny):
        binary, mapping = binarize(tiny)
        assert binary is tiny
        assert mapping == {"s": "s", "v": "v"}

    def test_single_node(self):
        inst = make_instance("s", {"s": 1}, [], 0)
        binary, mapping = binarize(inst)
        assert binary is inst and mapping == {"s": "s"}

    def test_dummy_names_avoid_existing_ids(self):
        leaf = [(0, 0.5, 0.5)]
        inst = make_instance(
            "u", {"u": 1, "u~0": 1, "b": 1, "c": 1},
            [("u", "u~0", leaf), ("u", "b", leaf), ("u", "c", leaf)], 0,
        )
        binary, _ = binarize(inst)
        assert binary.dummies == {"u~1"}

    def test_invalid_instance_is_rejected(self):
        bad = NetworkInstance("s", {"s": 0.0}, (), 0.0)
        with pytest.raises(InstanceError):
            binarize(bad)

    @given(st.data())
    def test_values_preserved(self, data):
        inst = data.draw(instances(max_n=12))
        binary, _ = binarize(inst)
        assert binary.is_binary()
        assert set(inst.rewards) <= set(binary.rewards)
        pol = data.draw(policies(inst, feasible=False))
        params = data.draw(params_in(inst))
        lp, lq = lift_policy(binary, pol), lift_params(binary, params)
        assert evaluate(binary, lp, lq) == pytest.approx(evaluate(inst, pol, params), rel=1e-12)
        assert policy_cost(binary, lp) == policy_cost(inst, pol)
        assert project_policy(binary, lp) == pol
        assert project_params(binary, lq) == params
