import numpy as np
import pytest

from conftest import make
from hispbvi.model import LabelError, from_tables, joint_reward, validate


def tiny(**over):
    kw = dict(
        states=["a", "b"],
        actions=[["x", "y"], ["x"]],
        observations=[["o"], ["o"]],
        transition={(s, (u, "x")): {"a": 0.5, "b": 0.5} for s in "ab" for u in "xy"},
        observation={((u, "x"), s): {("o", "o"): 1.0} for s in "ab" for u in "xy"},
        reward={("a", ("x", "x")): 1.0},
        initial_belief={"a": 1.0},
    )
    kw.update(over)
    return from_tables(**kw)


def test_valid_tiny_model_has_no_violations():
    assert validate(tiny()) == []


def test_unnormalised_transition_row_is_reported_with_labels():
    tr = {(s, (u, "x")): {"a": 0.5, "b": 0.5} for s in "ab" for u in "xy"}
    tr[("a", ("y", "x"))] = {"a": 0.5, "b": 0.6}
    issues = validate(tiny(transition=tr))
    assert len(issues) == 1
    assert "x=a" in issues[0] and "u=y,x" in issues[0]


def test_negative_probability_is_reported():
    ob = {((u, "x"), s): {("o", "o"): 1.0} for s in "ab" for u in "xy"}
    ob[(("x", "x"), "b")] = {("o", "o"): -1.0}
    issues = validate(tiny(observation=ob))
    assert any("negative" in m for m in issues)


def test_unknown_reward_label_is_one_violation():
    issues = validate(tiny(reward={("a", ("zz", "x")): 1.0}))
    assert len(issues) == 1 and "zz" in issues[0]


def test_bad_initial_belief_and_discount():
    assert any("initial belief" in m for m in validate(tiny(initial_belief=[0.3, 0.3])))
    assert any("discount" in m for m in validate(tiny(discount=1.5)))


@pytest.mark.parametrize("u, x, r", [
    (("open-right", "open-right"), "tiger-left", 20.0),
    (("open-left", "open-left"), "tiger-left", -50.0),
    (("listen", "open-left"), "tiger-left", -101.0),
    (("listen", "open-right"), "tiger-left", 9.0),
    (("listen", "listen"), "tiger-right", -2.0),
    (("open-left", "open-right"), "tiger-left", -90.0),
])
def test_tiger_rewards(u, x, r):
    assert joint_reward(make("tiger", 2), x, u) == r


def test_joint_reward_accepts_indices_and_rejects_unknown_labels():
    m = make("tiger", 2)
    assert joint_reward(m, 0, (2, 2)) == 20.0
    with pytest.raises(LabelError):
        joint_reward(m, "tiger-left", ("listen", "jump"))


def test_mixed_radix_is_player_zero_major():
    m = make("tiger", 3)
    assert m.joint_action_index((1, 0, 0)) == 9
    assert m.joint_action(m.joint_action_index((2, 1, 0))) == (2, 1, 0)
    assert m.joint_obs_index((1, 0, 1)) == 5


def test_transition_kernels_are_normalised():
    for fam in ("tiger", "recycling", "mabc", "grid3x3"):
        m = make(fam, 3 if fam != "grid3x3" else 2)
        for x in range(m.n_states):
            for ju in range(m.n_joint_actions):
                _, _, ps = m.outcomes(x, ju)
                assert abs(ps.sum() - 1.0) < 1e-12
        assert np.isclose(m.initial_belief.sum(), 1.0)
