import numpy as np
import pytest

from conftest import make
from oracles import optimal_value, policy_value_by_trajectories
from hispbvi import benchgen
from hispbvi.baselines import IqlConfig, TableTooLarge, evaluate_policies, greedy_policies, iql_train
from hispbvi.occupancy import history_pool


def test_config_validation():
    with pytest.raises(ValueError):
        IqlConfig(lr=0.0)
    with pytest.raises(ValueError):
        IqlConfig(eps_end=1.5)
    cfg = IqlConfig(eps_start=1.0, eps_end=0.0, eps_decay_episodes=10)
    assert cfg.epsilon(0) == 1.0 and cfg.epsilon(5) == pytest.approx(0.5) and cfg.epsilon(99) == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_one_step_game_reaches_a_pure_equilibrium(seed):
    m = make("tiger", 2, horizon=1)
    cfg = IqlConfig(episodes=3000, eval_every=1000, eps_decay_episodes=1500, eps_end=0.0,
                    seed=seed)
    pols, curve = iql_train(m, cfg)
    value = curve[-1][1]
    assert value <= optimal_value(m) + 1e-9
    # independent learners settle where no single player gains by deviating
    for i in range(2):
        for a in range(m.n_actions[i]):
            dev = [dict(p) for p in pols]
            dev[i][0] = a
            assert evaluate_policies(m, dev) <= value + 1e-9


BANDIT = """agents: 2
discount: 1
values: reward
states: only
start:
uniform
actions:
a b
a b
observations:
none
none
T: * :
identity
O: * :
uniform
R: * * : * : * : * : 0
R: a a : * : * : * : 1
"""


def test_single_state_bandit_picks_the_rewarding_action():
    m = benchgen.parse_model(BANDIT).with_horizon(1, 1.0)
    pols, curve = iql_train(m, IqlConfig(episodes=500, eval_every=500, eps_decay_episodes=300))
    assert pols == [{0: 0}, {0: 0}]
    assert curve[-1][1] == pytest.approx(1.0)


def test_zero_reward_keeps_q_at_zero():
    m = make("tiger", 2, horizon=3)
    m.reward[:] = 0.0
    pols, curve = iql_train(m, IqlConfig(episodes=200, eval_every=50))
    assert all(v == 0.0 for _, v in curve)
    assert all(a == 0 for p in pols for a in p.values())


def test_curve_shape():
    m = make("mabc", 2, horizon=3)
    _, curve = iql_train(m, IqlConfig(episodes=1000, eval_every=300))
    assert [e for e, _ in curve] == [300, 600, 900, 1000]


def test_table_guard():
    m = make("tiger", 2, horizon=6)
    with pytest.raises(TableTooLarge):
        iql_train(m, IqlConfig(episodes=1000, max_entries=10))


@pytest.mark.parametrize("fam", ["tiger", "mabc", "recycling"])
def test_exact_evaluation_matches_trajectory_enumeration(fam):
    m = make(fam, 2, horizon=3)
    pols, _ = iql_train(m, IqlConfig(episodes=400, eval_every=400, seed=2))
    pool = history_pool(m)
    # translate action/observation sequences into pool ids for the oracle
    lookup = [dict() for _ in range(m.n_players)]
    for i in range(m.n_players):
        for h in pols[i]:
            lookup[i][tuple(pool.sequence(i, h))] = pols[i][h]

    def policy(i, seq):
        # unseen histories and all their extensions play action 0
        for k in range(len(seq) + 1):
            if tuple(seq[:k]) not in lookup[i]:
                return 0
        return lookup[i][tuple(seq)]

    assert evaluate_policies(m, pols) == pytest.approx(
        policy_value_by_trajectories(m, policy), abs=1e-9)


def test_greedy_policies_break_ties_low():
    Q = [{0: np.array([1.0, 1.0]), 3: np.array([0.0, 2.0])}]
    assert greedy_policies(Q) == [{0: 0, 3: 1}]
