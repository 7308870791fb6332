import numpy as np
import pytest

from clip_hinge.envs import EnvSpec, build_env, chain, gridworld, random_mdp
from clip_hinge.oracle import solve_optimal

from conftest import two_state_chain


def test_chain2_matches_hand_fixture_under_right_moves():
    built = chain(2, gamma=0.5)
    hand = two_state_chain(0.5)
    # moving right reproduces the fixture's dynamics and rewards
    np.testing.assert_array_equal(built.transition[:, 1], hand.transition[:, 1])
    np.testing.assert_array_equal(built.reward, hand.reward)
    np.testing.assert_array_equal(built.mu, hand.mu)
    np.testing.assert_allclose(solve_optimal(built).v_star, solve_optimal(hand).v_star, atol=1e-9)


def test_chain_layout():
    mdp = chain(5)
    assert (mdp.n_states, mdp.n_actions) == (5, 2)
    assert mdp.transition[0, 0, 0] == 1.0 and mdp.transition[2, 0, 1] == 1.0 and mdp.transition[2, 1, 3] == 1.0
    assert mdp.transition[4, 0, 4] == mdp.transition[4, 1, 4] == 1.0
    assert mdp.reward[4].tolist() == [1.0, 1.0] and mdp.reward[:4].sum() == 0


def test_random_seed_contract():
    a, b = random_mdp(5, 3, seed=7), random_mdp(5, 3, seed=7)
    assert np.array_equal(a.transition, b.transition) and np.array_equal(a.reward, b.reward)
    assert not np.array_equal(a.transition, random_mdp(5, 3, seed=8).transition)


@pytest.mark.parametrize("gamma", [0.5, 0.9])
def test_deterministic_gridworld_values(gamma):
    size = 3
    opt = solve_optimal(gridworld(size, 0.0, gamma))
    goal = size * size - 1
    for s in range(goal):
        r, c = divmod(s, size)
        d = (size - 1 - r) + (size - 1 - c)
        assert opt.v_star[s] == pytest.approx(gamma ** (d - 1), abs=1e-9)
    assert opt.v_star[goal] == pytest.approx(0.0, abs=1e-12)


def test_slippery_gridworld_is_valid_and_slower():
    det = solve_optimal(gridworld(3, 0.0))
    slip = solve_optimal(gridworld(3, 0.3))
    assert np.all(slip.v_star[:-1] < det.v_star[:-1])


@pytest.mark.parametrize("spec", [EnvSpec("chain", n_states=1), EnvSpec("gridworld", size=1),
                                  EnvSpec("random", n_states=0), EnvSpec("torus"),
                                  EnvSpec("gridworld", slip=1.5)])
def test_invalid_specs(spec):
    with pytest.raises(ValueError):
        build_env(spec)


def test_default_specs_are_solvable_quickly():
    import time
    for spec in (EnvSpec("chain"), EnvSpec("gridworld"), EnvSpec("random"), EnvSpec("gridworld", size=5, slip=0.2)):
        t0 = time.perf_counter()
        solve_optimal(build_env(spec))
        assert time.perf_counter() - t0 < 1.0
