import numpy as np
import pytest

from clip_hinge.mdp import TabularMdp


def two_state_chain(gamma=0.5, n_actions=2):
    """s0 -> s1 under every action; s1 absorbing with reward 1; start at s0."""
    P = np.zeros((2, n_actions, 2))
    P[:, :, 1] = 1.0
    R = np.zeros((2, n_actions))
    R[1] = 1.0
    return TabularMdp(P, R, gamma, np.array([1.0, 0.0]))


def bandit(rewards, gamma=0.9):
    """One state, one action per reward entry, self-loop."""
    r = np.asarray(rewards, dtype=float)[None, :]
    return TabularMdp(np.ones((1, r.shape[1], 1)), r, gamma, np.ones(1))


@pytest.fixture
def chain2():
    return two_state_chain()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
