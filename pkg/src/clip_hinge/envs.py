"""Desk-scale environments: chains, gridworlds and seeded random MDPs."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .mdp import TabularMdp
from .seeding import stream

ENV_KINDS = ("chain", "gridworld", "random")

# gridworld action order: up, right, down, left
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "chain"
    n_states: int = 5          # chain length / random MDP size
    n_actions: int = 3         # random MDPs only
    size: int = 3              # gridworld side length
    slip: float = 0.0
    gamma: float = 0.9
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def chain(n: int, gamma: float = 0.9) -> TabularMdp:
    """Actions 0=left, 1=right; the right end is absorbing and pays 1 per step.

    Moving left from state 0 stays put. Starts in state 0.
    """
    if n < 2:
        raise ValueError("chain needs at least 2 states")
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2))
    for s in range(n - 1):
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, s + 1] = 1.0
    P[n - 1, :, n - 1] = 1.0
    R[n - 1, :] = 1.0
    mu = np.zeros(n)
    mu[0] = 1.0
    return TabularMdp(P, R, gamma, mu)


def gridworld(size: int, slip: float = 0.0, gamma: float = 0.9) -> TabularMdp:
    """size x size grid with 4 moves; entering the bottom-right goal pays 1.

    With probability ``slip`` the move direction is drawn uniformly at random.
    The goal is absorbing with zero reward; the start is the top-left cell.
    """
    if size < 2:
        raise ValueError("gridworld needs size >= 2")
    if not 0.0 <= slip <= 1.0:
        raise ValueError("slip must lie in [0, 1]")
    n = size * size
    goal = n - 1
    P = np.zeros((n, 4, n))

    def step(s, move):
        r, c = divmod(s, size)
        r2 = min(max(r + move[0], 0), size - 1)
        c2 = min(max(c + move[1], 0), size - 1)
        return r2 * size + c2

    for s in range(n):
        for a in range(4):
            if s == goal:
                P[s, a, goal] = 1.0
                continue
            P[s, a, step(s, MOVES[a])] += 1.0 - slip
            for m in MOVES:
                P[s, a, step(s, m)] += slip / 4
    R = P[:, :, goal].copy()
    R[goal] = 0.0
    mu = np.zeros(n)
    mu[0] = 1.0
    return TabularMdp(P, R, gamma, mu)


def random_mdp(n_states: int, n_actions: int, gamma: float = 0.9, seed: int = 0) -> TabularMdp:
    """Dirichlet(1) transition rows, Unif[0, 1] rewards, uniform start."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("sizes must be positive")
    rng = stream(seed, "env")
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    mu = np.full(n_states, 1.0 / n_states)
    return TabularMdp(P, R, gamma, mu)


def build_env(spec: EnvSpec) -> TabularMdp:
    if spec.kind == "chain":
        return chain(spec.n_states, spec.gamma)
    if spec.kind == "gridworld":
        return gridworld(spec.size, spec.slip, spec.gamma)
    if spec.kind == "random":
        return random_mdp(spec.n_states, spec.n_actions, spec.gamma, spec.seed)
    raise ValueError(f"unknown env kind {spec.kind!r}; expected one of {ENV_KINDS}")
