"""Optimal policies and optimality gaps used as ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, TabularPolicy, discounted_visitation, evaluate_policy

MAX_VI_ITERS = 1_000_000


@dataclass(frozen=True, eq=False)
class OptimalSolution:
    v_star: np.ndarray
    q_star: np.ndarray
    pi_star: TabularPolicy
    nu_star: np.ndarray

    @property
    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.pi_star.probs, axis=1)


def greedy_policy(q: np.ndarray, tie_tol: float = 0.0) -> TabularPolicy:
    """One-hot greedy policy; ties (within ``tie_tol``) go to the lowest index."""
    best = q >= q.max(axis=1, keepdims=True) - tie_tol
    actions = np.argmax(best, axis=1)
    probs = np.zeros_like(q, dtype=float)
    probs[np.arange(q.shape[0]), actions] = 1.0
    return TabularPolicy(probs)


def solve_optimal(mdp: TabularMdp, tol: float = 1e-10) -> OptimalSolution:
    """Value iteration until ||v - Tv||_inf <= tol, then exact evaluation of the greedy policy."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.zeros(mdp.n_states)
    for _ in range(MAX_VI_ITERS):
        q = mdp.reward + mdp.gamma * mdp.transition @ v
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) <= tol:
            v = v_new
            break
        v = v_new
    else:
        raise RuntimeError("value iteration did not converge")
    q = mdp.reward + mdp.gamma * mdp.transition @ v
    pi_star = greedy_policy(q, tie_tol=tol)
    values = evaluate_policy(mdp, pi_star)
    nu_star = discounted_visitation(mdp, pi_star).nu
    return OptimalSolution(v_star=values.v, q_star=values.q, pi_star=pi_star, nu_star=nu_star)


def optimality_gap(mdp: TabularMdp, policy: TabularPolicy, opt: OptimalSolution) -> float:
    """L(pi*) - L(pi) with the optimal visitation as outer distribution."""
    v = evaluate_policy(mdp, policy).v
    return float(opt.nu_star @ (opt.v_star - v))
