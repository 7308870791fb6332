"""Finite discounted MDPs, exact policy evaluation and visitation distributions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

ROW_TOL = 1e-12


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with transition tensor ``transition[s, a, s']``.

    Rewards are validated against ``r_max`` rather than rescaled.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    mu: np.ndarray
    r_max: float = 1.0

    def __post_init__(self):
        P = _frozen(self.transition)
        R = _frozen(self.reward)
        mu = _frozen(self.mu)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise ValueError("need at least one state and one action")
        if R.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}, got {R.shape}")
        if mu.shape != (S,):
            raise ValueError(f"mu must have shape {(S,)}, got {mu.shape}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > ROW_TOL:
            raise ValueError("transition rows must be probability vectors")
        if np.any(R < 0) or np.any(R > self.r_max):
            raise ValueError(f"rewards must lie in [0, {self.r_max}]")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > ROW_TOL:
            raise ValueError("mu must be a probability vector")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def v_bound(self) -> float:
        return self.r_max / (1.0 - self.gamma)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "r_max": self.r_max,
            "mu": self.mu.tolist(),
            "reward": self.reward.reshape(-1).tolist(),
            "transition": self.transition.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        S, A = int(d["n_states"]), int(d["n_actions"])
        return cls(
            transition=np.asarray(d["transition"], dtype=float).reshape(S, A, S),
            reward=np.asarray(d["reward"], dtype=float).reshape(S, A),
            gamma=float(d["gamma"]),
            mu=np.asarray(d["mu"], dtype=float),
            r_max=float(d.get("r_max", 1.0)),
        )


def save_mdp(mdp: TabularMdp, path) -> None:
    """Write ``mdp`` as JSON with row-major tables."""
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=1))


def load_mdp(path) -> TabularMdp:
    return TabularMdp.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """Direct parameterization: ``probs[s, a] = pi(a|s)``.

    ``log_probs`` is carried alongside the probabilities so that long runs
    keep strict positivity after ``probs`` underflows to 0.0.
    """

    probs: np.ndarray
    log_probs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.log_probs is None:
            p = np.asarray(self.probs, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                lp = np.log(p)
        else:
            lp = np.asarray(self.log_probs, dtype=float)
            p = np.exp(lp) if self.probs is None else np.asarray(self.probs, dtype=float)
            if p.shape != lp.shape:
                raise ValueError("probs and log_probs must share a shape")
        if p.ndim != 2:
            raise ValueError("policy table must be 2-D (states x actions)")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > ROW_TOL:
            raise ValueError("policy rows must be probability vectors")
        object.__setattr__(self, "probs", _frozen(p))
        object.__setattr__(self, "log_probs", _frozen(lp))

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def from_log_probs(cls, log_probs) -> "TabularPolicy":
        lp = np.asarray(log_probs, dtype=float)
        lp = lp - logsumexp(lp, axis=1, keepdims=True)
        return cls(np.exp(lp), log_probs=lp)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def is_strictly_positive(self) -> bool:
        return bool(np.all(np.isfinite(self.log_probs)))


@dataclass(frozen=True, eq=False)
class ValueTables:
    v: np.ndarray
    q: np.ndarray
    adv: np.ndarray


@dataclass(frozen=True, eq=False)
class VisitationDist:
    nu: np.ndarray
    sigma: np.ndarray
    sigma_tilde: np.ndarray


def _check_pair(mdp: TabularMdp, policy: TabularPolicy) -> None:
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"({mdp.n_states}, {mdp.n_actions})"
        )


def policy_matrices(mdp: TabularMdp, policy: TabularPolicy):
    """State-to-state kernel ``P_pi`` and expected reward ``r_pi``."""
    _check_pair(mdp, policy)
    pi = policy.probs
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    r_pi = np.einsum("sa,sa->s", pi, mdp.reward)
    return P_pi, r_pi


def _q_from_v(mdp: TabularMdp, v: np.ndarray) -> np.ndarray:
    return mdp.reward + mdp.gamma * mdp.transition @ v


def evaluate_policy(mdp: TabularMdp, policy: TabularPolicy) -> ValueTables:
    """Exact V, Q, A by a dense solve of ``(I - gamma P_pi) V = r_pi``."""
    P_pi, r_pi = policy_matrices(mdp, policy)
    S = mdp.n_states
    v = np.linalg.solve(np.eye(S) - mdp.gamma * P_pi, r_pi)
    q = _q_from_v(mdp, v)
    # V recomputed as E_pi[Q] so that sum_a pi(a|s) A(s,a) vanishes to rounding
    v = np.einsum("sa,sa->s", policy.probs, q)
    return ValueTables(v=_frozen(v), q=_frozen(q), adv=_frozen(q - v[:, None]))


def evaluate_policy_iterative(mdp: TabularMdp, policy: TabularPolicy, n_iters: int = 10_000) -> np.ndarray:
    """Fixed-point iteration of the Bellman expectation operator (cross-check only)."""
    P_pi, r_pi = policy_matrices(mdp, policy)
    v = np.zeros(mdp.n_states)
    for _ in range(n_iters):
        v = r_pi + mdp.gamma * P_pi @ v
    return v


def discounted_visitation(mdp: TabularMdp, policy: TabularPolicy, start=None) -> VisitationDist:
    """nu = (1 - gamma) start^T (I - gamma P_pi)^{-1}; ``start`` defaults to mu."""
    P_pi, _ = policy_matrices(mdp, policy)
    start = mdp.mu if start is None else np.asarray(start, dtype=float)
    S = mdp.n_states
    nu = (1.0 - mdp.gamma) * np.linalg.solve((np.eye(S) - mdp.gamma * P_pi).T, start)
    nu = np.clip(nu, 0.0, None)
    nu = nu / nu.sum()
    sigma = nu[:, None] * policy.probs
    sigma_tilde = np.repeat(nu[:, None] / mdp.n_actions, mdp.n_actions, axis=1)
    return VisitationDist(nu=_frozen(nu), sigma=_frozen(sigma), sigma_tilde=_frozen(sigma_tilde))


def stationary_distribution(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """A distribution d with d P_pi = d (least-squares solve with the sum constraint).

    It is the unique distribution that equals its own discounted visitation,
    for an irreducible chain.
    """
    P_pi, _ = policy_matrices(mdp, policy)
    S = mdp.n_states
    M = np.vstack([(P_pi - np.eye(S)).T, np.ones((1, S))])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    d, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    d = np.clip(d, 0.0, None)
    return d / d.sum()


def total_expected_reward(mdp: TabularMdp, policy: TabularPolicy, nu_star) -> float:
    """L(pi) = sum_s nu_star(s) V^pi(s)."""
    nu_star = np.asarray(nu_star, dtype=float)
    if nu_star.shape != (mdp.n_states,) or np.any(nu_star < 0) or abs(nu_star.sum() - 1) > 1e-10:
        raise ValueError("nu_star must be a probability vector over states")
    return float(nu_star @ evaluate_policy(mdp, policy).v)


def performance_difference_residual(mdp: TabularMdp, pi_new: TabularPolicy, pi_old: TabularPolicy, outer) -> float:
    """|L(pi_new) - L(pi_old) - (1-gamma)^{-1} sum_s d(s) <A^old(s,.), pi_new - pi_old>|.

    ``L`` is taken under the state distribution ``outer`` and ``d`` is the
    discounted visitation of ``pi_new`` started from ``outer``.
    """
    outer = np.asarray(outer, dtype=float)
    lhs = total_expected_reward(mdp, pi_new, outer) - total_expected_reward(mdp, pi_old, outer)
    adv = evaluate_policy(mdp, pi_old).adv
    d = discounted_visitation(mdp, pi_new, start=outer).nu
    rhs = (d @ np.sum(adv * (pi_new.probs - pi_old.probs), axis=1)) / (1.0 - mdp.gamma)
    return abs(lhs - rhs)
