"""Neural PPO-Clip: energy policy, TD critic, EMDA targets, regression.

Each outer iteration t samples one tuple set under pi_t, fits the critic by
projected TD, builds EMDA targets on the sampled states and regresses the
energy net onto tau_{t+1} (C_t A + f_t / tau_t).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax

from .emda import EmdaConfig, run_emda
from .hinge import BatchSample, ClassifierSpec
from .mdp import TabularMdp, TabularPolicy, evaluate_policy
from .metrics import RunMetrics
from .nets import FeatureMap, TwoLayerNet, forward, init_net, project, regress_loop, td_loop
from .oracle import OptimalSolution, solve_optimal
from .seeding import stream
from .tabular import IMPROVEMENT_TOL, RunResult, c_range_violations

_TINY = np.finfo(float).tiny
SCHEDULE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EnergyPolicy:
    """pi(a|s) proportional to exp(f(s, a) / temperature); infinite temperature is uniform."""

    net: TwoLayerNet
    temperature: float
    features: FeatureMap

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    def energies(self) -> np.ndarray:
        S, A, d = self.features.table.shape
        return forward(self.net, self.features.flat()).reshape(S, A)

    def scaled_energies(self) -> np.ndarray:
        """f / tau, or zeros at infinite temperature."""
        S, A, _ = self.features.table.shape
        if math.isinf(self.temperature):
            return np.zeros((S, A))
        return self.energies() / self.temperature

    def table(self) -> TabularPolicy:
        return TabularPolicy.from_log_probs(log_softmax(self.scaled_energies(), axis=1))


@dataclass(frozen=True)
class NeuralRunConfig:
    T: int = 64
    alpha_exp: float = 0.5
    K: int = 2
    eta: float | None = None       # defaults to T^-alpha_exp
    m_f: int = 64
    m_q: int = 64
    T_upd: int = 10_000
    radius_f: float = 10.0
    radius_q: float = 10.0
    classifier: ClassifierSpec = field(default_factory=lambda: ClassifierSpec("ratio", 0.2))
    rng_seed: int = 0
    adv_tol: float = 1e-9
    symmetric_init: bool = True
    warm_start: bool = True
    record_timing: bool = False

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError("T must be a positive integer")
        if not 0.5 <= self.alpha_exp < 1.0:
            raise ValueError("alpha_exp must lie in [1/2, 1)")
        if self.K < 1 or self.T_upd < 1 or self.m_f < 1 or self.m_q < 1:
            raise ValueError("K, T_upd and the widths must be positive")
        if self.eta is None:
            object.__setattr__(self, "eta", float(self.T) ** -self.alpha_exp)
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        worst = self.schedule_slack()
        if worst > SCHEDULE_TOL:
            raise ValueError(f"temperature schedule violates tau_(t+1)^2 (U_C^2 + tau_t^-2) <= 1 by {worst:.3g}")

    def temperature(self, t: int) -> float:
        """tau_t = T^alpha / (K t); tau_0 is infinite (uniform start)."""
        if t == 0:
            return math.inf
        return float(self.T) ** self.alpha_exp / (self.K * t)

    def schedule_slack(self) -> float:
        """max over 1 <= t < T of tau_(t+1)^2 (U_C^2 + tau_t^-2) - 1, with U_C = K eta."""
        u_c = self.K * self.eta
        worst = -np.inf
        for t in range(1, self.T):
            worst = max(worst, self.temperature(t + 1) ** 2 * (u_c ** 2 + self.temperature(t) ** -2) - 1.0)
        return float(worst) if self.T > 1 else -1.0

    @property
    def emda(self) -> EmdaConfig:
        return EmdaConfig(self.eta, self.K)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("T", "alpha_exp", "K", "eta", "m_f", "m_q", "T_upd",
                                             "radius_f", "radius_q", "rng_seed", "adv_tol",
                                             "symmetric_init", "warm_start")}
        out["classifier"] = {"kind": self.classifier.kind, "epsilon": self.classifier.epsilon,
                             "weight_mode": self.classifier.weight_mode}
        return out


@dataclass(frozen=True, eq=False)
class SampleTuples:
    """Column arrays of (s, a, a0, s_next, a_next, reward) tuples."""

    s: np.ndarray
    a: np.ndarray
    a0: np.ndarray
    s_next: np.ndarray
    a_next: np.ndarray
    reward: np.ndarray

    def __len__(self) -> int:
        return len(self.s)


def _draw(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draws, one per row."""
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def _as_table(policy) -> TabularPolicy:
    return policy.table() if isinstance(policy, EnergyPolicy) else policy


def sample_sigma_t(mdp: TabularMdp, policy, n: int, rng) -> SampleTuples:
    """n tuples with (s, a) ~ sigma_pi by geometric stopping.

    Every rollout starts at s ~ mu and at each step stops with probability
    1 - gamma, emitting its current pair, which is an exact draw from the
    discounted visitation. a0 is uniform; s' ~ P(.|s, a) and a' ~ pi(.|s').
    """
    if n < 1:
        raise ValueError("n must be positive")
    pi = _as_table(policy).probs
    S, A = mdp.n_states, mdp.n_actions
    pi_cdf = np.cumsum(pi, axis=1)
    p_cdf = np.cumsum(mdp.transition, axis=2)
    s = _draw(np.broadcast_to(np.cumsum(mdp.mu), (n, S)), rng.random(n))
    a = _draw(pi_cdf[s], rng.random(n))
    live = rng.random(n) < mdp.gamma
    while live.any():
        idx = np.flatnonzero(live)
        s[idx] = _draw(p_cdf[s[idx], a[idx]], rng.random(len(idx)))
        a[idx] = _draw(pi_cdf[s[idx]], rng.random(len(idx)))
        live[idx] = rng.random(len(idx)) < mdp.gamma
    a0 = rng.integers(A, size=n)
    s_next = _draw(p_cdf[s, a], rng.random(n))
    a_next = _draw(pi_cdf[s_next], rng.random(n))
    return SampleTuples(s, a, a0, s_next, a_next, mdp.reward[s, a].copy())


def _net_table(net: TwoLayerNet, features: FeatureMap) -> np.ndarray:
    S, A, _ = features.table.shape
    return forward(net, features.flat()).reshape(S, A)


def td_policy_evaluation(mdp: TabularMdp, q_net: TwoLayerNet, tuples: SampleTuples, T_upd: int,
                         features: FeatureMap, jit: bool = True):
    """Projected semi-gradient TD(0) with eta_upd = T_upd^-1/2 and path averaging.

    The tuples are cycled if fewer than T_upd are given. Returns the averaged
    (then projected) critic and the mean absolute TD error along the path.
    """
    A = mdp.n_actions
    avg, _, mean_td = td_loop(q_net.alpha, q_net.alpha0, q_net.b, features.flat(),
                           tuples.s * A + tuples.a, tuples.s_next * A + tuples.a_next, tuples.reward,
                           mdp.gamma, T_upd ** -0.5, q_net.radius, T_upd, jit=jit)
    return project(q_net.with_alpha(avg)), float(mean_td)


def advantage_from_critic(q_values, probs) -> np.ndarray:
    """A(s, a) = Q(s, a) - sum_a' pi(a'|s) Q(s, a'), row-wise."""
    q = np.asarray(q_values, dtype=float)
    p = np.asarray(probs, dtype=float)
    return q - np.sum(p * q, axis=-1, keepdims=True)


def regress_to_target(f_net: TwoLayerNet, targets: np.ndarray, tuples: SampleTuples, T_upd: int,
                      features: FeatureMap, jit: bool = True):
    """Projected SGD toward ``targets[s, a0]`` on the sampled (s, a0) pairs.

    The residual uses the running iterate's prediction. Returns the averaged
    (then projected) net and the mean squared residual along the path.
    """
    A = targets.shape[1]
    target = targets[tuples.s, tuples.a0]
    if not np.all(np.isfinite(target)):
        raise ValueError("regression targets must be finite")
    avg, _, mse = regress_loop(f_net.alpha, f_net.alpha0, f_net.b, features.flat(),
                            tuples.s * A + tuples.a0, target, T_upd ** -0.5, f_net.radius, T_upd, jit=jit)
    return project(f_net.with_alpha(avg)), float(mse)


def neural_batch(states, adv: np.ndarray, probs: np.ndarray, tol: float) -> BatchSample:
    """Full action rows of the distinct sampled states, minus near-zero advantages."""
    S, A = adv.shape
    uniq = np.unique(states)
    ss = np.repeat(uniq, A)
    aa = np.tile(np.arange(A), len(uniq))
    keep = np.abs(adv[ss, aa]) > tol
    ss, aa = ss[keep], aa[keep]
    if len(ss) == 0:
        return BatchSample.empty()
    return BatchSample(ss, aa, adv[ss, aa], np.maximum(probs[ss, aa], _TINY), np.ones(len(ss)))


def run_neural(mdp: TabularMdp, config: NeuralRunConfig, features: FeatureMap | None = None,
               opt: OptimalSolution | None = None, keep_c_values: bool = False) -> RunResult:
    """One RunMetrics per policy pi_0..pi_T; record t also describes the update made from pi_t."""
    opt = opt or solve_optimal(mdp)
    S, A = mdp.n_states, mdp.n_actions
    features = features or FeatureMap.one_hot(S, A)
    seed = config.rng_seed
    f_net = init_net(config.m_f, features.dim, config.radius_f, stream(seed, "policy-init"), config.symmetric_init)
    q_net = init_net(config.m_q, features.dim, config.radius_q, stream(seed, "critic-init"), config.symmetric_init)
    q_start = q_net
    rng = stream(seed, "neural-sampling")
    check_c = config.classifier.kind in ("ratio", "subtraction")
    policy = EnergyPolicy(f_net, config.temperature(0), features)
    metrics, c_values = [], []
    prev_v = None
    min_gap = np.inf
    for t in range(config.T + 1):
        start = time.perf_counter()
        table = policy.table()
        v = evaluate_policy(mdp, table).v
        violations = 0 if prev_v is None else int(np.sum(v < prev_v - IMPROVEMENT_TOL))
        extras = {}
        if t < config.T:
            tuples = sample_sigma_t(mdp, table, config.T_upd, rng)
            q_init = q_net if config.warm_start else q_start
            q_net, td_res = td_policy_evaluation(mdp, q_init, tuples, config.T_upd, features)
            adv = advantage_from_critic(_net_table(q_net, features), table.probs)
            batch = neural_batch(tuples.s, adv, table.probs, config.adv_tol)
            extras.update(td_residual=td_res, batch_size=len(batch))
            if len(batch) == 0:
                extras["skipped"] = 1
            else:
                result = run_emda(config.classifier, batch, table, config.emda, record=False)
                c = result.c_values()
                extras.update(skipped=0, c_min=float(c.min()), c_max=float(c.max()))
                if check_c:
                    extras["c_violations"] = c_range_violations(c, config.emda)
                if keep_c_values:
                    c_values.append(c)
                tau_next = config.temperature(t + 1)
                targets = tau_next * (result.c_coeff * adv + policy.scaled_energies())
                f_init = policy.net if config.warm_start else f_net
                new_net, _ = regress_to_target(f_init, targets, tuples, config.T_upd, features)
                policy = EnergyPolicy(new_net, tau_next, features)
        gap = float(opt.nu_star @ (opt.v_star - v))
        min_gap = min(min_gap, gap)
        extras["max_v_deficit"] = float(np.max(opt.v_star - v))
        wall = int(round(1000 * (time.perf_counter() - start))) if config.record_timing else 0
        metrics.append(RunMetrics(iter=t, gap=gap, min_gap_so_far=min_gap, v_min=float(v.min()),
                                  v_mean=float(v.mean()), v_max=float(v.max()),
                                  improvement_violations=violations, wall_ms=wall, extras=extras))
        prev_v = v
    result = RunResult(metrics, policy, c_values)
    result.critic = q_net
    return result
