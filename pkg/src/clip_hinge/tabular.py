"""Tabular PPO-Clip with direct parameterization and exact advantages."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .emda import EmdaConfig, run_emda
from .hinge import BatchSample, ClassifierSpec
from .mdp import TabularMdp, TabularPolicy, evaluate_policy
from .metrics import RunMetrics
from .oracle import OptimalSolution, solve_optimal
from .seeding import stream

BATCH_SCHEMES = ("all_pairs", "trajectory_sampled")
IMPROVEMENT_TOL = 1e-10
# relative slack for the C_t in [eta, K eta] check (accumulated rounding)
C_RANGE_RTOL = 1e-12
_TINY = np.finfo(float).tiny


class EmptyBatchError(RuntimeError):
    """No nonzero-advantage pair was collected; the update is skipped."""


@dataclass(frozen=True)
class TabularRunConfig:
    classifier: ClassifierSpec = field(default_factory=lambda: ClassifierSpec("ratio", 0.3))
    emda: EmdaConfig = field(default_factory=EmdaConfig)
    n_outer_iters: int = 200
    batch_scheme: str = "all_pairs"
    trajectories_per_iter: int = 1
    horizon: int = 20
    rng_seed: int = 0
    adv_tol: float = 1e-12
    record_timing: bool = False

    def __post_init__(self):
        if self.batch_scheme not in BATCH_SCHEMES:
            raise ValueError(f"batch_scheme must be one of {BATCH_SCHEMES}")
        if self.n_outer_iters < 0:
            raise ValueError("n_outer_iters must be nonnegative")
        if self.trajectories_per_iter < 1 or self.horizon < 1:
            raise ValueError("trajectories_per_iter and horizon must be positive")


@dataclass
class RunResult:
    metrics: list
    policy: object
    c_values: list = field(default_factory=list)


def _entries_from(states, actions, adv, policy, tol):
    adv_sa = adv[states, actions]
    keep = np.abs(adv_sa) > tol
    states, actions, adv_sa = states[keep], actions[keep], adv_sa[keep]
    if len(states) == 0:
        raise EmptyBatchError("no nonzero-advantage state-action pair in the batch")
    # float copy for loss evaluation; EMDA reads the exact log-probabilities
    old = np.maximum(policy.probs[states, actions], _TINY)
    return BatchSample(states, actions, adv_sa, old, np.ones(len(states)))


def rollout_pairs(mdp: TabularMdp, policy: TabularPolicy, n_traj: int, horizon: int, rng):
    """Visited (s, a) pairs of ``n_traj`` trajectories of length ``horizon`` from mu."""
    S, A = mdp.n_states, mdp.n_actions
    visits = []
    for _ in range(n_traj):
        s = rng.choice(S, p=mdp.mu)
        for _ in range(horizon):
            a = rng.choice(A, p=policy.probs[s])
            visits.append((s, a))
            s = rng.choice(S, p=mdp.transition[s, a])
    return visits


def collect_batch(mdp: TabularMdp, policy: TabularPolicy, config: TabularRunConfig, rng,
                  adv: np.ndarray | None = None) -> BatchSample:
    """Batch with exact advantages and at most one row per state.

    ``all_pairs`` takes every action of every state. ``trajectory_sampled``
    rolls out trajectories and keeps one uniformly chosen visit per state.
    """
    if adv is None:
        adv = evaluate_policy(mdp, policy).adv
    S, A = mdp.n_states, mdp.n_actions
    if config.batch_scheme == "all_pairs":
        states = np.repeat(np.arange(S), A)
        actions = np.tile(np.arange(A), S)
        return _entries_from(states, actions, adv, policy, config.adv_tol)
    visits = rollout_pairs(mdp, policy, config.trajectories_per_iter, config.horizon, rng)
    by_state: dict[int, list[int]] = {}
    for s, a in visits:
        by_state.setdefault(int(s), []).append(int(a))
    states, actions = [], []
    for s in sorted(by_state):
        acts = by_state[s]
        states.append(s)
        actions.append(acts[rng.integers(len(acts))])
    return _entries_from(np.array(states, dtype=np.int64), np.array(actions, dtype=np.int64),
                         adv, policy, config.adv_tol)


def c_range_violations(c: np.ndarray, emda: EmdaConfig) -> int:
    lo = emda.step_size * (1 - C_RANGE_RTOL)
    hi = emda.n_iters * emda.step_size * (1 + C_RANGE_RTOL)
    return int(np.sum((c < lo) | (c > hi)))


def _record(t, v, opt, min_gap, violations, extras, wall_ms):
    gap = float(opt.nu_star @ (opt.v_star - v))
    min_gap = min(min_gap, gap)
    extras = dict(extras)
    extras["max_v_deficit"] = float(np.max(opt.v_star - v))
    return RunMetrics(iter=t, gap=gap, min_gap_so_far=min_gap, v_min=float(v.min()),
                      v_mean=float(v.mean()), v_max=float(v.max()),
                      improvement_violations=violations, wall_ms=wall_ms, extras=extras), min_gap


def run_tabular(mdp: TabularMdp, config: TabularRunConfig, init_policy: TabularPolicy | None = None,
                opt: OptimalSolution | None = None, keep_c_values: bool = False) -> RunResult:
    """Evaluate, collect, run EMDA, install the target on the batch states; repeat.

    One RunMetrics per policy pi^(0..T). Record t carries the update made from
    pi^(t) (batch size, C_t range) and the number of states whose value fell
    below that of pi^(t-1) by more than 1e-10.
    """
    opt = opt or solve_optimal(mdp)
    policy = init_policy or TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
    rng = stream(config.rng_seed, "tabular-sampling")
    check_c = config.classifier.kind in ("ratio", "subtraction")
    metrics, c_values = [], []
    values = evaluate_policy(mdp, policy)
    prev_v = None
    min_gap = np.inf
    for t in range(config.n_outer_iters + 1):
        start = time.perf_counter()
        v = values.v
        violations = 0 if prev_v is None else int(np.sum(v < prev_v - IMPROVEMENT_TOL))
        extras = {}
        if t < config.n_outer_iters:
            try:
                batch = collect_batch(mdp, policy, config, rng, adv=values.adv)
            except EmptyBatchError:
                extras.update(batch_size=0, skipped=1)
            else:
                result = run_emda(config.classifier, batch, policy, config.emda, record=False)
                c = result.c_values()
                extras.update(batch_size=len(batch), skipped=0, c_min=float(c.min()), c_max=float(c.max()))
                if check_c:
                    extras["c_violations"] = c_range_violations(c, config.emda)
                if keep_c_values:
                    c_values.append(c)
                policy = result.target_policy
        wall = int(round(1000 * (time.perf_counter() - start))) if config.record_timing else 0
        rec, min_gap = _record(t, v, opt, min_gap, violations, extras, wall)
        metrics.append(rec)
        prev_v = v
        if t < config.n_outer_iters:
            values = evaluate_policy(mdp, policy)
    return RunResult(metrics, policy, c_values)
