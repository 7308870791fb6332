"""Property suites behind ``clip-hinge verify``.

Each suite draws its own randomized instances from a fixed seed, measures
the worst-case deviation from the property, and reports PASS/FAIL against
a fixed tolerance. Sizes are parameters so that larger sweeps can reuse
the same code.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .emda import EmdaConfig, run_emda, verify_target_logform
from .envs import random_mdp
from .hinge import KINDS, BatchSample, ClassifierSpec, clipped_surrogate, generalized_loss
from .mdp import TabularPolicy, evaluate_policy, stationary_distribution, performance_difference_residual
from .oracle import solve_optimal
from .seeding import stream
from .tabular import BATCH_SCHEMES, TabularRunConfig, run_tabular

OFFSET_TOL = 1e-9
GRAD_RTOL = 1e-4
LOGFORM_TOL = 1e-10
PDL_TOL = 1e-8


@dataclass
class SuiteResult:
    name: str
    passed: bool
    stats: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        detail = " ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.stats.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} ({self.seconds:.1f}s) {detail}"


def random_policy(rng, n_states: int, n_actions: int, floor: float = 0.0) -> TabularPolicy:
    p = rng.dirichlet(np.ones(n_actions), size=n_states) + floor
    return TabularPolicy(p / p.sum(axis=1, keepdims=True))


def _all_pairs_batch(adv, policy) -> BatchSample:
    S, A = adv.shape
    s = np.repeat(np.arange(S), A)
    a = np.tile(np.arange(A), S)
    return BatchSample(s, a, adv[s, a], policy.probs[s, a], np.ones(S * A))


def clip_hinge_equivalence(n_batches: int = 10, n_candidates: int = 100, seed: int = 0,
                           epsilon: float = 0.2, fd_step: float = 1e-6):
    """Offset spread of clipped + hinge over candidates, and the worst FD gradient mismatch.

    Gradients are taken entrywise in the candidate probabilities at points
    whose ratios sit at least 10 * fd_step / pi_old away from the kinks.
    """
    rng = stream(seed, "verify-clip-hinge")
    spec = ClassifierSpec("ratio", epsilon)
    spread, grad_err, n_grad = 0.0, 0.0, 0
    for i in range(n_batches):
        mdp = random_mdp(4, 3, 0.9, seed=1000 * seed + i)
        old = random_policy(rng, 4, 3, floor=0.05)
        batch = _all_pairs_batch(evaluate_policy(mdp, old).adv, old)
        sums = []
        for _ in range(n_candidates):
            cand = random_policy(rng, 4, 3, floor=0.05)
            sums.append(clipped_surrogate(spec, batch, cand) + generalized_loss(spec, batch, cand))
            for j, (s, a) in enumerate(zip(batch.states, batch.actions)):
                p = cand.probs[s, a]
                rho = p / batch.old_prob[j]
                margin = 10 * fd_step / batch.old_prob[j]
                if min(abs(rho - 1 - epsilon), abs(rho - 1 + epsilon)) < margin:
                    continue
                g_clip = _fd_entry(lambda q: clipped_surrogate(spec, batch, q), cand, s, a, fd_step)
                g_hinge = _fd_entry(lambda q: generalized_loss(spec, batch, q), cand, s, a, fd_step)
                scale = max(abs(g_clip), abs(g_hinge))
                if scale > 0:
                    grad_err = max(grad_err, abs(g_clip + g_hinge) / scale)
                n_grad += 1
        spread = max(spread, max(sums) - min(sums))
    return {"offset_spread": float(spread), "grad_rel_err": float(grad_err), "n_grad": n_grad}


def _fd_entry(fn, cand, s, a, h):
    """Central difference in one probability entry (other entries held fixed)."""
    up = cand.probs.copy()
    dn = cand.probs.copy()
    up[s, a] += h
    dn[s, a] -= h
    return (fn(_Raw(up)) - fn(_Raw(dn))) / (2 * h)


class _Raw:
    """Unnormalized probability table, for entrywise derivatives."""

    def __init__(self, probs):
        self.probs = probs


def logform_deviation(n_runs: int = 1000, seed: int = 0, max_actions: int = 8, max_k: int = 10):
    """Worst per-state spread of log pi_hat - log pi_0 - C A over random EMDA runs."""
    rng = stream(seed, "verify-logform")
    worst = 0.0
    for i in range(n_runs):
        kind = KINDS[i % len(KINDS)]
        S = int(rng.integers(1, 5))
        A = int(rng.integers(2, max_actions + 1))
        spec = ClassifierSpec(kind, float(rng.uniform(0.05, 0.8)))
        emda = EmdaConfig(float(rng.uniform(0.01, 1.0)), int(rng.integers(1, max_k + 1)))
        pol = random_policy(rng, S, A, floor=1e-3)
        adv = rng.normal(size=(S, A))
        adv -= np.sum(pol.probs * adv, axis=1, keepdims=True)
        res = run_emda(spec, _all_pairs_batch(adv, pol), pol, emda, record=False)
        worst = max(worst, verify_target_logform(res, pol, adv))
    return {"max_deviation": float(worst)}


def improvement_runs(seeds=range(3), n_iters: int = 100, schemes=BATCH_SCHEMES, kinds=KINDS,
                     n_states: int = 5, n_actions: int = 3, emda: EmdaConfig | None = None,
                     epsilon: float = 0.3):
    """Tabular runs on random MDPs; counts value regressions and C_t range violations."""
    emda = emda or EmdaConfig(0.1, 5)
    regressions = c_viol = n_c = 0
    min_pos = np.inf
    for seed in seeds:
        mdp = random_mdp(n_states, n_actions, 0.9, seed=seed)
        opt = solve_optimal(mdp)
        for scheme in schemes:
            for kind in kinds:
                cfg = TabularRunConfig(ClassifierSpec(kind, epsilon), emda, n_iters, scheme, rng_seed=seed)
                res = run_tabular(mdp, cfg, opt=opt)
                regressions += sum(m.improvement_violations for m in res.metrics)
                if kind in ("ratio", "subtraction"):
                    c_viol += sum(int(m.extras.get("c_violations", 0)) for m in res.metrics)
                    n_c += sum(int(m.extras.get("batch_size", 0)) for m in res.metrics)
                min_pos = min(min_pos, float(np.min(res.policy.log_probs)))
    return {"regressions": regressions, "c_violations": c_viol, "c_checked": n_c, "min_log_prob": min_pos}


def epsilon_invariance(n_states: int = 1000, seed: int = 0, epsilons=(0.1, 0.3, 0.7), emda=None):
    """Compare per-sweep EMDA factors on coordinates active under every epsilon.

    Ratio and subtraction factors must agree bit-for-bit on every sweep; for
    log and root only the first sweep shares its iterate across epsilon.
    Returns the mismatch count and how many states changed activity pattern.
    """
    rng = stream(seed, "verify-epsilon")
    emda = emda or EmdaConfig(0.5, 5)
    mismatches = pattern_changes = compared = 0
    for i in range(n_states):
        A = int(rng.integers(2, 7))
        pol = random_policy(rng, 1, A, floor=1e-3)
        adv = rng.normal(size=(1, A))
        adv -= np.sum(pol.probs * adv, axis=1, keepdims=True)
        batch = _all_pairs_batch(adv, pol)
        for kind in KINDS:
            logs = [run_emda(ClassifierSpec(kind, e), batch, pol, emda).grad_log for e in epsilons]
            sweeps = range(emda.n_iters) if kind in ("ratio", "subtraction") else range(1)
            for k in sweeps:
                recs = [lg[k] for lg in logs]
                both = np.logical_and.reduce([r.active for r in recs])
                for r in recs[1:]:
                    mismatches += int(np.sum(r.factor[both] != recs[0].factor[both]))
                compared += int(both.sum())
            if any(not np.array_equal(lg[-1].active, logs[0][-1].active) for lg in logs[1:]):
                pattern_changes += 1
    return {"mismatches": mismatches, "compared": compared, "pattern_changes": pattern_changes}


def pdl_stationary_residual(mdp, pi_new: TabularPolicy, pi_old: TabularPolicy) -> float:
    """Residual of L(pi') - L(pi) = (1-gamma)^-1 E_nu[<A^pi, pi' - pi>] with nu stationary for pi'."""
    nu = stationary_distribution(mdp, pi_new)
    lhs = nu @ (evaluate_policy(mdp, pi_new).v - evaluate_policy(mdp, pi_old).v)
    adv = evaluate_policy(mdp, pi_old).adv
    rhs = nu @ np.sum(adv * (pi_new.probs - pi_old.probs), axis=1) / (1 - mdp.gamma)
    return float(abs(lhs - rhs))


def performance_difference(n_triples: int = 1000, seed: int = 0):
    """Worst residual of the advantage form of the performance difference, two ways.

    ``stationary``: state weights stationary under the new policy, as in the
    lemma's setting. ``general``: arbitrary outer distribution with the new
    policy's discounted visitation from it.
    """
    rng = stream(seed, "verify-pdl")
    worst_stat = worst_gen = 0.0
    for i in range(n_triples):
        S = int(rng.integers(2, 7))
        A = int(rng.integers(2, 5))
        mdp = random_mdp(S, A, float(rng.uniform(0.5, 0.99)), seed=10_000 + 1000 * seed + i)
        pi, pi2 = random_policy(rng, S, A), random_policy(rng, S, A)
        worst_stat = max(worst_stat, pdl_stationary_residual(mdp, pi2, pi))
        outer = rng.dirichlet(np.ones(S))
        worst_gen = max(worst_gen, performance_difference_residual(mdp, pi2, pi, outer))
    return {"stationary": float(worst_stat), "general": float(worst_gen)}


def _timed(name, fn, check):
    t0 = time.perf_counter()
    stats = fn()
    return SuiteResult(name, bool(check(stats)), stats, time.perf_counter() - t0)


def run_all(seed: int = 0, quick: bool = True) -> list[SuiteResult]:
    """All suites at default (quick) or full sizes."""
    n = 200 if quick else 1000
    imp_seeds = range(seed, seed + (3 if quick else 20))
    imp_iters = 100 if quick else 500
    imp_cache = {}

    def improvement():
        if not imp_cache:
            imp_cache.update(improvement_runs(imp_seeds, imp_iters))
        return imp_cache

    clip = {}

    def clip_hinge():
        if not clip:
            clip.update(clip_hinge_equivalence(10, 100 if not quick else 30, seed))
        return clip

    return [
        _timed("gradient-equivalence", clip_hinge, lambda s: s["grad_rel_err"] <= GRAD_RTOL),
        _timed("constant-offset", clip_hinge, lambda s: s["offset_spread"] <= OFFSET_TOL),
        _timed("logform", lambda: logform_deviation(n, seed), lambda s: s["max_deviation"] <= LOGFORM_TOL),
        _timed("improvement", improvement, lambda s: s["regressions"] == 0 and np.isfinite(s["min_log_prob"])),
        _timed("c-range", improvement, lambda s: s["c_violations"] == 0),
        _timed("epsilon-invariance", lambda: epsilon_invariance(n, seed), lambda s: s["mismatches"] == 0),
        _timed("performance-difference", lambda: performance_difference(n, seed),
               lambda s: s["stationary"] <= PDL_TOL and s["general"] <= PDL_TOL),
    ]
