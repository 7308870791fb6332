import numpy as np
import pytest

from clip_hinge.emda import EmdaConfig
from clip_hinge.envs import random_mdp
from clip_hinge.hinge import KINDS, ClassifierSpec
from clip_hinge.mdp import TabularPolicy, evaluate_policy
from clip_hinge.oracle import optimality_gap, solve_optimal
from clip_hinge.seeding import stream
from clip_hinge.tabular import EmptyBatchError, TabularRunConfig, collect_batch, run_tabular

from conftest import bandit


def test_all_pairs_covers_every_state():
    mdp = random_mdp(2, 3, seed=5)
    batch = collect_batch(mdp, TabularPolicy.uniform(2, 3), TabularRunConfig(), stream(0, "t"))
    assert sorted(set(batch.states.tolist())) == [0, 1]
    assert len(batch) == 6
    assert np.all(batch.sample_weight == 1.0)


def test_trajectory_mode_small_and_reproducible():
    mdp = random_mdp(4, 3, seed=2)
    pol = TabularPolicy.uniform(4, 3)
    one = TabularRunConfig(batch_scheme="trajectory_sampled", trajectories_per_iter=1, horizon=1)
    assert len(collect_batch(mdp, pol, one, stream(0, "t"))) <= 1
    cfg = TabularRunConfig(batch_scheme="trajectory_sampled", trajectories_per_iter=3, horizon=10)
    a = collect_batch(mdp, pol, cfg, stream(4, "t"))
    b = collect_batch(mdp, pol, cfg, stream(4, "t"))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)
    assert np.array_equal(a.adv, b.adv) and len(set(a.states.tolist())) == len(a)


def test_empty_batch_signal_and_skip(chain2):
    pol = TabularPolicy.uniform(2, 2)
    with pytest.raises(EmptyBatchError):
        collect_batch(chain2, pol, TabularRunConfig(), stream(0, "t"))
    res = run_tabular(chain2, TabularRunConfig(n_outer_iters=3))
    assert all(m.extras["skipped"] == 1 for m in res.metrics[:-1])
    np.testing.assert_array_equal(res.policy.probs, pol.probs)


def test_bandit_converges():
    mdp = bandit([0.0, 1.0], 0.9)
    res = run_tabular(mdp, TabularRunConfig(n_outer_iters=200))
    assert res.policy.probs[0, 1] >= 0.99


def test_run_records_and_invariants():
    mdp = random_mdp(5, 3, seed=1)
    T = 60
    for kind in KINDS:
        for scheme in ("all_pairs", "trajectory_sampled"):
            res = run_tabular(mdp, TabularRunConfig(ClassifierSpec(kind, 0.3), EmdaConfig(0.1, 5), T, scheme))
            assert [m.iter for m in res.metrics] == list(range(T + 1))
            assert sum(m.improvement_violations for m in res.metrics) == 0
            mins = [m.min_gap_so_far for m in res.metrics]
            assert all(b <= a for a, b in zip(mins, mins[1:]))
            assert min(m.gap for m in res.metrics) >= -1e-9
            assert res.policy.is_strictly_positive()
            if kind in ("ratio", "subtraction"):
                assert all(m.extras.get("c_violations", 0) == 0 for m in res.metrics)


def test_near_deterministic_optimum_does_not_regress():
    mdp = random_mdp(4, 3, seed=6)
    opt = solve_optimal(mdp)
    delta = 1e-6
    probs = np.full((4, 3), delta)
    probs[np.arange(4), opt.greedy_actions] = 1 - 2 * delta
    init = TabularPolicy(probs)
    res = run_tabular(mdp, TabularRunConfig(n_outer_iters=50), init_policy=init, opt=opt)
    g0 = optimality_gap(mdp, init, opt)
    assert all(m.gap <= g0 + 1e-12 for m in res.metrics)


def test_trajectory_mode_leaves_unvisited_rows_alone():
    mdp = random_mdp(6, 3, seed=3)
    pol = TabularPolicy.uniform(6, 3)
    cfg = TabularRunConfig(batch_scheme="trajectory_sampled", horizon=2, n_outer_iters=1, rng_seed=8)
    batch = collect_batch(mdp, pol, cfg, stream(8, "tabular-sampling"))
    res = run_tabular(mdp, cfg)
    untouched = sorted(set(range(6)) - set(batch.states.tolist()))
    assert untouched
    np.testing.assert_array_equal(res.policy.probs[untouched], pol.probs[untouched])


def test_c_values_kept_on_request():
    mdp = random_mdp(3, 2, seed=0)
    res = run_tabular(mdp, TabularRunConfig(n_outer_iters=4), keep_c_values=True)
    assert len(res.c_values) == 4
    assert all(np.all((c >= 0.1 - 1e-12) & (c <= 0.5 + 1e-12)) for c in res.c_values)


def test_config_validation():
    with pytest.raises(ValueError):
        TabularRunConfig(batch_scheme="random")
    with pytest.raises(ValueError):
        TabularRunConfig(horizon=0)


def test_batch_advantages_are_exact():
    mdp = random_mdp(3, 3, seed=4)
    pol = TabularPolicy.uniform(3, 3)
    batch = collect_batch(mdp, pol, TabularRunConfig(), stream(0, "t"))
    adv = evaluate_policy(mdp, pol).adv
    np.testing.assert_array_equal(batch.adv, adv[batch.states, batch.actions])
