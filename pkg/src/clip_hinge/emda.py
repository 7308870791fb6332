"""Exponentiated-gradient (entropic mirror descent) policy search over the simplex."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hinge import BatchSample, ClassifierSpec, subgradients_log
from .mdp import TabularPolicy


class InvalidBatchError(ValueError):
    pass


@dataclass(frozen=True)
class EmdaConfig:
    step_size: float = 0.1
    n_iters: int = 5

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if int(self.n_iters) != self.n_iters or self.n_iters < 1:
            raise ValueError("n_iters must be a positive integer")


@dataclass(frozen=True, eq=False)
class SweepRecord:
    """Per-sweep diagnostics on the batch rows (shape: batch states x actions)."""

    sweep: int
    g: np.ndarray
    factor: np.ndarray
    active: np.ndarray


@dataclass(frozen=True, eq=False)
class EmdaResult:
    target_policy: TabularPolicy
    states: np.ndarray
    c_coeff: np.ndarray
    sum_eta_g: np.ndarray
    in_batch: np.ndarray
    grad_log: list = field(default_factory=list)

    def c_values(self) -> np.ndarray:
        """C_t on the nonzero-advantage batch pairs."""
        return self.c_coeff[self.in_batch]


def log_normalizer(x: np.ndarray) -> float:
    """log sum_i exp(x_i), with a compensated sum after the max shift."""
    c = float(np.max(x))
    return c + math.log(math.fsum(np.exp(x - c)))


def exponentiated_step(theta, g, eta: float) -> np.ndarray:
    """(w o theta) / <w, theta> with w = exp(-eta g), for one simplex row."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        x = np.log(theta) - eta * np.asarray(g, dtype=float)
    return np.exp(x - log_normalizer(x))


def _batch_rows(batch: BatchSample, n_actions: int):
    keep = batch.adv != 0
    batch = batch.select(keep)
    pairs = batch.states * n_actions + batch.actions
    if len(np.unique(pairs)) != len(pairs):
        raise InvalidBatchError("batch contains a repeated state-action pair")
    if np.any(batch.actions < 0) or np.any(batch.actions >= n_actions):
        raise InvalidBatchError("batch action out of range")
    states, row = np.unique(batch.states, return_inverse=True)
    shape = (len(states), n_actions)
    adv = np.zeros(shape)
    sw = np.zeros(shape)
    mask = np.zeros(shape, dtype=bool)
    adv[row, batch.actions] = batch.adv
    sw[row, batch.actions] = batch.sample_weight
    mask[row, batch.actions] = True
    return states, adv, sw, mask


def run_emda(spec: ClassifierSpec, batch: BatchSample, init_policy: TabularPolicy,
             config: EmdaConfig, record: bool = True) -> EmdaResult:
    """K sweeps of the multiplicative update on every batch state.

    Gradients are taken at the current iterate while the classifier's
    reference probability stays at ``init_policy``. Actions absent from a
    state's batch row get zero gradient and move only by renormalization.
    Only the batch rows of the returned policy differ from ``init_policy``.
    """
    S, A = init_policy.probs.shape
    if len(batch) and (batch.states.min() < 0 or batch.states.max() >= S):
        raise InvalidBatchError("batch state out of range")
    states, adv, sw, mask = _batch_rows(batch, A)
    eta = config.step_size
    log_old = init_policy.log_probs[states].copy()
    if not np.all(np.isfinite(log_old)):
        raise ValueError("init_policy must be strictly positive on batch states")
    lt = log_old.copy()
    c_rows = np.zeros_like(adv)
    eg_rows = np.zeros_like(adv)
    grad_log = []
    for k in range(config.n_iters):
        g, active = subgradients_log(spec, adv, sw, lt, log_old)
        x = lt - eta * g
        for i in range(len(states)):
            x[i] -= log_normalizer(x[i])
        lt = x
        eg_rows += eta * g
        c_rows[mask] -= eta * g[mask] / adv[mask]
        if record:
            grad_log.append(SweepRecord(k, g, np.exp(-eta * g), active))
    assert np.all(np.isfinite(lt)), "EMDA iterate lost strict positivity"

    log_probs = init_policy.log_probs.copy()
    log_probs[states] = lt
    probs = init_policy.probs.copy()
    probs[states] = np.exp(lt)
    target = TabularPolicy(probs, log_probs=log_probs)
    c_coeff = np.zeros((S, A))
    c_coeff[states] = c_rows
    sum_eta_g = np.zeros((S, A))
    sum_eta_g[states] = eg_rows
    in_batch = np.zeros((S, A), dtype=bool)
    in_batch[states] = mask
    return EmdaResult(target, states, c_coeff, sum_eta_g, in_batch, grad_log)


def verify_target_logform(result: EmdaResult, init_policy: TabularPolicy, adv,
                          temperature: float | None = None, energy=None) -> float:
    """Largest per-state spread of log pi_hat - (C * A) - base over actions.

    ``base`` is ``energy / temperature`` when both are given, otherwise the
    log of ``init_policy``. A closed-form target makes every spread zero.
    """
    adv = np.asarray(adv, dtype=float)
    if energy is not None and temperature is not None:
        base = np.asarray(energy, dtype=float) / temperature
    else:
        base = init_policy.log_probs
    s = result.states
    if len(s) == 0:
        return 0.0
    resid = result.target_policy.log_probs[s] - result.c_coeff[s] * adv[s] - base[s]
    return float(np.max(resid.max(axis=1) - resid.min(axis=1)))
