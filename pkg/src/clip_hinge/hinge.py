"""Hinge-loss form of the PPO-Clip objective and its classifier family.

A batch entry ``(s, a, A, pi_old(a|s), w)`` is a labelled example: the label
is ``sgn(A)``, the classifier compares the candidate probability with the old
one, and the clipping range plays the role of the margin.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

KINDS = ("ratio", "subtraction", "log", "root")
_ALIASES = {"sub": "subtraction"}

# unit: w; abs_advantage: w |A|; policy_abs_advantage: w pi_old(a|s) |A|
WEIGHT_MODES = ("unit", "abs_advantage", "policy_abs_advantage")

# Weighting under which the unclipped gradient at the old policy is -A.
DEFAULT_WEIGHT_MODE = {
    "ratio": "policy_abs_advantage",
    "subtraction": "abs_advantage",
    "log": "policy_abs_advantage",
    "root": "policy_abs_advantage",
}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "ratio"
    epsilon: float = 0.2
    weight_mode: str | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        mode = self.weight_mode or DEFAULT_WEIGHT_MODE[kind]
        if mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {mode!r}; expected one of {WEIGHT_MODES}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "weight_mode", mode)


class BatchEntry(NamedTuple):
    state: int
    action: int
    advantage: float
    old_prob: float
    sample_weight: float = 1.0


@dataclass(frozen=True, eq=False)
class BatchSample:
    """Column-wise batch of labelled state-action pairs."""

    states: np.ndarray
    actions: np.ndarray
    adv: np.ndarray
    old_prob: np.ndarray
    sample_weight: np.ndarray

    def __post_init__(self):
        cols = {
            "states": np.asarray(self.states, dtype=np.int64).reshape(-1),
            "actions": np.asarray(self.actions, dtype=np.int64).reshape(-1),
            "adv": np.asarray(self.adv, dtype=float).reshape(-1),
            "old_prob": np.asarray(self.old_prob, dtype=float).reshape(-1),
            "sample_weight": np.asarray(self.sample_weight, dtype=float).reshape(-1),
        }
        n = len(cols["states"])
        if any(len(c) != n for c in cols.values()):
            raise ValueError("batch columns must have equal length")
        if np.any(cols["old_prob"] <= 0) or np.any(cols["old_prob"] > 1):
            raise ValueError("old_prob must lie in (0, 1]")
        if np.any(cols["sample_weight"] < 0):
            raise ValueError("sample weights must be nonnegative")
        for k, v in cols.items():
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    @classmethod
    def from_entries(cls, entries) -> "BatchSample":
        entries = [BatchEntry(*e) for e in entries]
        if not entries:
            return cls.empty()
        cols = list(zip(*entries))
        return cls(*cols)

    @classmethod
    def empty(cls) -> "BatchSample":
        z = np.zeros(0)
        return cls(z, z, z, z + 1.0, z)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[BatchEntry]:
        for row in zip(self.states, self.actions, self.adv, self.old_prob, self.sample_weight):
            yield BatchEntry(int(row[0]), int(row[1]), *map(float, row[2:]))

    def select(self, mask) -> "BatchSample":
        return BatchSample(self.states[mask], self.actions[mask], self.adv[mask],
                           self.old_prob[mask], self.sample_weight[mask])


def hinge_loss(label, classifier_value, margin):
    """max{0, margin - label * classifier_value}."""
    return np.maximum(0.0, margin - label * classifier_value)


def _check_domain(kind: str, new_prob) -> None:
    if kind != "subtraction" and np.any(np.asarray(new_prob) <= 0):
        raise ValueError(f"{kind} classifier needs a strictly positive candidate probability")


def classifier_value(spec: ClassifierSpec, new_prob, old_prob):
    _check_domain(spec.kind, new_prob)
    new_prob = np.asarray(new_prob, dtype=float)
    old_prob = np.asarray(old_prob, dtype=float)
    if spec.kind == "ratio":
        out = new_prob / old_prob - 1.0
    elif spec.kind == "subtraction":
        out = new_prob - old_prob
    elif spec.kind == "log":
        out = np.log(new_prob) - np.log(old_prob)
    else:
        out = np.sqrt(new_prob / old_prob) - 1.0
    return out[()] if out.ndim == 0 else out


def classifier_value_log(kind: str, log_new, log_old):
    """Classifier evaluated from log-probabilities (safe for tiny probabilities)."""
    diff = log_new - log_old
    if kind == "ratio":
        return np.expm1(diff)
    if kind == "subtraction":
        return np.exp(log_new) - np.exp(log_old)
    if kind == "log":
        return diff
    return np.expm1(0.5 * diff)


def entry_weights(spec: ClassifierSpec, batch: BatchSample) -> np.ndarray:
    if spec.weight_mode == "unit":
        return batch.sample_weight.copy()
    w = batch.sample_weight * np.abs(batch.adv)
    if spec.weight_mode == "policy_abs_advantage":
        w = w * batch.old_prob
    return w


def hinge_terms(spec: ClassifierSpec, batch: BatchSample, new_prob) -> np.ndarray:
    """Per-entry weighted hinge losses for candidate probabilities ``new_prob``."""
    new_prob = np.asarray(new_prob, dtype=float)
    nz = batch.adv != 0
    out = np.zeros(len(batch))
    if np.any(nz):
        value = classifier_value(spec, new_prob[nz], batch.old_prob[nz])
        out[nz] = entry_weights(spec, batch)[nz] * hinge_loss(np.sign(batch.adv[nz]), value, spec.epsilon)
    return out


def generalized_loss(spec: ClassifierSpec, batch: BatchSample, candidate) -> float:
    """Weighted sum of hinge losses over the batch; zero-advantage entries are skipped."""
    if len(batch) == 0:
        return 0.0
    new_prob = candidate.probs[batch.states, batch.actions]
    return float(np.sum(hinge_terms(spec, batch, new_prob)))


def clipped_surrogate(spec: ClassifierSpec, batch: BatchSample, candidate) -> float:
    """sum_i m_i min{rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i}.

    ``m_i`` is the sample weight, times pi_old(a|s) in ``policy_abs_advantage``
    mode, so that it pairs with :func:`generalized_loss` up to a constant.
    """
    if spec.kind != "ratio":
        raise ValueError("the clipped surrogate is defined for the ratio classifier only")
    if len(batch) == 0:
        return 0.0
    rho = candidate.probs[batch.states, batch.actions] / batch.old_prob
    m = batch.sample_weight
    if spec.weight_mode == "policy_abs_advantage":
        m = m * batch.old_prob
    eps = spec.epsilon
    clipped = np.minimum(rho * batch.adv, np.clip(rho, 1.0 - eps, 1.0 + eps) * batch.adv)
    return float(np.sum(m * clipped))


def _slope_times_weight(kind, mode, adv, sample_weight, log_theta, log_old):
    """Derivative magnitude sgn(A) * weight * d(classifier)/d(theta), log-domain inputs."""
    sgn = np.sign(adv)
    if mode == "policy_abs_advantage":
        # pi_old cancels against the 1/pi_old of the classifier slope
        scale = sample_weight * np.abs(adv)
        if kind == "ratio":
            return scale * sgn
        if kind == "subtraction":
            return scale * sgn * np.exp(log_old)
        if kind == "log":
            return scale * sgn * np.exp(log_old - log_theta)
        return scale * sgn * 0.5 * np.exp(0.5 * (log_old - log_theta))
    w = sample_weight * (np.abs(adv) if mode == "abs_advantage" else 1.0)
    if kind == "ratio":
        slope = np.exp(-log_old)
    elif kind == "subtraction":
        slope = np.ones_like(log_old)
    elif kind == "log":
        slope = np.exp(-log_theta)
    else:
        slope = 0.5 * np.exp(-0.5 * (log_theta + log_old))
    return w * sgn * slope


def subgradients_log(spec: ClassifierSpec, adv, sample_weight, log_theta, log_old):
    """Vectorized subgradient of the weighted hinge term w.r.t. theta(a|s).

    Returns ``(g, active)``. At the kink (value * sgn == eps) the clipped
    branch is taken, and zero-advantage entries give 0.
    """
    adv = np.asarray(adv, dtype=float)
    value = classifier_value_log(spec.kind, log_theta, log_old)
    active = (value * np.sign(adv) < spec.epsilon) & (adv != 0)
    g = -_slope_times_weight(spec.kind, spec.weight_mode, adv, sample_weight, log_theta, log_old)
    g = np.where(active, g, 0.0)
    return g, active


def subgradient(spec: ClassifierSpec, entry, theta_tilde: float) -> float:
    """Partial derivative of one entry's weighted hinge term at candidate prob ``theta_tilde``."""
    entry = BatchEntry(*entry)
    if theta_tilde <= 0:
        raise ValueError("theta_tilde must be positive")
    g, _ = subgradients_log(
        spec,
        np.array([entry.advantage]),
        np.array([entry.sample_weight]),
        np.log(np.array([theta_tilde], dtype=float)),
        np.log(np.array([entry.old_prob], dtype=float)),
    )
    return float(g[0])
