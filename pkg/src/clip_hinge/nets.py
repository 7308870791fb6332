"""Two-layer ReLU networks with frozen output signs and an l2-ball around init.

    u(x) = m^{-1/2} sum_i b_i relu(alpha_i . x)

Only the input weights ``alpha`` train; after every step they are projected
back onto ``{alpha : ||alpha - alpha0||_2 <= radius}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np


@dataclass(frozen=True, eq=False)
class TwoLayerNet:
    alpha: np.ndarray    # (m, d)
    alpha0: np.ndarray   # (m, d), initialization snapshot
    b: np.ndarray        # (m,), entries in {-1, +1}
    radius: float

    def __post_init__(self):
        for name in ("alpha", "alpha0", "b"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.alpha.shape != self.alpha0.shape or self.alpha.ndim != 2:
            raise ValueError("alpha and alpha0 must share shape (m, d)")
        if self.b.shape != (self.alpha.shape[0],) or not np.all(np.abs(self.b) == 1):
            raise ValueError("b must be a vector of +-1 signs of length m")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def width(self) -> int:
        return self.alpha.shape[0]

    @property
    def input_dim(self) -> int:
        return self.alpha.shape[1]

    def with_alpha(self, alpha) -> "TwoLayerNet":
        return TwoLayerNet(alpha, self.alpha0, self.b, self.radius)

    def displacement(self) -> float:
        return float(np.linalg.norm(self.alpha - self.alpha0))


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Unit-norm embedding ``table[s, a]`` of every state-action pair."""

    table: np.ndarray    # (S, A, d)

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 3:
            raise ValueError("feature table must have shape (S, A, d)")
        if np.max(np.abs(np.linalg.norm(t, axis=2) - 1.0)) > 1e-12:
            raise ValueError("features must have unit l2 norm")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def one_hot(cls, n_states: int, n_actions: int) -> "FeatureMap":
        """one_hot(s) concatenated with one_hot(a), scaled by 1/sqrt(2)."""
        t = np.zeros((n_states, n_actions, n_states + n_actions))
        for s in range(n_states):
            for a in range(n_actions):
                t[s, a, s] = t[s, a, n_states + a] = 1.0 / np.sqrt(2.0)
        return cls(t)

    @property
    def dim(self) -> int:
        return self.table.shape[2]

    def flat(self) -> np.ndarray:
        """(S*A, d) table indexed by ``s * A + a``."""
        return self.table.reshape(-1, self.dim)

    def __call__(self, s, a) -> np.ndarray:
        return self.table[s, a]


def init_net(width: int, input_dim: int, radius: float, rng, symmetric: bool = False) -> TwoLayerNet:
    """b_i ~ Unif{-1, +1}, [alpha0]_i ~ N(0, I/d), i.i.d. over i.

    With ``symmetric=True`` the second half of the neurons copies the first
    half's weights with flipped signs, so the initial output is exactly 0.
    """
    if width < 1 or input_dim < 1:
        raise ValueError("width and input_dim must be positive")
    if symmetric:
        if width % 2:
            raise ValueError("symmetric initialization needs an even width")
        half = width // 2
        b_half = rng.choice([-1.0, 1.0], size=half)
        a_half = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(half, input_dim))
        b = np.concatenate([b_half, -b_half])
        alpha0 = np.vstack([a_half, a_half])
    else:
        b = rng.choice([-1.0, 1.0], size=width)
        alpha0 = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(width, input_dim))
    return TwoLayerNet(alpha0.copy(), alpha0, b, float(radius))


def forward(net: TwoLayerNet, x):
    """Network output at one input (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"input dimension {x.shape[-1]} != {net.input_dim}")
    pre = x @ net.alpha.T
    out = np.maximum(pre, 0.0) @ net.b / np.sqrt(net.width)
    return float(out) if x.ndim == 1 else out


def grad_alpha(net: TwoLayerNet, x) -> np.ndarray:
    """d u / d alpha_i = b_i m^{-1/2} 1{alpha_i . x > 0} x, as an (m, d) array."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError("grad_alpha takes a single input vector")
    active = (net.alpha @ x > 0).astype(float)
    return (net.b * active / np.sqrt(net.width))[:, None] * x[None, :]


def project(net: TwoLayerNet) -> TwoLayerNet:
    """Radial projection of alpha onto the ball around alpha0."""
    disp = net.alpha - net.alpha0
    norm = np.linalg.norm(disp)
    if norm <= net.radius:
        return net
    return net.with_alpha(net.alpha0 + disp * (net.radius / norm))


def save_net(net: TwoLayerNet, path) -> None:
    np.savez(Path(path), alpha=net.alpha, alpha0=net.alpha0, b=net.b, radius=np.float64(net.radius))


def load_net(path) -> TwoLayerNet:
    with np.load(Path(path)) as z:
        return TwoLayerNet(z["alpha"], z["alpha0"], z["b"], float(z["radius"]))


# --- projected stochastic inner loops ------------------------------------
# Written over plain arrays so the same source runs compiled or interpreted.

def _value(alpha, b, x, scale):
    out = 0.0
    for i in range(alpha.shape[0]):
        pre = 0.0
        for j in range(alpha.shape[1]):
            pre += alpha[i, j] * x[j]
        if pre > 0.0:
            out += b[i] * pre
    return out * scale


def _step(alpha, alpha0, b, x, coef, scale, radius):
    """alpha -= coef * grad u(x), then project onto the ball."""
    m, d = alpha.shape
    for i in range(m):
        pre = 0.0
        for j in range(d):
            pre += alpha[i, j] * x[j]
        if pre > 0.0:
            c = coef * b[i] * scale
            for j in range(d):
                alpha[i, j] -= c * x[j]
    sq = 0.0
    for i in range(m):
        for j in range(d):
            diff = alpha[i, j] - alpha0[i, j]
            sq += diff * diff
    norm = np.sqrt(sq)
    if norm > radius:
        f = radius / norm
        for i in range(m):
            for j in range(d):
                alpha[i, j] = alpha0[i, j] + (alpha[i, j] - alpha0[i, j]) * f


def _td_loop(alpha, alpha0, b, feats, pair, next_pair, reward, gamma, eta, radius, n_steps):
    m = alpha.shape[0]
    scale = 1.0 / np.sqrt(m)
    avg = np.zeros_like(alpha)
    abs_td = 0.0
    n = pair.shape[0]
    for t in range(n_steps):
        avg += alpha
        i = t % n
        x = feats[pair[i]]
        delta = _value(alpha, b, x, scale) - reward[i] - gamma * _value(alpha, b, feats[next_pair[i]], scale)
        abs_td += abs(delta)
        _step(alpha, alpha0, b, x, eta * delta, scale, radius)
    return avg / n_steps, alpha, abs_td / n_steps


def _regress_loop(alpha, alpha0, b, feats, pair, target, eta, radius, n_steps):
    m = alpha.shape[0]
    scale = 1.0 / np.sqrt(m)
    avg = np.zeros_like(alpha)
    sq = 0.0
    n = pair.shape[0]
    for t in range(n_steps):
        avg += alpha
        i = t % n
        x = feats[pair[i]]
        resid = _value(alpha, b, x, scale) - target[i]
        sq += resid * resid
        _step(alpha, alpha0, b, x, eta * resid, scale, radius)
    return avg / n_steps, alpha, sq / n_steps


_value_jit = numba.njit(cache=True)(_value)
_step_jit = numba.njit(cache=True)(_step)


def _compile_loops():
    # compiled loops must call the compiled helpers
    g = {"np": np, "_value": _value_jit, "_step": _step_jit}
    import types
    td = types.FunctionType(_td_loop.__code__, g, "_td_loop_jit")
    rg = types.FunctionType(_regress_loop.__code__, g, "_regress_loop_jit")
    return numba.njit(td), numba.njit(rg)


_td_loop_jit, _regress_loop_jit = _compile_loops()


def td_loop(alpha, alpha0, b, feats, pair, next_pair, reward, gamma, eta, radius, n_steps, jit=True):
    """Projected semi-gradient TD(0); returns (path average, last iterate, mean |TD error|)."""
    fn = _td_loop_jit if jit else _td_loop
    alpha = np.array(alpha, dtype=float, order="C")
    return fn(alpha, np.ascontiguousarray(alpha0, dtype=float), np.ascontiguousarray(b, dtype=float),
              np.ascontiguousarray(feats, dtype=float), np.ascontiguousarray(pair, dtype=np.int64),
              np.ascontiguousarray(next_pair, dtype=np.int64), np.ascontiguousarray(reward, dtype=float),
              float(gamma), float(eta), float(radius), int(n_steps))


def regress_loop(alpha, alpha0, b, feats, pair, target, eta, radius, n_steps, jit=True):
    """Projected SGD on squared error to per-sample targets.

    Returns (path average, last iterate, mean squared residual).
    """
    fn = _regress_loop_jit if jit else _regress_loop
    alpha = np.array(alpha, dtype=float, order="C")
    return fn(alpha, np.ascontiguousarray(alpha0, dtype=float), np.ascontiguousarray(b, dtype=float),
              np.ascontiguousarray(feats, dtype=float), np.ascontiguousarray(pair, dtype=np.int64),
              np.ascontiguousarray(target, dtype=float), float(eta), float(radius), int(n_steps))
