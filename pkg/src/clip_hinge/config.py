"""Experiment configuration from a TOML file.

    seed = 0
    mode = "tabular"            # tabular | neural | verify
    output = "run.csv"
    format = "csv"              # csv | jsonl

    [env]
    kind = "random"             # chain | gridworld | random
    n_states = 5
    n_actions = 3

    [tabular]
    classifier = "ratio"
    epsilon = 0.3
    step_size = 0.1
    n_iters = 5
    n_outer_iters = 200

    [sweep]
    param = "epsilon"           # or "T" (neural) / "n_outer_iters" (tabular)
    values = [0.1, 0.3, 0.7]

The master seed drives every RNG stream; ``CLIP_HINGE_SEED`` replaces the
file's value and an explicit ``--seed`` replaces both.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .emda import EmdaConfig
from .envs import EnvSpec
from .hinge import ClassifierSpec
from .neural import NeuralRunConfig
from .tabular import TabularRunConfig

MODES = ("tabular", "neural", "verify")
SEED_ENV = "CLIP_HINGE_SEED"
_TOP_KEYS = {"seed", "mode", "output", "format", "env", "tabular", "neural", "sweep", "verify"}
_CLASSIFIER_KEYS = {"classifier", "epsilon", "weight_mode"}
_TABULAR_KEYS = {"step_size", "n_iters", "n_outer_iters", "batch_scheme", "trajectories_per_iter", "horizon", "adv_tol"}
_NEURAL_KEYS = {f.name for f in fields(NeuralRunConfig)} - {"classifier", "rng_seed", "record_timing"}
SWEEP_PARAMS = {"tabular": ("epsilon", "n_outer_iters", "step_size", "n_iters"),
                "neural": ("epsilon", "T", "K")}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec
    mode: str
    agent: object                 # TabularRunConfig | NeuralRunConfig | None
    output: str | None = None
    fmt: str = "csv"
    seed: int = 0
    sweep_param: str | None = None
    sweep_values: tuple = ()
    verify_full: bool = False
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        """Every setting including defaults, for self-describing output headers."""
        out = {"mode": self.mode, "seed": self.seed, "format": self.fmt, "env": self.env.to_dict()}
        if isinstance(self.agent, TabularRunConfig):
            a = self.agent
            out["tabular"] = {
                "classifier": a.classifier.kind, "epsilon": a.classifier.epsilon,
                "weight_mode": a.classifier.weight_mode, "step_size": a.emda.step_size,
                "n_iters": a.emda.n_iters, "n_outer_iters": a.n_outer_iters,
                "batch_scheme": a.batch_scheme, "trajectories_per_iter": a.trajectories_per_iter,
                "horizon": a.horizon, "adv_tol": a.adv_tol, "rng_seed": a.rng_seed,
            }
        elif isinstance(self.agent, NeuralRunConfig):
            out["neural"] = self.agent.to_dict()
        if self.sweep_param:
            out["sweep"] = {"param": self.sweep_param, "values": list(self.sweep_values)}
        return out

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return build_config(self.raw, seed)


def _check_keys(section: dict, allowed: set, where: str) -> None:
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)} in {where}")


def _classifier(sec: dict, default_eps: float) -> ClassifierSpec:
    return ClassifierSpec(sec.get("classifier", "ratio"), sec.get("epsilon", default_eps), sec.get("weight_mode"))


def _tabular(sec: dict, seed: int) -> TabularRunConfig:
    _check_keys(sec, _TABULAR_KEYS | _CLASSIFIER_KEYS, "[tabular]")
    kw = {k: sec[k] for k in ("n_outer_iters", "batch_scheme", "trajectories_per_iter", "horizon", "adv_tol") if k in sec}
    emda = EmdaConfig(sec.get("step_size", 0.1), sec.get("n_iters", 5))
    return TabularRunConfig(classifier=_classifier(sec, 0.3), emda=emda, rng_seed=seed, **kw)


def _neural(sec: dict, seed: int) -> NeuralRunConfig:
    _check_keys(sec, _NEURAL_KEYS | _CLASSIFIER_KEYS, "[neural]")
    kw = {k: v for k, v in sec.items() if k in _NEURAL_KEYS}
    return NeuralRunConfig(classifier=_classifier(sec, 0.2), rng_seed=seed, **kw)


def resolve_seed(file_seed, cli_seed=None) -> int:
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return int(file_seed)


def build_config(raw: dict, seed: int | None = None) -> ExperimentConfig:
    """Validate a parsed TOML document; any problem raises ConfigError."""
    try:
        _check_keys(raw, _TOP_KEYS, "top level")
        seed = resolve_seed(raw.get("seed", 0), seed)
        mode = raw.get("mode", "tabular")
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        env_sec = dict(raw.get("env", {}))
        _check_keys(env_sec, {f.name for f in fields(EnvSpec)}, "[env]")
        env_sec.setdefault("seed", seed)
        env = EnvSpec(**env_sec)
        if mode == "tabular":
            agent = _tabular(dict(raw.get("tabular", {})), seed)
        elif mode == "neural":
            agent = _neural(dict(raw.get("neural", {})), seed)
        else:
            agent = None
        fmt = raw.get("format", "csv")
        if fmt not in ("csv", "jsonl"):
            raise ConfigError(f"format must be csv or jsonl, got {fmt!r}")
        sweep = dict(raw.get("sweep", {}))
        _check_keys(sweep, {"param", "values"}, "[sweep]")
        param = sweep.get("param")
        values = tuple(sweep.get("values", ()))
        if param is not None and param not in SWEEP_PARAMS.get(mode, ()):
            raise ConfigError(f"cannot sweep {param!r} in {mode} mode")
        verify_sec = dict(raw.get("verify", {}))
        _check_keys(verify_sec, {"full"}, "[verify]")
        cfg = ExperimentConfig(env, mode, agent, raw.get("output"), fmt, seed, param, values,
                               bool(verify_sec.get("full", False)), raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return build_config(raw, seed)


def sweep_cell(cfg: ExperimentConfig, value) -> ExperimentConfig:
    """The configuration of one sweep cell."""
    a, p = cfg.agent, cfg.sweep_param
    try:
        if p == "epsilon":
            agent = replace(a, classifier=ClassifierSpec(a.classifier.kind, value, a.classifier.weight_mode))
        elif p in ("step_size", "n_iters"):
            emda = EmdaConfig(value if p == "step_size" else a.emda.step_size,
                              value if p == "n_iters" else a.emda.n_iters)
            agent = replace(a, emda=emda)
        elif p == "T":
            # eta follows the new horizon unless it was set explicitly
            raw_eta = cfg.raw.get("neural", {}).get("eta")
            agent = replace(a, T=int(value), eta=raw_eta)
        else:
            agent = replace(a, **{p: value})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep value {value!r} for {p}: {exc}") from exc
    return replace(cfg, agent=agent, sweep_param=None, sweep_values=())
