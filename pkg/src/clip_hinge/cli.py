"""Command line entry point: ``clip-hinge {run,oracle,verify,sweep}``.

Exit codes: 0 success, 1 a verification suite failed, 2 configuration
error, 3 runtime assertion failure. Errors also go to stderr as one JSON
line ``{"error": kind, "message": ...}``.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, build_config, load_config, resolve_seed, sweep_cell
from .envs import ENV_KINDS, build_env
from .metrics import fmt_float, write_metrics
from .neural import run_neural
from .oracle import solve_optimal
from .tabular import run_tabular
from . import verify as verify_mod

EXIT_OK, EXIT_SUITE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clip-hinge", description="Hinge-loss PPO-Clip experiments on tabular MDPs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="TOML experiment file")
        sp.add_argument("--seed", type=int, help="master seed (overrides file and CLIP_HINGE_SEED)")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")

    run = sub.add_parser("run", help="run one experiment and write its metrics")
    common(run, config_required=True)
    run.add_argument("--out", help="metrics file (default: config 'output', else stdout)")
    run.add_argument("--format", choices=("csv", "jsonl"))
    run.add_argument("--timing", action="store_true", help="record wall-clock ms (breaks byte-determinism)")

    orc = sub.add_parser("oracle", help="solve the MDP exactly and print v*, pi*, nu*")
    common(orc)
    orc.add_argument("--env", choices=ENV_KINDS, help="environment kind when no config is given")
    orc.add_argument("--n-states", type=int, default=None)
    orc.add_argument("--n-actions", type=int, default=None)
    orc.add_argument("--size", type=int, default=None)
    orc.add_argument("--slip", type=float, default=None)
    orc.add_argument("--gamma", type=float, default=None)

    ver = sub.add_parser("verify", help="run the property suites")
    common(ver)
    ver.add_argument("--full", action="store_true", help="full-size suites (slower)")

    sw = sub.add_parser("sweep", help="one run per value of the config's [sweep] grid")
    common(sw, config_required=True)
    sw.add_argument("--out", required=True, help="output directory")
    sw.add_argument("--format", choices=("csv", "jsonl"))
    sw.add_argument("--timing", action="store_true")
    return p


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _log(args, msg: str) -> None:
    if not args.quiet:
        sys.stderr.write(msg + "\n")


def execute(cfg: ExperimentConfig, timing: bool = False):
    """Run the configured agent; returns its RunResult."""
    mdp = build_env(cfg.env)
    agent = replace(cfg.agent, record_timing=timing)
    if cfg.mode == "neural":
        return run_neural(mdp, agent)
    return run_tabular(mdp, agent)


def _write(cfg: ExperimentConfig, records, out, fmt) -> None:
    if out in (None, "-"):
        write_metrics(sys.stdout, records, fmt, meta=cfg.to_dict())
        return
    path = Path(out)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            write_metrics(fh, records, fmt, meta=cfg.to_dict())
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc.strerror}") from exc


def _cmd_verify(args, seed: int, full: bool) -> int:
    results = verify_mod.run_all(seed=seed, quick=not full)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        return _fail("verify", "failed suites: " + ", ".join(failed), EXIT_SUITE)
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed)
    if cfg.mode == "verify":
        return _cmd_verify(args, cfg.seed, cfg.verify_full)
    fmt = args.format or cfg.fmt
    res = execute(cfg, args.timing)
    _write(cfg, res.metrics, args.out or cfg.output, fmt)
    last = res.metrics[-1]
    _log(args, f"{cfg.mode}: {len(res.metrics) - 1} iterations, final gap {last.gap:.6g}, "
               f"min gap {last.min_gap_so_far:.6g}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.seed)
    if not cfg.sweep_param or not cfg.sweep_values:
        raise ConfigError("sweep needs a [sweep] section with param and values")
    fmt = args.format or cfg.fmt
    out_dir = Path(args.out)
    for value in cfg.sweep_values:
        cell = sweep_cell(cfg, value)
        res = execute(cell, args.timing)
        path = out_dir / f"{cfg.sweep_param}={value}.{fmt}"
        _write(cell, res.metrics, path, fmt)
        _log(args, f"{path}: min gap {res.metrics[-1].min_gap_so_far:.6g}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    if args.config:
        env = load_config(args.config, args.seed).env
    else:
        raw = {"mode": "verify", "env": {}}
        for key in ("n_states", "n_actions", "size", "slip", "gamma"):
            val = getattr(args, key)
            if val is not None:
                raw["env"][key] = val
        if args.env:
            raw["env"]["kind"] = args.env
        env = build_config(raw, args.seed).env
    mdp = build_env(env)
    opt = solve_optimal(mdp)
    out = {
        "env": env.to_dict(),
        "v_star": [fmt_float(x) for x in opt.v_star],
        "q_star": [[fmt_float(x) for x in row] for row in opt.q_star],
        "greedy_actions": [int(a) for a in opt.greedy_actions],
        "nu_star": [fmt_float(x) for x in opt.nu_star],
    }
    print(json.dumps(out, indent=None if args.quiet else 2))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except _ArgError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    handlers = {"run": _cmd_run, "oracle": _cmd_oracle, "sweep": _cmd_sweep,
                "verify": lambda a: _cmd_verify(a, resolve_seed(0, a.seed), a.full)}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (AssertionError, ArithmeticError) as exc:
        return _fail("runtime", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_RUNTIME)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
