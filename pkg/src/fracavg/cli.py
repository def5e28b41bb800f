"""Command-line surface: simulate, average, bound, study, fig1.

Exit codes are a stable contract for scripting: 0 success, 1 runtime
failure (a solve or ensemble died), 2 usage or configuration error.  Every
successful invocation writes a manifest echoing its effective config; a
manifest can be fed back through --config to rerun the experiment.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from .averaging import averaged_jump_drift, probe_hypotheses, theorem_bound, time_average
from .errors import ConfigError, FracavgError
from .harness import ExperimentConfig, convergence_study, reproduce_fig1, run_ensemble
from .problems import FIG1_CASES, build_problem

WORKERS_ENV = "FRACAVG_WORKERS"
DEFAULT_OUT = "fracavg_out"


def _parse_scalar(text: str):
    lowered = text.strip()
    if lowered.lower() in ("none", "null"):
        return None
    if lowered.lower() in ("true", "false"):
        return lowered.lower() == "true"
    try:
        return int(lowered)
    except ValueError:
        pass
    try:
        return float(lowered)
    except ValueError:
        pass
    return lowered


def load_config_file(path: str) -> dict:
    """Read a flat key=value config file (or a manifest.json) into a dict."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        return data.get("effective_config", data)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _parse_scalar(value)
    return out


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}")


def _default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer; got {env!r}")


def _config_from_args(args, **forced) -> ExperimentConfig:
    """Merge defaults < config file < explicit flags into a validated config."""
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    flag_map = {
        "problem": "problem",
        "case": "case",
        "beta": "beta",
        "alpha": "alpha",
        "gamma": "gamma",
        "cutoff": "cutoff",
        "delta": "delta",
        "epsilon": "epsilon",
        "x0": "x0",
        "horizon": "horizon",
        "step": "step",
        "paths": "n_paths",
        "seed": "master_seed",
        "workers": "workers",
        "save_paths": "save_paths",
        "drift": "drift_expr",
        "diffusion": "diffusion_expr",
        "jump": "jump_expr",
        "avg_drift": "avg_drift_expr",
        "avg_diffusion": "avg_diffusion_expr",
        "avg_jump_drift": "avg_jump_drift_expr",
        "jump_mode": "jump_mode",
        "lam": "lam",
        "big_l": "big_l",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    if "workers" not in values:
        values["workers"] = _default_workers()
    values.update(forced)
    # a case named on the command line or in the file wins over stale
    # beta/alpha/gamma copied from a manifest echo
    if values.get("problem", "eq10") == "eq10" and values.get("case") is not None:
        for key in ("beta", "alpha", "gamma"):
            if getattr(args, "case", None) is not None:
                values.pop(key, None)
    cfg = ExperimentConfig.from_dict(values)
    return cfg.resolved()


def _out_dir(args, command: str) -> str:
    base = getattr(args, "out", None) or DEFAULT_OUT
    return os.path.join(base, command)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file or a manifest.json")
    parser.add_argument("--seed", type=int, help="master seed for noise streams")
    parser.add_argument("--out", help=f"output directory root (default {DEFAULT_OUT})")
    parser.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    parser.add_argument("--step", type=float, help="grid step")
    parser.add_argument("--horizon", type=float, help="time horizon")
    parser.add_argument("--paths", type=int, help="ensemble size")


def _add_problem_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", choices=["eq10", "mlbench", "expr"], help="built-in problem")
    parser.add_argument("--case", choices=sorted(FIG1_CASES), help="worked-example parameter preset")
    parser.add_argument("--beta", type=float, help="kernel order in (0.5, 1)")
    parser.add_argument("--alpha", type=float, help="jump stability index in (0, 2)")
    parser.add_argument("--gamma", type=float, help="jump intensity scale")
    parser.add_argument("--cutoff", type=float, help="outer jump truncation")
    parser.add_argument("--delta", type=float, help="inner jump simulation cutoff")
    parser.add_argument("--epsilon", type=float, help="small parameter in (0, 1]")
    parser.add_argument("--x0", type=float, help="initial state")
    parser.add_argument("--drift", help="scalar drift expression in t, x (expr problem)")
    parser.add_argument("--diffusion", help="scalar diffusion expression in t, x")
    parser.add_argument("--jump", help="scalar jump expression in t, x, z")
    parser.add_argument("--avg-drift", dest="avg_drift", help="averaged drift expression in x")
    parser.add_argument("--avg-diffusion", dest="avg_diffusion", help="averaged diffusion expression in x")
    parser.add_argument(
        "--avg-jump-drift", dest="avg_jump_drift", help="averaged jump-drift expression in x"
    )
    parser.add_argument(
        "--jump-mode",
        dest="jump_mode",
        choices=["compensated_prm", "deterministic_nu_drift"],
        help="how the jump coefficient enters",
    )


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args, n_paths=1, save_paths=1, workers=1)
    out = _out_dir(args, "simulate")
    report = run_ensemble(cfg, out_dir=out, command="simulate")
    print(f"simulated 1 coupled path: sup Er = {math.sqrt(report.mean_sup_sq):.6g}")
    print(f"wrote {out}/manifest.json, report.json, paths/path_000000.csv")
    return 0


def cmd_average(args) -> int:
    cfg = _config_from_args(args, n_paths=1)
    problem = build_problem(cfg)
    out = _out_dir(args, "average")
    os.makedirs(out, exist_ok=True)

    avg_horizon = args.avg_horizon if args.avg_horizon is not None else 100.0 * math.pi
    state = problem.x0
    drift_avg = time_average(problem.coeffs.drift, state, avg_horizon)
    print(f"time-averaged drift at x0={cfg.x0:g}: {float(drift_avg[0]):.10g}")
    if problem.coeffs.jump is not None and problem.spec is not None:
        jd = averaged_jump_drift(problem.spec, problem.coeffs.jump, np.array([1.0]), avg_horizon)
        gamma1 = float(jd[0]) / math.sqrt(cfg.epsilon)
        print(f"averaged jump drift per unit state: {float(jd[0]):.10g}")
        print(f"gamma1 = {gamma1:.10g}")
        print(f"averaged drift coefficient (1 + gamma1) = {1.0 + gamma1:.10g}")

    t1_grid = _float_list(args.t1_grid) if args.t1_grid else [10.0, 100.0, 1000.0]
    probes = (
        [np.array([v]) for v in _float_list(args.probes)]
        if args.probes
        else [np.array([v]) for v in (0.01, 0.1, 1.0, 10.0)]
    )
    report = probe_hypotheses(
        problem.coeffs,
        problem.averaged,
        spec=problem.spec,
        t1_grid=t1_grid,
        probe_states=probes,
        times=np.linspace(0.0, min(cfg.horizon, 10.0), 21),
    )
    path = os.path.join(out, "hypothesis.json")
    report.save(path)
    flags = report.envelope.decay_flags
    print(f"lipschitz estimate C1 = {report.lipschitz_estimate:.6g}")
    print(f"growth estimate C2 = {report.growth_estimate:.6g}")
    print(f"residual decay flags: {flags}")
    print(f"wrote {path}")
    return 0


def cmd_bound(args) -> int:
    alphas = _float_list(args.alphas)
    if len(alphas) != 3:
        raise ConfigError(f"--alphas needs exactly three values; got {len(alphas)}")
    epsilons = _float_list(args.epsilons) if args.epsilons else [1e-2, 1e-3, 1e-4]
    report = theorem_bound(
        c1=args.c1,
        alpha_sups=alphas,
        z_moment=args.z_moment,
        beta=args.beta if args.beta is not None else 0.75,
        epsilon=epsilons,
        lam=args.lam if args.lam is not None else 0.5,
        big_l=args.big_l if args.big_l is not None else 1.0,
    )
    for eps, value in zip(report.epsilons, report.bounds):
        print(f"epsilon = {eps:g}: bound = {value:.10g}")
    out = _out_dir(args, "bound")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "bound.json")
    report.save(path)
    print(f"wrote {path}")
    return 0


def cmd_study(args) -> int:
    epsilons = _float_list(args.epsilons)
    if len(set(epsilons)) < 3:
        raise ConfigError(f"a study needs >= 3 distinct epsilon values; got {len(set(epsilons))}")
    cfg = _config_from_args(args)
    out = _out_dir(args, "study")
    report = convergence_study(cfg, epsilons, out_dir=out)
    for eps, mean, ci in zip(report.epsilons, report.mean_by_epsilon, report.ci_by_epsilon):
        print(f"epsilon = {eps:g}: mean sup-square error = {mean:.6g} +- {ci:.3g}")
    if report.fitted_rate is not None:
        print(f"fitted log-log slope = {report.fitted_rate:.4f} +- {report.rate_stderr:.4f}")
    else:
        print(f"fit refused: {report.degenerate_fit}")
    print(f"wrote {out}/report.json")
    return 0


def cmd_fig1(args) -> int:
    cases = sorted(FIG1_CASES) if args.case is None else [args.case]
    overrides = {}
    for key, attr in (
        ("master_seed", "seed"),
        ("step", "step"),
        ("horizon", "horizon"),
        ("n_paths", "paths"),
        ("workers", "workers"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if "workers" not in overrides:
        overrides["workers"] = _default_workers()
    base = getattr(args, "out", None) or DEFAULT_OUT
    for case in cases:
        files = reproduce_fig1(case, os.path.join(base, f"fig1_{case}"), **overrides)
        print(f"case {case}: wrote {files['path_csv']} and {files['report']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracavg",
        description=(
            "Simulate memory-kernel stochastic systems with small-jump noise, "
            "construct their time-averaged counterparts, and measure how closely "
            "the averaged paths track the originals."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="solve one coupled path and write CSV + manifest")
    _add_common(p_sim)
    _add_problem_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_avg = sub.add_parser("average", help="construct averaged coefficients and probe hypotheses")
    _add_common(p_avg)
    _add_problem_flags(p_avg)
    p_avg.add_argument("--avg-horizon", dest="avg_horizon", type=float, help="averaging horizon")
    p_avg.add_argument("--t1-grid", dest="t1_grid", help="comma list of residual horizons")
    p_avg.add_argument("--probes", help="comma list of probe states")
    p_avg.set_defaults(func=cmd_average)

    p_bound = sub.add_parser("bound", help="evaluate the closeness bound over an epsilon grid")
    p_bound.add_argument("--c1", type=float, required=True, help="Lipschitz constant estimate")
    p_bound.add_argument("--alphas", required=True, help="three residual suprema a1,a2,a3")
    p_bound.add_argument("--z-moment", dest="z_moment", type=float, default=2.0,
                         help="estimate of 1 + E sup|Z|^2")
    p_bound.add_argument("--beta", type=float, help="kernel order (default 0.75)")
    p_bound.add_argument("--epsilons", help="comma list of epsilon values")
    p_bound.add_argument("--lambda", dest="lam", type=float, help="exponent split in (0,1)")
    p_bound.add_argument("--L", dest="big_l", type=float, help="horizon scale constant")
    p_bound.add_argument("--out", help=f"output directory root (default {DEFAULT_OUT})")
    p_bound.set_defaults(func=cmd_bound)

    p_study = sub.add_parser("study", help="convergence study across an epsilon grid")
    _add_common(p_study)
    _add_problem_flags(p_study)
    p_study.add_argument("--epsilons", required=True, help="comma list of >= 3 epsilon values")
    p_study.set_defaults(func=cmd_study)

    p_fig1 = sub.add_parser("fig1", help="reproduce the worked-example comparison cases")
    _add_common(p_fig1)
    p_fig1.add_argument("--case", choices=sorted(FIG1_CASES), help="single case (default: all)")
    p_fig1.set_defaults(func=cmd_fig1)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid value: {exc}", file=sys.stderr)
        return 2
    except FracavgError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
