"""Monte Carlo ensembles, small-parameter studies, and result persistence.

A full experiment is a pure function of its ExperimentConfig (master seed
included): per-path noise streams are derived from (master_seed, path_index),
aggregation runs in path-index order, and report.json is written with sorted
keys, so a rerun reproduces it byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .averaging import theorem_bound
from .errors import ConfigError, PathBlowupError, RunFailedError
from .levy import TimeGrid, sample_noise
from .problems import FIG1_CASES, Problem, build_problem
from .solver import solve_coupled

_Z95 = 1.959963984540054  # two-sided 95% normal quantile
FAILURE_BUDGET = 0.10


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, in plain picklable values.

    ``case`` selects a worked-example preset (overwriting beta/alpha/gamma);
    set it to None to supply those directly.  Expression-problem fields stay
    None for built-in problems.
    """

    problem: str = "eq10"
    case: Optional[str] = "a"
    beta: float = 0.6
    alpha: float = 0.3
    gamma: float = 3.0
    cutoff: float = 0.5
    delta: Optional[float] = None
    epsilon: float = 1e-3
    x0: float = 0.1
    horizon: float = 10.0
    step: float = 1e-2
    n_paths: int = 200
    master_seed: int = 42
    lam: float = 0.5
    big_l: float = 1.0
    workers: int = 1
    save_paths: int = 1
    jump_mode: str = "deterministic_nu_drift"
    drift_expr: Optional[str] = None
    diffusion_expr: Optional[str] = None
    jump_expr: Optional[str] = None
    avg_drift_expr: Optional[str] = None
    avg_diffusion_expr: Optional[str] = None
    avg_jump_drift_expr: Optional[str] = None
    bound_c1: Optional[float] = None
    bound_alphas: Optional[tuple] = None

    def resolved(self) -> "ExperimentConfig":
        """Apply case presets and validate; returns a ready-to-run config."""
        cfg = self
        if cfg.problem == "eq10" and cfg.case is not None:
            if cfg.case not in FIG1_CASES:
                raise ConfigError(
                    f"unknown case {cfg.case!r}; choose from {sorted(FIG1_CASES)}"
                )
            beta, alpha, gamma = FIG1_CASES[cfg.case]
            cfg = dataclasses.replace(cfg, beta=beta, alpha=alpha, gamma=gamma)
        uses_measure = cfg.problem == "eq10" or (
            cfg.problem == "expr" and cfg.jump_expr is not None
        )
        if uses_measure and cfg.delta is None:
            # the inner cutoff is always explicit in persisted configs so a
            # study can refine it deliberately
            cfg = dataclasses.replace(cfg, delta=cfg.cutoff * 1e-3)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1; got {self.n_paths}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1]; got {self.epsilon}")
        if self.step <= 0.0 or self.horizon <= 0.0:
            raise ConfigError("step and horizon must be positive")
        n = round(self.horizon / self.step)
        if n < 1 or abs(n * self.step - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ConfigError(
                f"step {self.step} does not divide horizon {self.horizon} within rounding"
            )
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1; got {self.workers}")
        if self.master_seed < 0:
            raise ConfigError(f"master_seed must be nonnegative; got {self.master_seed}")
        if self.save_paths < 0:
            raise ConfigError(f"save_paths must be >= 0; got {self.save_paths}")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"lam must lie in (0, 1); got {self.lam}")
        if self.big_l <= 0.0:
            raise ConfigError(f"big_l must be positive; got {self.big_l}")

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if out["bound_alphas"] is not None:
            out["bound_alphas"] = list(out["bound_alphas"])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values = dict(data)
        if values.get("bound_alphas") is not None:
            values["bound_alphas"] = tuple(values["bound_alphas"])
        return cls(**values)


@dataclass
class ErrorReport:
    """Ensemble statistics of the distance between coupled paths.

    ``per_path_sup_sq`` holds sup_t |X - Z|^2 per path; the confidence half
    width is the normal 95% half width of the ensemble mean.  Study fields
    (fitted rate, per-epsilon summaries) stay None for single ensembles.
    """

    epsilon: float
    horizon: float
    step: float
    n_paths: int
    n_failures: int
    failed_paths: list[int]
    per_path_sup_sq: list[float]
    mean_sup_sq: float
    ci_half_width: float
    per_path_sup_er: list[float]
    mean_sup_er: float
    er_mean_curve: list[float]
    z_moment_estimate: float
    bound_value: Optional[float] = None
    fitted_rate: Optional[float] = None
    rate_stderr: Optional[float] = None
    degenerate_fit: Optional[str] = None
    epsilons: Optional[list[float]] = None
    mean_by_epsilon: Optional[list[float]] = None
    ci_by_epsilon: Optional[list[float]] = None

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _solve_one(problem: Problem, grid: TimeGrid, cfg: ExperimentConfig, index: int):
    noise = sample_noise(
        problem.spec,
        grid,
        dim=problem.coeffs.brownian_dim,
        seed=cfg.master_seed,
        stream_key=(index,),
        include_jumps=problem.needs_jump_events,
    )
    coupled = solve_coupled(
        problem.coeffs, problem.averaged, noise, problem.x0, cfg.epsilon, problem.beta
    )
    sup_z_sq = float(np.max(np.sum(coupled.averaged.states**2, axis=1)))
    return coupled.sup_sq_error, coupled.sup_error, coupled.er, sup_z_sq


def _run_chunk(cfg_dict: dict, indices: list[int]):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    problem = build_problem(cfg)
    grid = TimeGrid.from_horizon(cfg.horizon, cfg.step)
    out = []
    for index in indices:
        try:
            out.append((index, "ok", _solve_one(problem, grid, cfg, index)))
        except PathBlowupError as exc:
            out.append((index, "failed", (exc.step, exc.time, exc.system)))
    return out


def _aggregate(cfg: ExperimentConfig, results: dict) -> ErrorReport:
    failed = sorted(i for i, (status, _) in results.items() if status == "failed")
    if len(failed) > FAILURE_BUDGET * cfg.n_paths:
        raise RunFailedError(
            f"{len(failed)} of {cfg.n_paths} paths failed "
            f"(budget {FAILURE_BUDGET:.0%}); first failures: {failed[:5]}"
        )
    ok_indices = sorted(i for i, (status, _) in results.items() if status == "ok")
    sup_sq = [results[i][1][0] for i in ok_indices]
    sup_er = [results[i][1][1] for i in ok_indices]
    curves = np.stack([results[i][1][2] for i in ok_indices])
    z_sup_sq = [results[i][1][3] for i in ok_indices]

    n = len(sup_sq)
    mean_sq = float(np.mean(sup_sq))
    ci = float(_Z95 * np.std(sup_sq, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    z_moment = 1.0 + float(np.mean(z_sup_sq))

    bound_value = None
    if cfg.bound_c1 is not None and cfg.bound_alphas is not None:
        bound_value = theorem_bound(
            cfg.bound_c1,
            cfg.bound_alphas,
            z_moment,
            beta=cfg.beta,
            epsilon=cfg.epsilon,
            lam=cfg.lam,
            big_l=cfg.big_l,
        ).bounds[0]

    return ErrorReport(
        epsilon=cfg.epsilon,
        horizon=cfg.horizon,
        step=cfg.step,
        n_paths=cfg.n_paths,
        n_failures=len(failed),
        failed_paths=failed,
        per_path_sup_sq=[float(v) for v in sup_sq],
        mean_sup_sq=mean_sq,
        ci_half_width=ci,
        per_path_sup_er=[float(v) for v in sup_er],
        mean_sup_er=float(np.mean(sup_er)),
        er_mean_curve=[float(v) for v in curves.mean(axis=0)],
        z_moment_estimate=z_moment,
        bound_value=bound_value,
    )


def _execute(cfg: ExperimentConfig) -> dict:
    indices = list(range(cfg.n_paths))
    results = {}
    if cfg.workers == 1:
        for index, status, payload in _run_chunk(cfg.as_dict(), indices):
            results[index] = (status, payload)
    else:
        chunk_count = min(len(indices), cfg.workers * 4)
        chunks = [list(c) for c in np.array_split(indices, chunk_count) if len(c)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_chunk, cfg.as_dict(), chunk) for chunk in chunks]
            for future in futures:
                for index, status, payload in future.result():
                    results[index] = (status, payload)
    return results


def _write_outputs(cfg: ExperimentConfig, report: ErrorReport, out_dir, command: str, elapsed: float):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "effective_config": cfg.as_dict(),
        "master_seed": cfg.master_seed,
        "versions": {
            "package": _package_version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "timing_seconds": elapsed,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report.save(os.path.join(out_dir, "report.json"))
    if cfg.save_paths > 0:
        paths_dir = os.path.join(out_dir, "paths")
        os.makedirs(paths_dir, exist_ok=True)
        problem = build_problem(cfg)
        grid = TimeGrid.from_horizon(cfg.horizon, cfg.step)
        for index in range(min(cfg.save_paths, cfg.n_paths)):
            if index in report.failed_paths:
                continue
            noise = sample_noise(
                problem.spec,
                grid,
                dim=problem.coeffs.brownian_dim,
                seed=cfg.master_seed,
                stream_key=(index,),
                include_jumps=problem.needs_jump_events,
            )
            coupled = solve_coupled(
                problem.coeffs, problem.averaged, noise, problem.x0, cfg.epsilon, problem.beta
            )
            coupled.to_csv(os.path.join(paths_dir, f"path_{index:06d}.csv"))


def _package_version() -> str:
    from . import __version__

    return __version__


def run_ensemble(config: ExperimentConfig, out_dir=None, command: str = "run_ensemble") -> ErrorReport:
    """Run the coupled solve over an ensemble of noise streams.

    Per-path failures (state blow-ups) are excluded and counted; more than
    10% of them fails the run.  With ``out_dir`` set, writes manifest.json,
    report.json, and the first ``save_paths`` coupled paths as CSV.
    """
    cfg = config.resolved()
    started = time.perf_counter()
    report = _aggregate(cfg, _execute(cfg))
    if out_dir is not None:
        _write_outputs(cfg, report, out_dir, command, time.perf_counter() - started)
    return report


def fit_rate(epsilons, means, cis):
    """Least-squares slope of log(mean) against log(epsilon), or a refusal.

    Returns (rate, stderr, degenerate_reason).  The fit is refused when any
    mean is exactly zero ("zero_error") or when every pair of mean +- ci
    intervals overlaps ("insufficient_resolution").
    """
    if any(m <= 0.0 for m in means):
        return None, None, "zero_error"
    overlap_all = all(
        (means[i] - cis[i] <= means[j] + cis[j])
        and (means[j] - cis[j] <= means[i] + cis[i])
        for i in range(len(epsilons))
        for j in range(i + 1, len(epsilons))
    )
    if overlap_all:
        return None, None, "insufficient_resolution"
    x = np.log(np.asarray(epsilons, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    coef, cov = np.polyfit(x, y, 1, cov=True)
    return float(coef[0]), float(math.sqrt(cov[0, 0])), None


def convergence_study(
    base_config: ExperimentConfig,
    epsilons,
    out_dir=None,
) -> ErrorReport:
    """Ensembles across a grid of small parameters with common random numbers.

    Requires at least three epsilon values spanning at least two decades.
    The headline per-path fields come from the smallest epsilon; the study
    grid, per-epsilon means and confidence half-widths, and the fitted
    log-log slope ride along.  The fit is refused (fitted_rate None with a
    reason) when every pair of per-epsilon confidence intervals overlaps or
    any mean is exactly zero.
    """
    eps = sorted({float(e) for e in epsilons}, reverse=True)
    if len(eps) < 3:
        raise ConfigError(f"a study needs >= 3 distinct epsilon values; got {len(eps)}")
    if max(eps) / min(eps) < 100.0 * (1.0 - 1e-12):
        raise ConfigError(
            f"epsilon grid must span >= 2 decades; got [{min(eps):g}, {max(eps):g}]"
        )

    reports = {}
    for e in eps:
        cfg = dataclasses.replace(base_config, epsilon=e)
        reports[e] = run_ensemble(cfg)

    means = [reports[e].mean_sup_sq for e in eps]
    cis = [reports[e].ci_half_width for e in eps]
    fitted, stderr, degenerate = fit_rate(eps, means, cis)

    headline = reports[eps[-1]]
    report = dataclasses.replace(
        headline,
        fitted_rate=fitted,
        rate_stderr=stderr,
        degenerate_fit=degenerate,
        epsilons=eps,
        mean_by_epsilon=means,
        ci_by_epsilon=cis,
    )
    if out_dir is not None:
        cfg = dataclasses.replace(base_config, epsilon=eps[-1]).resolved()
        started = time.perf_counter()
        _write_outputs(cfg, report, out_dir, "convergence_study", time.perf_counter() - started)
    return report


def reproduce_fig1(case: str, out_dir, **overrides) -> dict:
    """Run one worked-example case end to end and persist plot-ready data.

    Emits the standard output layout (manifest.json, report.json, and the
    seeded path paths/path_000000.csv with columns t, X_1, Z_1, Er); returns
    the file paths.
    """
    if case not in FIG1_CASES:
        raise ConfigError(f"unknown case {case!r}; choose from {sorted(FIG1_CASES)}")
    defaults = dict(
        problem="eq10",
        case=case,
        epsilon=1e-3,
        cutoff=0.5,
        x0=0.1,
        save_paths=max(1, int(overrides.pop("save_paths", 1))),
    )
    defaults.update(overrides)
    cfg = ExperimentConfig(**defaults)
    run_ensemble(cfg, out_dir=out_dir, command=f"fig1:{case}")
    return {
        "manifest": os.path.join(out_dir, "manifest.json"),
        "report": os.path.join(out_dir, "report.json"),
        "path_csv": os.path.join(out_dir, "paths", "path_000000.csv"),
    }
