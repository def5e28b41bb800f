"""Built-in problem registry.

A Problem bundles everything one experiment needs: original and averaged
coefficient sets, the jump measure, the initial state, and the kernel order.
Problems are rebuilt from plain config values inside worker processes, so
builders must depend only on picklable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .kernels import FractionalOrder
from .levy import JumpMeasureSpec
from .solver import AveragedCoefficientSet, CoefficientSet, JumpMode

# Worked-example parameter presets (beta, alpha, gamma); the shared settings
# are epsilon=0.001, cutoff=0.5, x0=0.1.
FIG1_CASES = {
    "a": (0.6, 0.3, 3.0),
    "b": (0.6, 1.1, 0.6),
    "c": (0.85, 0.3, 0.6),
    "d": (0.85, 1.9, 3.0),
}


@dataclass(frozen=True)
class Problem:
    name: str
    coeffs: CoefficientSet
    averaged: AveragedCoefficientSet
    spec: Optional[JumpMeasureSpec]
    x0: np.ndarray
    beta: FractionalOrder
    needs_jump_events: bool
    params: dict
    # drift-folded averaged form (jump drift absorbed into the drift slot);
    # dynamics-equivalent to ``averaged``, kept for cross-checks
    folded_averaged: Optional[AveragedCoefficientSet] = None


def jump_drift_scale(gamma: float, alpha: float, cutoff: float) -> float:
    """Closed-form integral of x^4 against the jump measure on (0, cutoff)."""
    return gamma * cutoff ** (4.0 - alpha) / (4.0 - alpha)


def build_eq10(
    beta: float,
    alpha: float,
    gamma: float,
    cutoff: float,
    epsilon: float,
    x0: float = 0.1,
    delta: float | None = None,
) -> Problem:
    """The oscillating scalar example and its time-averaged companion.

    Original system: drift 2 x cos^2(t), unit additive diffusion, and a
    deterministic jump drift integrating 2 z^4 sin^2(t) x against the
    power-law measure.  Averaged system (slot form): drift x, unit diffusion,
    jump-drift scale * x.  The drift-folded form (1 + gamma1) x with
    gamma1 = scale / sqrt(epsilon) is attached for cross-checks.
    """
    spec = JumpMeasureSpec(gamma=gamma, alpha=alpha, cutoff=cutoff, delta=delta)
    scale = jump_drift_scale(gamma, alpha, cutoff)
    gamma1 = scale / math.sqrt(epsilon)

    coeffs = CoefficientSet.scalar(
        drift=lambda t, x: 2.0 * x * math.cos(t) ** 2,
        diffusion=lambda t, x: 1.0,
        jump=lambda t, x, z: 2.0 * z**4 * math.sin(t) ** 2 * x,
        jump_mode=JumpMode.NU_DRIFT,
        jump_drift=lambda t, x: 2.0 * math.sin(t) ** 2 * x * scale,
    )
    averaged = AveragedCoefficientSet.scalar(
        drift=lambda x: x,
        diffusion=lambda x: 1.0,
        jump=lambda x, z: z**4 * x,
        jump_mode=JumpMode.NU_DRIFT,
        jump_drift=lambda x: scale * x,
    )
    folded = AveragedCoefficientSet.scalar(
        drift=lambda x: (1.0 + gamma1) * x,
        diffusion=lambda x: 1.0,
    )
    return Problem(
        name="eq10",
        coeffs=coeffs,
        averaged=averaged,
        folded_averaged=folded,
        spec=spec,
        x0=np.array([x0]),
        beta=FractionalOrder(beta),
        needs_jump_events=False,  # the jump slot is a deterministic drift here
        params={
            "beta": beta,
            "alpha": alpha,
            "gamma": gamma,
            "cutoff": cutoff,
            "delta": spec.delta,
            "epsilon": epsilon,
            "x0": x0,
            "gamma1": gamma1,
            "jump_drift_scale": scale,
        },
    )


def build_mlbench(beta: float, x0: float = 1.0) -> Problem:
    """Deterministic linear benchmark with the known Mittag-Leffler solution."""
    coeffs = CoefficientSet.scalar(drift=lambda t, x: x, diffusion=lambda t, x: 0.0)
    averaged = AveragedCoefficientSet.scalar(drift=lambda x: x, diffusion=lambda x: 0.0)
    return Problem(
        name="mlbench",
        coeffs=coeffs,
        averaged=averaged,
        spec=None,
        x0=np.array([x0]),
        beta=FractionalOrder(beta),
        needs_jump_events=False,
        params={"beta": beta, "x0": x0},
    )


_EXPR_NAMES = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
    "abs": abs,
    "min": min,
    "max": max,
    "pi": math.pi,
    "e": math.e,
}


def compile_expr(source: str, args: tuple[str, ...]):
    """Compile a scalar coefficient expression over the given argument names.

    Only the listed arguments and a fixed set of math names are visible;
    anything else is rejected up front with the offending name.
    """
    try:
        code = compile(source, "<coefficient>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad coefficient expression {source!r}: {exc.msg}") from None
    allowed = set(_EXPR_NAMES) | set(args)
    for name in code.co_names:
        if name not in allowed:
            raise ConfigError(
                f"coefficient expression {source!r} uses unknown name {name!r} "
                f"(allowed: {', '.join(sorted(allowed))})"
            )

    def fn(*values):
        scope = dict(_EXPR_NAMES)
        scope.update(zip(args, values))
        return float(eval(code, {"__builtins__": {}}, scope))

    return fn


def build_expr_problem(
    beta: float,
    drift: str,
    diffusion: str,
    avg_drift: str,
    avg_diffusion: str,
    jump: str | None = None,
    avg_jump_drift: str | None = None,
    jump_mode: str = JumpMode.NU_DRIFT.value,
    gamma: float | None = None,
    alpha: float | None = None,
    cutoff: float | None = None,
    delta: float | None = None,
    x0: float = 0.1,
) -> Problem:
    """Custom scalar problem from expression strings in t, x (and z for jumps)."""
    mode = JumpMode(jump_mode)
    spec = None
    if jump is not None:
        if gamma is None or alpha is None or cutoff is None:
            raise ConfigError(
                "a jump expression needs the measure parameters gamma, alpha, cutoff"
            )
        spec = JumpMeasureSpec(gamma=gamma, alpha=alpha, cutoff=cutoff, delta=delta)

    f = compile_expr(drift, ("t", "x"))
    g = compile_expr(diffusion, ("t", "x"))
    fbar = compile_expr(avg_drift, ("x",))
    gbar = compile_expr(avg_diffusion, ("x",))
    h = compile_expr(jump, ("t", "x", "z")) if jump is not None else None
    hbar_drift = (
        compile_expr(avg_jump_drift, ("x",)) if avg_jump_drift is not None else None
    )

    coeffs = CoefficientSet.scalar(
        drift=lambda t, x: f(t, x),
        diffusion=lambda t, x: g(t, x),
        jump=(lambda t, x, z: h(t, x, z)) if h is not None else None,
        jump_mode=mode,
    )
    averaged = AveragedCoefficientSet.scalar(
        drift=lambda x: fbar(x),
        diffusion=lambda x: gbar(x),
        jump_mode=mode,
        jump_drift=(lambda x: hbar_drift(x)) if hbar_drift is not None else None,
    )
    return Problem(
        name="expr",
        coeffs=coeffs,
        averaged=averaged,
        spec=spec,
        x0=np.array([x0]),
        beta=FractionalOrder(beta),
        needs_jump_events=(h is not None and mode == JumpMode.COMPENSATED),
        params={
            "beta": beta,
            "drift": drift,
            "diffusion": diffusion,
            "avg_drift": avg_drift,
            "avg_diffusion": avg_diffusion,
            "jump": jump,
            "avg_jump_drift": avg_jump_drift,
            "jump_mode": mode.value,
            "gamma": gamma,
            "alpha": alpha,
            "cutoff": cutoff,
            "delta": spec.delta if spec is not None else None,
            "x0": x0,
        },
    )


_BUILDERS = {}


def register_problem(name: str, builder) -> None:
    """Register a builder callable(config) -> Problem under a problem name.

    Runtime registrations are visible to worker processes only under a fork
    start method; registry problems used with worker pools should be
    registered at import time.
    """
    _BUILDERS[name] = builder


def build_problem(config) -> Problem:
    """Resolve an ExperimentConfig into a Problem via the registry."""
    name = config.problem
    if name == "eq10":
        return build_eq10(
            beta=config.beta,
            alpha=config.alpha,
            gamma=config.gamma,
            cutoff=config.cutoff,
            epsilon=config.epsilon,
            x0=config.x0,
            delta=config.delta,
        )
    if name == "mlbench":
        return build_mlbench(beta=config.beta, x0=config.x0)
    if name == "expr":
        if config.drift_expr is None or config.diffusion_expr is None:
            raise ConfigError("expr problems need drift_expr and diffusion_expr")
        if config.avg_drift_expr is None or config.avg_diffusion_expr is None:
            raise ConfigError("expr problems need avg_drift_expr and avg_diffusion_expr")
        return build_expr_problem(
            beta=config.beta,
            drift=config.drift_expr,
            diffusion=config.diffusion_expr,
            avg_drift=config.avg_drift_expr,
            avg_diffusion=config.avg_diffusion_expr,
            jump=config.jump_expr,
            avg_jump_drift=config.avg_jump_drift_expr,
            jump_mode=config.jump_mode,
            gamma=config.gamma,
            alpha=config.alpha,
            cutoff=config.cutoff,
            delta=config.delta,
            x0=config.x0,
        )
    if name in _BUILDERS:
        return _BUILDERS[name](config)
    raise ConfigError(
        f"unknown problem {name!r} (built in: eq10, mlbench, expr"
        + (", " + ", ".join(sorted(_BUILDERS)) if _BUILDERS else "")
        + ")"
    )
