"""Time-averaged coefficients, hypothesis probing, and the error-bound calculator.

Residual envelopes follow the time-averaged (Khasminskii) form: the norm is
taken of the *time average* of the coefficient mismatch, not of its pointwise
value.  The pointwise drift residual is also recorded so a report can show
that it does not decay for oscillating coefficients even when the averaged
form does.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .kernels import as_order, gamma_fn, mittag_leffler_terms
from .levy import JumpMeasureSpec, nu_integral, nu_integral_vector
from .solver import AveragedCoefficientSet, CoefficientSet

_CHUNK = 2.0 * math.pi  # oscillatory coefficients get one quadrature chunk per period


def _chunked_integral(fn, horizon: float, tol: float) -> float:
    """Integral of a scalar callable over [0, horizon], split into short chunks."""
    n_chunks = max(1, math.ceil(horizon / _CHUNK))
    edges = np.linspace(0.0, horizon, n_chunks + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += quad(fn, a, b, epsabs=tol, epsrel=tol, limit=200)[0]
    return total


def time_average(
    coefficient,
    state,
    horizon: float,
    quadrature_tol: float = 1e-12,
    with_diagnostic: bool = False,
):
    """Average of ``coefficient(t, state)`` over t in [0, horizon].

    The output shape matches whatever the coefficient returns: plain float for
    scalar evaluators, arrays of the same shape for vector- and matrix-valued
    ones.  With ``with_diagnostic`` the average is recomputed over twice the
    horizon and the relative drift between the two is returned alongside the
    value; a large drift means the average has not settled and is reported as
    a warning, never an error.
    """
    horizon = float(horizon)
    if horizon <= 0.0:
        raise ValueError(f"averaging horizon must be positive; got {horizon!r}")
    state = np.asarray(state, dtype=float)
    probe = np.asarray(coefficient(0.0, state), dtype=float)

    def averaged_over(span: float) -> np.ndarray:
        flat = np.empty(probe.size)
        for i in range(probe.size):
            flat[i] = _chunked_integral(
                lambda t, i=i: float(
                    np.asarray(coefficient(t, state), dtype=float).reshape(-1)[i]
                ),
                span,
                quadrature_tol,
            ) / span
        return flat.reshape(probe.shape)

    value = averaged_over(horizon)
    scalar = probe.ndim == 0
    if not with_diagnostic:
        return float(value) if scalar else value
    doubled = averaged_over(2.0 * horizon)
    scale = 1.0 + float(np.linalg.norm(value.reshape(-1)))
    drift = float(np.linalg.norm((doubled - value).reshape(-1))) / scale
    if drift > 1e-3:
        warnings.warn(
            f"time average has not settled: doubling the horizon moved it by "
            f"{drift:.3g} (relative)",
            stacklevel=2,
        )
    return (float(value) if scalar else value), drift


def averaged_jump_drift(
    spec: JumpMeasureSpec,
    jump,
    state,
    horizon: float,
    quadrature_tol: float = 1e-12,
) -> np.ndarray:
    """Time average of the jump coefficient's integral against the measure.

    This is the deterministic drift the jump term contributes when it
    integrates against the intensity measure itself; the mark integral runs
    over the full (0, cutoff) range.
    """
    state = np.asarray(state, dtype=float)
    probe = np.asarray(jump(0.0, state, spec.cutoff * 0.5), dtype=float).reshape(-1)

    def rate(t: float) -> np.ndarray:
        return nu_integral_vector(
            spec, lambda z: jump(t, state, z), dim=probe.size, use_delta=False
        )

    return time_average(lambda t, _x: rate(t), state, horizon, quadrature_tol)


def _total_drift_residual(coeffs, averaged, t1, x):
    """Norm of the time-averaged drift mismatch at one probe state."""
    avg_f = time_average(coeffs.drift, x, t1)
    target = np.asarray(averaged.drift(x), dtype=float)
    return float(np.linalg.norm((avg_f - target).reshape(-1)))


def _diffusion_square(diffusion, t, x, dim, brownian_dim):
    g = np.asarray(diffusion(t, x), dtype=float).reshape(dim, brownian_dim)
    return g @ g.T


@dataclass(frozen=True)
class ResidualEnvelope:
    """Sampled residual envelopes over a grid of averaging horizons."""

    t1_grid: list[float]
    alpha1: list[float]
    alpha2: list[float]
    alpha3: list[float]
    alpha1_pointwise: list[float]
    decay_flags: dict[str, str]

    def to_json_dict(self) -> dict:
        return {
            "t1_grid": self.t1_grid,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "alpha3": self.alpha3,
            "alpha1_pointwise": self.alpha1_pointwise,
            "decay_flags": self.decay_flags,
        }


def _decay_flag(values: list[float]) -> str:
    if len(values) < 2:
        return "insufficient_data"
    if max(values) == 0.0:
        return "all_zero"
    return "decays" if values[-1] < 0.5 * values[0] else "no_decay"


def h3_residuals(
    coeffs: CoefficientSet,
    averaged: AveragedCoefficientSet,
    t1_grid,
    probe_states,
    spec: JumpMeasureSpec | None = None,
) -> ResidualEnvelope:
    """Residual envelopes of the three coefficient slots over averaging horizons.

    For each horizon T1 the envelopes are suprema over the probe states of

        alpha1: |avg_t f - f_bar| / (1 + |x|)
        alpha2: ||avg_t G G' - G_bar G_bar'|| / (1 + |x|^2)
        alpha3: jump-slot residual / (1 + |x|^2)

    where the jump slot compares either the measure-drift rates (when a
    closed-form rate is available on both sides) or the L2(measure) norm of
    the time-averaged jump-coefficient mismatch.  Suprema over a finite probe
    set are lower bounds of the true constants; the probe set is echoed in
    the enclosing report.
    """
    if not len(probe_states):
        raise ValueError("probe_states must be nonempty")
    probes = [np.atleast_1d(np.asarray(x, dtype=float)) for x in probe_states]
    t1_grid = [float(t) for t in t1_grid]

    alpha1, alpha2, alpha3, alpha1_pw = [], [], [], []
    for t1 in t1_grid:
        a1 = a2 = a3 = pw = 0.0
        for x in probes:
            nx = float(np.linalg.norm(x))
            a1 = max(a1, _total_drift_residual(coeffs, averaged, t1, x) / (1.0 + nx))
            pointwise = np.linalg.norm(
                np.asarray(coeffs.drift(t1, x), dtype=float).reshape(-1)
                - np.asarray(averaged.drift(x), dtype=float).reshape(-1)
            )
            pw = max(pw, float(pointwise) / (1.0 + nx))

            avg_a = time_average(
                lambda t, y: _diffusion_square(
                    coeffs.diffusion, t, y, coeffs.dim, coeffs.brownian_dim
                ),
                x,
                t1,
            )
            target_a = _diffusion_square(
                lambda t, y: averaged.diffusion(y), 0.0, x, averaged.dim, averaged.brownian_dim
            )
            a2 = max(a2, float(np.linalg.norm(avg_a - target_a, 2)) / (1.0 + nx**2))

            a3 = max(a3, _jump_slot_residual(coeffs, averaged, spec, t1, x) / (1.0 + nx**2))
        alpha1.append(a1)
        alpha2.append(a2)
        alpha3.append(a3)
        alpha1_pw.append(pw)

    return ResidualEnvelope(
        t1_grid=t1_grid,
        alpha1=alpha1,
        alpha2=alpha2,
        alpha3=alpha3,
        alpha1_pointwise=alpha1_pw,
        decay_flags={
            "alpha1": _decay_flag(alpha1),
            "alpha2": _decay_flag(alpha2),
            "alpha3": _decay_flag(alpha3),
        },
    )


def _jump_slot_residual(coeffs, averaged, spec, t1, x) -> float:
    if coeffs.jump is None and coeffs.jump_drift is None:
        return 0.0
    if coeffs.jump_drift is not None and averaged.jump_drift is not None:
        avg_rate = time_average(coeffs.jump_drift, x, t1)
        target = np.asarray(averaged.jump_drift(x), dtype=float)
        return float(np.linalg.norm((avg_rate - target).reshape(-1)))
    if spec is None:
        raise ValueError(
            "jump-slot residual needs a JumpMeasureSpec when no closed-form "
            "rates are available"
        )
    # L2(measure) norm of the time-averaged jump-coefficient mismatch
    def avg_mismatch(z: float) -> np.ndarray:
        def diff(t, y):
            orig = np.asarray(coeffs.jump(t, y, z), dtype=float).reshape(-1)
            if averaged.jump is not None:
                orig = orig - np.asarray(averaged.jump(y, z), dtype=float).reshape(-1)
            return orig

        return time_average(diff, x, t1, quadrature_tol=1e-10)

    return nu_integral(
        spec,
        lambda z: float(np.sum(avg_mismatch(z) ** 2)),
        use_delta=False,
        rtol=1e-8,
    )


def default_probe_states(dim: int) -> list[np.ndarray]:
    """Signed log-spaced magnitudes along each coordinate direction."""
    probes = []
    for i in range(dim):
        for mag in (1e-2, 1e-1, 1.0, 1e1, 1e2):
            for sign in (1.0, -1.0):
                x = np.zeros(dim)
                x[i] = sign * mag
                probes.append(x)
    return probes


@dataclass(frozen=True)
class HypothesisReport:
    """Numerical evidence for the Lipschitz, growth, and averaging hypotheses.

    All estimates are suprema over finite probe sets, hence lower bounds of
    the true constants; the probe sets are echoed so a report is reproducible.
    """

    lipschitz_estimate: float
    growth_estimate: float
    envelope: ResidualEnvelope
    probe_states: list[list[float]]
    times: list[float]
    spec_params: dict | None = None

    def to_json_dict(self) -> dict:
        return {
            "lipschitz_estimate": self.lipschitz_estimate,
            "growth_estimate": self.growth_estimate,
            "envelope": self.envelope.to_json_dict(),
            "probe_states": self.probe_states,
            "times": self.times,
            "spec_params": self.spec_params,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def probe_hypotheses(
    coeffs: CoefficientSet,
    averaged: AveragedCoefficientSet,
    spec: JumpMeasureSpec | None = None,
    t1_grid=(10.0, 100.0, 1000.0),
    probe_states=None,
    times=None,
) -> HypothesisReport:
    """Estimate the Lipschitz/growth constants and the residual envelopes.

    The Lipschitz probe takes, over all probe pairs and times, the largest of
    the squared drift increment, the second-difference of the diffusion
    square, and the squared-mismatch measure integral of the jump
    coefficient, each divided by the squared state distance; the growth probe
    is the analogous supremum against 1 + |x|^2.
    """
    if probe_states is None:
        probe_states = default_probe_states(coeffs.dim)
    probes = [np.atleast_1d(np.asarray(x, dtype=float)) for x in probe_states]
    if times is None:
        times = np.linspace(0.0, 10.0, 41)
    times = [float(t) for t in times]

    c1 = 0.0
    c2 = 0.0
    for t in times:
        for i, x1 in enumerate(probes):
            f1 = np.asarray(coeffs.drift(t, x1), dtype=float).reshape(-1)
            a11 = _diffusion_square(coeffs.diffusion, t, x1, coeffs.dim, coeffs.brownian_dim)
            growth_terms = [float(np.sum(f1**2)), float(np.linalg.norm(a11, 2))]
            if coeffs.jump is not None and spec is not None:
                growth_terms.append(
                    nu_integral(
                        spec,
                        lambda z: float(
                            np.sum(np.asarray(coeffs.jump(t, x1, z), dtype=float) ** 2)
                        ),
                        use_delta=False,
                        rtol=1e-8,
                    )
                )
            c2 = max(c2, max(growth_terms) / (1.0 + float(np.sum(x1**2))))

            for x2 in probes[i + 1 :]:
                dist_sq = float(np.sum((x1 - x2) ** 2))
                if dist_sq == 0.0:
                    continue
                f2 = np.asarray(coeffs.drift(t, x2), dtype=float).reshape(-1)
                a22 = _diffusion_square(coeffs.diffusion, t, x2, coeffs.dim, coeffs.brownian_dim)
                g1 = np.asarray(coeffs.diffusion(t, x1), dtype=float).reshape(
                    coeffs.dim, coeffs.brownian_dim
                )
                g2 = np.asarray(coeffs.diffusion(t, x2), dtype=float).reshape(
                    coeffs.dim, coeffs.brownian_dim
                )
                a12 = g1 @ g2.T
                lip_terms = [
                    float(np.sum((f1 - f2) ** 2)),
                    float(np.linalg.norm(a11 - a12 - a12.T + a22, 2)),
                ]
                if coeffs.jump is not None and spec is not None:
                    lip_terms.append(
                        nu_integral(
                            spec,
                            lambda z: float(
                                np.sum(
                                    (
                                        np.asarray(coeffs.jump(t, x1, z), dtype=float)
                                        - np.asarray(coeffs.jump(t, x2, z), dtype=float)
                                    )
                                    ** 2
                                )
                            ),
                            use_delta=False,
                            rtol=1e-8,
                        )
                    )
                c1 = max(c1, max(lip_terms) / dist_sq)

    envelope = h3_residuals(coeffs, averaged, t1_grid, probes, spec=spec)
    return HypothesisReport(
        lipschitz_estimate=c1,
        growth_estimate=c2,
        envelope=envelope,
        probe_states=[list(map(float, x)) for x in probes],
        times=times,
        spec_params=(
            {
                "gamma": spec.gamma,
                "alpha": spec.alpha,
                "cutoff": spec.cutoff,
                "delta": spec.delta,
            }
            if spec is not None
            else None
        ),
    )


@dataclass(frozen=True)
class BoundReport:
    """Evaluated mean-square closeness bound over a grid of small parameters.

    The six K constants feed a Mittag-Leffler style series whose prefactor
    carries the residual envelopes; the reported bound at each epsilon is
    the series value times epsilon^(1 - lambda).
    """

    k11: float
    k12: float
    k21: float
    k22: float
    k31: float
    k32: float
    lam: float
    big_l: float
    z_moment: float
    beta: float
    epsilons: list[float]
    bounds: list[float]
    series_terms: list[int]
    inputs: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "k_constants": {
                "k11": self.k11,
                "k12": self.k12,
                "k21": self.k21,
                "k22": self.k22,
                "k31": self.k31,
                "k32": self.k32,
            },
            "lambda": self.lam,
            "L": self.big_l,
            "z_moment": self.z_moment,
            "beta": self.beta,
            "epsilons": self.epsilons,
            "bounds": self.bounds,
            "series_terms": self.series_terms,
            "inputs": self.inputs,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def theorem_bound(
    c1: float,
    alpha_sups,
    z_moment: float,
    beta,
    epsilon,
    lam: float = 0.5,
    big_l: float = 1.0,
    series_tol: float = 1e-14,
) -> BoundReport:
    """Evaluate the closeness bound C * epsilon^(1 - lambda) per epsilon.

    ``alpha_sups`` are the suprema of the three residual envelopes over the
    working horizon; ``z_moment`` estimates 1 + E sup |Z|^2 (>= 1).  The
    drift envelope enters squared, the other two linearly, matching the
    constants of the underlying estimate exactly.
    """
    order = as_order(beta)
    b = order.beta
    c1 = float(c1)
    a1, a2, a3 = (float(a) for a in alpha_sups)
    if min(a1, a2, a3) < 0.0 or c1 < 0.0:
        raise ValueError("constants and residual suprema must be nonnegative")
    z_moment = float(z_moment)
    if z_moment < 1.0:
        raise ValueError(f"z_moment estimates 1 + E sup|Z|^2 and must be >= 1; got {z_moment!r}")
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1); got {lam!r}")
    big_l = float(big_l)
    if big_l <= 0.0:
        raise ValueError(f"L must be positive; got {big_l!r}")
    epsilons = [float(e) for e in (np.atleast_1d(epsilon).tolist())]
    if any(e <= 0.0 for e in epsilons):
        raise ValueError("every epsilon must be positive")

    gb = gamma_fn(b)
    k11 = k21 = k31 = 6.0 * c1**2 / gb**2
    k12 = 12.0 / (b**2 * gb**2) * a1**2 * z_moment
    k22 = 6.0 / ((2.0 * b - 1.0) * gb**2) * a2 * z_moment
    k32 = 6.0 / ((2.0 * b - 1.0) * gb**2) * a3 * z_moment

    bounds = []
    terms = []
    for eps in epsilons:
        prefactor = (
            k12 * big_l ** (2.0 * b) * eps ** (1.0 + lam - 2.0 * b * lam)
            + (k22 + k32) * big_l ** (2.0 * b - 1.0) * eps ** (2.0 * lam * (1.0 - b))
        )
        if prefactor == 0.0:
            bounds.append(0.0)
            terms.append(0)
            continue
        base = (
            k11 * big_l ** (1.0 + b) * eps ** (2.0 - lam - b * lam)
            + (k21 + k31) * big_l**b * eps ** (1.0 - b * lam)
        ) * gb
        series, n_terms = mittag_leffler_terms(b, base, tol=series_tol)
        bounds.append(prefactor * series * eps ** (1.0 - lam))
        terms.append(n_terms)

    return BoundReport(
        k11=k11, k12=k12, k21=k21, k22=k22, k31=k31, k32=k32,
        lam=lam, big_l=big_l, z_moment=z_moment, beta=b,
        epsilons=epsilons, bounds=bounds, series_terms=terms,
        inputs={"c1": c1, "alpha_sups": [a1, a2, a3]},
    )
