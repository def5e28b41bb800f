import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracavg.averaging import (
    averaged_jump_drift,
    h3_residuals,
    probe_hypotheses,
    theorem_bound,
    time_average,
)
from fracavg.errors import ConvergenceError
from fracavg.levy import JumpMeasureSpec, nu_integral
from fracavg.problems import build_eq10
from fracavg.solver import AveragedCoefficientSet, CoefficientSet, JumpMode

# closed forms of the worked example; high-precision oracle values
JC_CASE_A = 0.062389075000586974       # 3 * 0.5^3.7 / 3.7
GAMMA1_CASE_A = 1.9729157811292571     # JC / sqrt(1e-3)
BOUND_FIXED_TUPLE = 0.020883514430112031


class TestTimeAverage:
    def test_oscillating_drift_full_periods(self):
        value = time_average(lambda t, x: 2.0 * x * math.cos(t) ** 2, np.array([1.0]), 100 * math.pi)
        assert value[0] == pytest.approx(1.0, abs=1e-10)

    def test_time_independent_is_identity(self):
        value = time_average(lambda t, x: 3.0 * x + 1.0, np.array([2.0]), 7.3)
        assert value[0] == pytest.approx(7.0, rel=1e-12)

    def test_sine_over_whole_periods_vanishes(self):
        value = time_average(lambda t, x: math.sin(t), np.array([0.0]), 6 * math.pi)
        assert isinstance(value, float)
        assert abs(value) < 1e-11

    def test_matrix_valued_coefficient(self):
        value = time_average(
            lambda t, x: np.array([[1.0 + math.sin(t), 0.0], [0.0, 2.0]]),
            np.zeros(2),
            2 * math.pi,
        )
        assert value.shape == (2, 2)
        assert value[0, 0] == pytest.approx(1.0, abs=1e-11)
        assert value[1, 1] == pytest.approx(2.0, rel=1e-12)

    @given(st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a, b):
        f1 = lambda t, x: math.cos(t) ** 2
        f2 = lambda t, x: math.sin(t) + 1.0
        combo = time_average(lambda t, x: a * f1(t, x) + b * f2(t, x), np.array([0.0]), 5.0)
        parts = a * time_average(f1, np.array([0.0]), 5.0) + b * time_average(
            f2, np.array([0.0]), 5.0
        )
        assert combo == pytest.approx(parts, abs=1e-10)

    def test_diagnostic_settled(self):
        value, drift = time_average(
            lambda t, x: 2.0 * math.cos(t) ** 2, np.array([0.0]), 200 * math.pi, with_diagnostic=True
        )
        assert value == pytest.approx(1.0, abs=1e-10)
        assert drift < 1e-8

    def test_diagnostic_warns_when_unsettled(self):
        with pytest.warns(UserWarning):
            value, drift = time_average(
                lambda t, x: t, np.array([0.0]), 4.0, with_diagnostic=True
            )
        assert drift > 0.5

    def test_rejects_nonpositive_horizon(self):
        with pytest.raises(ValueError):
            time_average(lambda t, x: 1.0, np.array([0.0]), 0.0)


class TestAveragedJumpDrift:
    SPEC = JumpMeasureSpec(gamma=3.0, alpha=0.3, cutoff=0.5)

    def test_worked_example_scale(self):
        jump = lambda t, x, z: 2.0 * z**4 * math.sin(t) ** 2 * x
        value = averaged_jump_drift(self.SPEC, jump, np.array([1.0]), 10 * math.pi)
        assert value[0] == pytest.approx(JC_CASE_A, rel=1e-9)
        gamma1 = value[0] / math.sqrt(1e-3)
        assert gamma1 == pytest.approx(GAMMA1_CASE_A, rel=1e-9)

    def test_zero_jump(self):
        value = averaged_jump_drift(self.SPEC, lambda t, x, z: 0.0, np.array([1.0]), 5.0)
        assert value[0] == 0.0

    def test_time_independent_reduces_to_measure_integral(self):
        jump = lambda t, x, z: np.array([z**2])
        value = averaged_jump_drift(self.SPEC, jump, np.array([0.0]), 3.7)
        direct = nu_integral(self.SPEC, lambda z: z**2, use_delta=False)
        assert value[0] == pytest.approx(direct, rel=1e-10)


class EnvelopeFixtures:
    @staticmethod
    def oscillating_pair():
        coeffs = CoefficientSet.scalar(
            drift=lambda t, x: 2.0 * x * math.cos(t) ** 2,
            diffusion=lambda t, x: 1.0,
        )
        averaged = AveragedCoefficientSet.scalar(
            drift=lambda x: x,
            diffusion=lambda x: 1.0,
        )
        return coeffs, averaged


class TestH3Residuals:
    def test_already_averaged_all_zero(self):
        coeffs = CoefficientSet.scalar(drift=lambda t, x: 0.5 * x, diffusion=lambda t, x: 1.0)
        averaged = AveragedCoefficientSet.scalar(drift=lambda x: 0.5 * x, diffusion=lambda x: 1.0)
        env = h3_residuals(coeffs, averaged, [5.0, 50.0], [np.array([1.0]), np.array([-2.0])])
        assert max(env.alpha1) < 1e-12
        assert max(env.alpha2) < 1e-12
        assert env.alpha3 == [0.0, 0.0]
        assert env.decay_flags["alpha1"] == "all_zero"

    def test_oscillating_drift_decays_like_inverse_horizon(self):
        coeffs, averaged = EnvelopeFixtures.oscillating_pair()
        grid = [10.0, 100.0, 1000.0]
        env = h3_residuals(coeffs, averaged, grid, [np.array([1.0]), np.array([10.0])])
        # |avg of x cos(2s)| = |x sin(2 T1)| / (2 T1) <= 1/(2 T1) after weighting
        for t1, a1 in zip(grid, env.alpha1):
            assert a1 <= 1.0 / (2.0 * t1) + 1e-9
        assert env.decay_flags["alpha1"] == "decays"
        # the pointwise residual does not decay: it oscillates at O(1)
        assert max(env.alpha1_pointwise) > 0.3

    def test_diffusion_square_residual_bound(self):
        coeffs = CoefficientSet.scalar(
            drift=lambda t, x: 0.0,
            diffusion=lambda t, x: math.sqrt(1.0 + math.sin(t)),
        )
        averaged = AveragedCoefficientSet.scalar(drift=lambda x: 0.0, diffusion=lambda x: 1.0)
        grid = [10.0, 100.0]
        env = h3_residuals(coeffs, averaged, grid, [np.array([0.0])])
        for t1, a2 in zip(grid, env.alpha2):
            expected = (1.0 - math.cos(t1)) / t1
            assert a2 == pytest.approx(expected, abs=1e-9)
            assert a2 <= 2.0 / t1 + 1e-9

    def test_jump_slot_closed_form_rates(self):
        problem = build_eq10(beta=0.6, alpha=0.3, gamma=3.0, cutoff=0.5, epsilon=1e-3)
        grid = [10.0, 100.0]
        env = h3_residuals(
            problem.coeffs, problem.averaged, grid, [np.array([1.0])], spec=problem.spec
        )
        # rate mismatch is JC * x * (2 sin^2 - 1); its average decays like 1/T1
        for t1, a3 in zip(grid, env.alpha3):
            assert a3 <= JC_CASE_A / (2.0 * t1) / 2.0 + 1e-9
        assert env.decay_flags["alpha3"] == "decays"

    def test_jump_slot_l2_fallback(self):
        spec = JumpMeasureSpec(gamma=1.0, alpha=0.5, cutoff=0.5)
        coeffs = CoefficientSet.scalar(
            drift=lambda t, x: 0.0,
            diffusion=lambda t, x: 0.0,
            jump=lambda t, x, z: 2.0 * z**4 * math.sin(t) ** 2 * x,
            jump_mode=JumpMode.NU_DRIFT,
        )
        averaged = AveragedCoefficientSet.scalar(
            drift=lambda x: 0.0,
            diffusion=lambda x: 0.0,
            jump=lambda x, z: z**4 * x,
            jump_mode=JumpMode.NU_DRIFT,
        )
        t1 = 5.0
        env = h3_residuals(coeffs, averaged, [t1], [np.array([1.0])], spec=spec)
        moment8 = spec.gamma * spec.cutoff ** (8.0 - spec.alpha) / (8.0 - spec.alpha)
        expected = 0.5 * (math.sin(2 * t1) / (2 * t1)) ** 2 * moment8
        assert env.alpha3[0] == pytest.approx(expected, rel=1e-4)
        assert env.decay_flags["alpha3"] == "insufficient_data"

    def test_requires_probes(self):
        coeffs, averaged = EnvelopeFixtures.oscillating_pair()
        with pytest.raises(ValueError):
            h3_residuals(coeffs, averaged, [10.0], [])


class TestAveragedConstruction:
    def test_numeric_averaging_reproduces_published_coefficients(self):
        # building the averaged coefficients numerically (time averages plus
        # the measure-drift average) must reproduce the worked example's
        # published averaged system on a probe grid of states
        problem = build_eq10(beta=0.6, alpha=0.3, gamma=3.0, cutoff=0.5, epsilon=1e-3)
        horizon = 100.0 * math.pi
        for x in (0.01, 0.1, 1.0, 10.0):
            state = np.array([x])
            drift_num = time_average(problem.coeffs.drift, state, horizon)
            assert drift_num[0] == pytest.approx(problem.averaged.drift(state)[0], abs=1e-8)
            rate_num = averaged_jump_drift(problem.spec, problem.coeffs.jump, state, horizon)
            assert rate_num[0] == pytest.approx(
                problem.averaged.jump_drift(state)[0], abs=1e-8
            )
        # and the drift-folded coefficient matches 1 + gamma1 of the example
        gamma1 = problem.params["gamma1"]
        folded = problem.folded_averaged.drift(np.array([1.0]))[0]
        assert folded == pytest.approx(1.0 + gamma1, rel=1e-12)
        assert gamma1 == pytest.approx(GAMMA1_CASE_A, rel=1e-12)


class TestProbeHypotheses:
    def test_worked_example_constants(self):
        problem = build_eq10(beta=0.6, alpha=0.3, gamma=3.0, cutoff=0.5, epsilon=1e-3)
        report = probe_hypotheses(
            problem.coeffs,
            problem.averaged,
            spec=problem.spec,
            t1_grid=[10.0, 100.0],
            probe_states=[np.array([0.1]), np.array([1.0]), np.array([10.0])],
            times=np.linspace(0.0, 10.0, 11),
        )
        # drift Lipschitz quotient peaks at 4 cos^4(0) = 4
        assert report.lipschitz_estimate == pytest.approx(4.0, rel=1e-9)
        # growth quotient peaks at 4 x^2 / (1 + x^2) with x = 10
        assert report.growth_estimate == pytest.approx(400.0 / 101.0, rel=1e-6)
        assert report.envelope.decay_flags["alpha1"] == "decays"

    def test_json_round_trip(self, tmp_path):
        coeffs, averaged = EnvelopeFixtures.oscillating_pair()
        report = probe_hypotheses(
            coeffs,
            averaged,
            t1_grid=[5.0, 50.0],
            probe_states=[np.array([1.0])],
            times=[0.0, 1.0],
        )
        target = tmp_path / "hypothesis.json"
        report.save(target)
        data = json.loads(target.read_text())
        assert data["probe_states"] == [[1.0]]
        assert data["envelope"]["t1_grid"] == [5.0, 50.0]
        assert "alpha1_pointwise" in data["envelope"]


class TestTheoremBound:
    def test_zero_envelopes_zero_bound(self):
        report = theorem_bound(2.0, (0.0, 0.0, 0.0), 3.0, beta=0.8, epsilon=[1e-2, 1e-3, 1e-4])
        assert report.bounds == [0.0, 0.0, 0.0]
        assert report.series_terms == [0, 0, 0]

    def test_fixed_tuple_matches_oracle(self):
        report = theorem_bound(
            1.0, (0.1, 0.1, 0.1), 2.0, beta=0.75, epsilon=1e-3, lam=0.5, big_l=1.0
        )
        assert report.bounds[0] == pytest.approx(BOUND_FIXED_TUPLE, rel=1e-10)
        assert report.k11 == report.k21 == report.k31
        assert report.series_terms[0] > 2

    def test_monotone_decreasing_in_epsilon(self):
        report = theorem_bound(1.0, (0.1, 0.2, 0.3), 2.0, beta=0.75, epsilon=[1e-2, 1e-3, 1e-4])
        assert report.bounds[0] > report.bounds[1] > report.bounds[2] > 0.0

    @given(
        st.floats(min_value=0.0, max_value=2.0),
        st.floats(min_value=0.001, max_value=1.0),
        st.floats(min_value=1.0, max_value=5.0),
        st.floats(min_value=0.55, max_value=0.95),
        st.floats(min_value=0.1, max_value=0.9),
        st.floats(min_value=0.2, max_value=3.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_monotonicity_property(self, c1, a, zm, beta, lam, big_l):
        report = theorem_bound(
            c1, (a, a, a), zm, beta=beta, epsilon=[1e-2, 1e-3, 1e-4], lam=lam, big_l=big_l
        )
        assert report.bounds[0] >= report.bounds[1] >= report.bounds[2] >= 0.0

    def test_monotone_in_z_moment_and_constants(self):
        low = theorem_bound(1.0, (0.1, 0.1, 0.1), 1.5, beta=0.75, epsilon=1e-3)
        high = theorem_bound(1.0, (0.1, 0.1, 0.1), 3.0, beta=0.75, epsilon=1e-3)
        assert high.bounds[0] > low.bounds[0]
        bigger_alpha = theorem_bound(1.0, (0.2, 0.1, 0.1), 1.5, beta=0.75, epsilon=1e-3)
        assert bigger_alpha.bounds[0] > low.bounds[0]

    def test_series_cap_raises_for_absurd_constants(self):
        with pytest.raises(ConvergenceError):
            theorem_bound(
                50.0, (0.1, 0.1, 0.1), 2.0, beta=0.75, epsilon=0.9, lam=0.9, big_l=10.0
            )

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(lam=0.0),
            dict(lam=1.0),
            dict(big_l=0.0),
            dict(z_moment=0.5),
            dict(epsilon=0.0),
            dict(alpha_sups=(-0.1, 0.0, 0.0)),
        ],
    )
    def test_validation(self, kwargs):
        base = dict(
            c1=1.0, alpha_sups=(0.1, 0.1, 0.1), z_moment=2.0, beta=0.75, epsilon=1e-3
        )
        base.update(kwargs)
        with pytest.raises(ValueError):
            theorem_bound(**base)

    def test_json_round_trip(self, tmp_path):
        report = theorem_bound(1.0, (0.1, 0.1, 0.1), 2.0, beta=0.75, epsilon=[1e-2, 1e-4])
        target = tmp_path / "bound.json"
        report.save(target)
        data = json.loads(target.read_text())
        assert data["epsilons"] == [1e-2, 1e-4]
        assert data["k_constants"]["k12"] == pytest.approx(report.k12)
        assert data["inputs"]["alpha_sups"] == [0.1, 0.1, 0.1]
