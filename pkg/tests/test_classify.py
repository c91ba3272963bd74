import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracheat.kernel import FracParams, GridFunction
from fracheat.measures import InitialMeasure, SingularProfile
from fracheat.nonlinearity import Nonlinearity, ParameterError, fit_minorant
from fracheat.classify import (
    classify,
    dirac_solvable,
    necessary_check,
    necessary_envelope,
    profile_for_case,
    sufficient_check_A,
    sufficient_check_B,
    sufficient_check_C,
)

SIGMAS = [2.0**-k for k in range(3, 10)]


class TestClassify:
    def test_subcritical(self):
        label = classify(FracParams(1, 2.0), 2.0, 7.0)
        assert label.regime == "subcritical"
        assert "sup_z" in label.criterion

    def test_critical_log_exponents(self):
        label = classify(FracParams(2, 2.0), 2.0, 0.0)
        assert label.regime == "critical-log"
        assert "|x|^(-2)" in label.formula and "|log|x||^(-2)" in label.formula

    def test_supercritical_formula(self):
        label = classify(FracParams(1, 1.0), 3.0, 0.0)
        assert label.regime == "supercritical"
        assert label.formula == "|x|^(-1/2)"

    def test_critical_integrable(self):
        assert classify(FracParams(1, 2.0), 3.0, -2.0).regime == "critical-integrable"

    def test_critical_borderline(self):
        assert classify(FracParams(1, 2.0), 3.0, -1.0).regime == "critical-borderline"

    def test_out_of_scope(self):
        with pytest.raises(ParameterError):
            classify(FracParams(1, 2.0), 0.5, 0.0)

    @given(
        N=st.integers(1, 3),
        theta=st.sampled_from([0.5, 1.0, 1.5, 2.0]),
        dp=st.sampled_from([-0.5, 0.0, 0.7]),
        q=st.sampled_from([-2.0, -1.0, 0.0, 1.0]),
    )
    def test_total_function_of_sign_and_q(self, N, theta, dp, q):
        params = FracParams(N, theta)
        p = params.p_theta + dp
        if p <= 1.0:
            return
        label = classify(params, p, q)
        if dp < 0:
            assert label.regime == "subcritical"
        elif dp == 0:
            expected = (
                "critical-integrable"
                if q < -1
                else ("critical-borderline" if q == -1 else "critical-log")
            )
            assert label.regime == expected
        else:
            assert label.regime == "supercritical"


class TestNecessaryCheck:
    def test_zero_mass_trivially_satisfied(self, p_1_2):
        f = fit_minorant(Nonlinearity(p=5.0, q=0.0))
        mu = InitialMeasure.constant(0.0)
        rep = necessary_check(mu, f, p_1_2, T=1.0, gamma=1.0, samples=[(0.0, 0.1)])
        assert rep.satisfied
        assert rep.worst_ratio == 0.0

    def test_large_profile_violates(self, p_1_2):
        f = fit_minorant(Nonlinearity(p=5.0, q=0.0))
        prof = SingularProfile(
            "supercritical", p_1_2, p=5.0, q=0.0, coefficient=50.0, cutoff=0.25
        )
        mu = InitialMeasure(profile=prof)
        rep = necessary_check(
            mu, f, p_1_2, T=1.0, gamma=1.0, samples=[(0.0, s) for s in SIGMAS]
        )
        assert not rep.satisfied
        assert rep.worst_ratio > 1.0
        assert rep.witness is not None

    def test_pure_power_closed_form(self, p_1_2):
        # f = s^p above R has a closed-form tail integral; cross-check the
        # quadrature inside the report to 1e-8
        p, R = 5.0, 2.0
        f = lambda s: np.where(np.asarray(s) > R, np.asarray(s, dtype=float) ** p, 0.0)
        mu = InitialMeasure.dirac(mass=3.0)
        sigma, T, gamma = 0.125, 1.0, 1.0
        rep = necessary_check(mu, f, p_1_2, T=T, gamma=gamma, samples=[(0.0, sigma)])
        m = 3.0
        lo, hi = max(m / T ** 0.5, R), m * sigma**-1.0
        pt = p_1_2.p_theta
        closed = (hi ** (p - pt) - lo ** (p - pt)) / (p - pt)
        got = rep.rows[0][1]
        assert got == pytest.approx(closed, rel=1e-8)

    def test_gamma_below_one_rejected(self, p_1_2):
        f = fit_minorant(Nonlinearity(p=5.0, q=0.0))
        with pytest.raises(ParameterError):
            necessary_check(InitialMeasure.dirac(), f, p_1_2, 1.0, 0.5, [(0.0, 0.1)])


class TestNecessaryEnvelope:
    def test_dirac_inadmissible_supercritical(self, p_1_2):
        rep = necessary_envelope(InitialMeasure.dirac(), p_1_2, 5.0, 0.0, SIGMAS, 0.5)
        assert not rep.satisfied
        quot = [r[3] for r in rep.rows]
        assert quot[-1] > quot[0]

    def test_bounded_density_admissible(self, p_1_2):
        g = GridFunction.zeros(1, 2.0, 128)
        g.values[:] = 1.0
        rep = necessary_envelope(
            InitialMeasure.from_density(g), p_1_2, 2.0, 0.0, SIGMAS, 0.5
        )
        assert rep.satisfied
        quot = [r[3] for r in rep.rows]
        assert quot[-1] < 0.1 * quot[0]

    def test_profile_saturates_envelope_order(self, p_1_2):
        # the optimal profile keeps a constant quotient: boundedness holds at
        # its own fitted constant, and scaling the coefficient scales it
        prof = SingularProfile(
            "supercritical", p_1_2, p=5.0, q=0.0, coefficient=0.1, cutoff=0.25
        )
        mu = InitialMeasure(profile=prof)
        rep = necessary_envelope(mu, p_1_2, 5.0, 0.0, SIGMAS, 0.4)
        quot = np.array([r[3] for r in rep.rows])
        assert rep.satisfied
        assert quot.max() / quot.min() < 1.05
        rep10 = necessary_envelope(mu.scaled(10.0), p_1_2, 5.0, 0.0, SIGMAS, 0.4)
        assert rep10.constant == pytest.approx(10.0 * rep.constant, rel=1e-9)


class TestSufficientChecks:
    def test_A_dirac(self):
        rep = sufficient_check_A(InitialMeasure.dirac(), 0.5)
        assert rep.satisfied
        assert rep.constant == 1.0

    def test_A_uniform(self):
        rep = sufficient_check_A(InitialMeasure.constant(1.5), 0.25)
        assert rep.constant == pytest.approx(1.5 * 2.0, rel=1e-12)

    def test_A_profile_plus_background(self, p_1_2):
        prof = SingularProfile(
            "supercritical", p_1_2, p=5.0, q=0.0, coefficient=1.0, cutoff=0.25,
            background=0.5,
        )
        rep = sufficient_check_A(InitialMeasure(profile=prof, background=0.5), 0.5)
        assert rep.satisfied and math.isfinite(rep.constant)

    def test_B_zero_measure(self, p_1_2):
        rep = sufficient_check_B(
            InitialMeasure.constant(0.0), p_1_2, 0.0, 0.25, 1.0, [0.125], 0.3
        )
        assert rep.satisfied and rep.worst_ratio == 0.0

    def test_B_small_profile_threshold(self, p_1_2):
        prof = SingularProfile(
            "critical-log", p_1_2, p=3.0, q=0.0, coefficient=0.01, cutoff=0.25
        )
        mu = InitialMeasure(profile=prof)
        rep = sufficient_check_B(mu, p_1_2, 0.0, 0.25, 1.0, SIGMAS[:4], 0.4)
        calibrated = 2.0 * rep.worst_ratio
        rep_small = sufficient_check_B(
            mu, p_1_2, 0.0, 0.25, calibrated, SIGMAS[:4], 0.4
        )
        assert rep_small.satisfied
        rep_big = sufficient_check_B(
            mu.scaled(10.0), p_1_2, 0.0, 0.25, calibrated, SIGMAS[:4], 0.4
        )
        assert not rep_big.satisfied

    def test_B_atom_fails(self, p_1_2):
        rep = sufficient_check_B(
            InitialMeasure.dirac(), p_1_2, 0.0, 0.25, 1.0, [0.125], 0.3
        )
        assert not rep.satisfied
        assert rep.worst_ratio == math.inf

    def test_C_constant_satisfied(self, p_1_2):
        rep = sufficient_check_C(
            InitialMeasure.constant(2.0), p_1_2, 5.0, 0.0, 1.5, 1.0, SIGMAS, 0.3
        )
        assert rep.satisfied
        ratios = [r[3] for r in rep.rows]
        assert ratios[-1] < ratios[0]

    def test_C_small_profile_threshold(self, p_1_2):
        prof = SingularProfile(
            "supercritical", p_1_2, p=5.0, q=0.0, coefficient=0.01, cutoff=0.25
        )
        mu = InitialMeasure(profile=prof)
        rep = sufficient_check_C(mu, p_1_2, 5.0, 0.0, 1.5, 1.0, SIGMAS[:4], 0.4)
        calibrated = 2.0 * rep.worst_ratio
        assert sufficient_check_C(
            mu, p_1_2, 5.0, 0.0, 1.5, calibrated, SIGMAS[:4], 0.4
        ).satisfied
        assert not sufficient_check_C(
            mu.scaled(10.0), p_1_2, 5.0, 0.0, 1.5, calibrated, SIGMAS[:4], 0.4
        ).satisfied

    def test_C_inadmissible_alpha(self, p_1_2):
        with pytest.raises(ParameterError) as err:
            sufficient_check_C(
                InitialMeasure.constant(1.0), p_1_2, 5.0, 0.0, 3.0, 1.0, [0.1], 0.3
            )
        assert "alpha" in str(err.value)


class TestDiracSolvable:
    @pytest.mark.parametrize(
        "p,q,expected",
        [(2.0, 0.0, True), (3.0, 0.0, False), (3.0, -2.0, True)],
    )
    def test_verdicts(self, p, q, expected, p_1_2):
        solvable, crit = dirac_solvable(Nonlinearity(p=p, q=q, L=math.e), p_1_2)
        assert solvable is expected

    def test_agrees_with_classify_boundary(self, p_1_2):
        # solvable Dirac data exactly in the subcritical/integrable regimes
        for p, q in [(2.0, 3.0), (3.0, -1.5), (3.0, 0.0), (4.0, -5.0)]:
            label = classify(p_1_2, p, q)
            solvable, _ = dirac_solvable(Nonlinearity(p=p, q=q, L=math.e), p_1_2)
            assert solvable == (
                label.regime in ("subcritical", "critical-integrable")
            )
