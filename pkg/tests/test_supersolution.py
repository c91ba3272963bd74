import math

import numpy as np
import pytest

from fracheat.kernel import FracParams, GridFunction, apply_semigroup, build_profile
from fracheat.measures import InitialMeasure, SingularProfile
from fracheat.nonlinearity import Nonlinearity
from fracheat.solver import SolverConfig, solve
from fracheat.supersolution import (
    ConstructionError,
    Supersolution,
    build_supersolution,
    domination_check,
    mollify_measure,
    verify_supersolution,
)


@pytest.fixture(scope="module")
def dirac_smooth(p_1_2):
    return mollify_measure(InitialMeasure.dirac(mass=0.05), 0.125, 6.0, 512, p_1_2)


@pytest.fixture(scope="module")
def F2():
    return Nonlinearity(p=2.0, q=0.0)


class TestFamilyA:
    def test_dirac_composition(self, p_1_2, F2):
        # with atomic data the evaluator composes kernel evaluation directly
        mu = InitialMeasure.dirac(mass=1.0)
        w = build_supersolution("A", mu, F2, p_1_2, 4.0, 256, R=1.5)
        prof = build_profile(p_1_2)
        t = 0.2
        wt = w.evaluate(t)
        i0 = np.argmin(np.abs(wt.axis()))
        x0 = float(wt.axis()[i0])
        expected = 1.5 + 2.0 * prof.value(x0, t)
        assert wt.values[i0] + wt.background == pytest.approx(expected, rel=1e-12)

    def test_verification_passes(self, p_1_2, F2, dirac_smooth):
        w = build_supersolution("A", dirac_smooth, F2, p_1_2, 6.0, 512, R=1.0)
        rep = verify_supersolution(w, dirac_smooth, F2, p_1_2, T=0.05, steps=64)
        assert rep.passed
        assert rep.max_violation < 0.0  # strict margin, not merely tolerated

    def test_violation_monotone_in_time(self, p_1_2, F2, dirac_smooth):
        w = build_supersolution("A", dirac_smooth, F2, p_1_2, 6.0, 512, R=1.0)
        rep = verify_supersolution(w, dirac_smooth, F2, p_1_2, T=0.05, steps=32)
        violations = [v for _, v, _, _ in rep.rows]
        assert violations == sorted(violations)

    def test_semigroup_coherence(self, p_1_2, F2, dirac_smooth):
        # S(t-s) w(s) = w(t) for family A, up to discretization
        prof = build_profile(p_1_2)
        w = build_supersolution("A", dirac_smooth, F2, p_1_2, 6.0, 512, R=1.0)
        s, t = 0.01, 0.04
        ws = w.evaluate(s)
        propagated = apply_semigroup(
            InitialMeasure(density=ws.like(ws.values), background=ws.background),
            t - s,
            GridFunction.zeros(1, 6.0, 512),
            prof,
        )
        wt = w.evaluate(t)
        inner = np.abs(wt.axis()) < 3.0
        diff = np.abs(
            (propagated.values + propagated.background)
            - (wt.values + wt.background)
        )
        assert np.max(diff[inner]) < 1e-6

    def test_integrable_tail_required(self, p_1_2, dirac_smooth):
        with pytest.raises(ConstructionError) as err:
            build_supersolution(
                "A", dirac_smooth, Nonlinearity(p=7.0, q=0.0), p_1_2, 6.0, 512
            )
        assert err.value.condition == "A2"

    def test_zero_nonlinearity_margin(self, p_1_2, dirac_smooth):
        # F == 0 with R = 0: RHS = S(t)mu <= 2 S(t)mu = w
        w = Supersolution(
            "A", dirac_smooth, None, p_1_2, 6.0, 512, R=0.0
        )
        zero = lambda tau: np.zeros_like(np.asarray(tau, dtype=float))
        rep = verify_supersolution(w, dirac_smooth, zero, p_1_2, T=0.05, steps=16)
        assert rep.max_violation <= 1e-12

    def test_domination_against_solve(self, p_1_2, F2):
        mu_raw = InitialMeasure.dirac(mass=0.05)
        cfg = SolverConfig(halfwidth=6.0, points=512, T=0.05, M=64, mollify_n=16)
        out = solve(mu_raw, F2, cfg, p_1_2)
        assert out.converged
        w = build_supersolution("A", mu_raw, F2, p_1_2, 6.0, 512, R=1.0)
        worst, slack, rows = domination_check(out, w, mollify_lag=cfg.mollify_lag)
        assert worst <= slack

    def test_domination_needs_convergence(self, p_1_2, F2):
        prof = SingularProfile(
            "supercritical", p_1_2, p=5.0, q=0.0, coefficient=5.0, cutoff=0.9
        )
        mu = InitialMeasure.from_profile(prof, 4.0, 256)
        F5 = Nonlinearity(p=5.0, q=0.0)
        cfg = SolverConfig(halfwidth=4.0, points=256, T=0.1, M=64, mollify_n=64)
        out = solve(mu, F5, cfg, p_1_2)
        assert out.verdict == "diverged"
        w = build_supersolution("A", mu, F2, p_1_2, 4.0, 256, R=1.0)
        with pytest.raises(ValueError):
            domination_check(out, w, mollify_lag=cfg.mollify_lag)


class TestFamilyB:
    @pytest.fixture(scope="class")
    def setup_q0(self, p_1_2):
        prof = SingularProfile(
            "critical-log", p_1_2, p=3.0, q=0.0, coefficient=0.005, cutoff=0.25,
            background=0.01,
        )
        mu = InitialMeasure.from_profile(prof, 4.0, 1024)
        F = Nonlinearity(p=3.0, q=0.0)
        return mu, F

    def test_verification_q0(self, p_1_2, setup_q0):
        mu, F = setup_q0
        w = build_supersolution("B", mu, F, p_1_2, 4.0, 1024, alpha=2.0, L=2.0)
        rep = verify_supersolution(w, mu, F, p_1_2, T=0.01, steps=64)
        assert rep.passed

    def test_jensen_ordering(self, p_1_2, setup_q0):
        mu, F = setup_q0
        w = build_supersolution("B", mu, F, p_1_2, 4.0, 1024, alpha=2.0, L=2.0)
        prof = build_profile(p_1_2)
        st_mu = apply_semigroup(mu, 0.005, GridFunction.zeros(1, 4.0, 1024), prof)
        wt = w.evaluate(0.005)
        margin = (wt.values + wt.background) - 2.0 * (st_mu.values + st_mu.background)
        assert np.min(margin) >= -1e-9

    def test_phi_round_trip_at_zero(self, p_1_2, setup_q0):
        # w(0) = 2 (mu + L) through the inverse pair, on the monotone range
        mu, F = setup_q0
        w = build_supersolution("B", mu, F, p_1_2, 4.0, 1024, alpha=2.0, L=2.0)
        w0 = w.evaluate(0.0)
        vals = (mu.density.values if mu.density is not None else 0.0) + mu.background
        expected = 2.0 * (vals + w.L)
        got = w0.values + w0.background
        assert np.max(np.abs(got - expected) / expected) < 1e-10

    def test_wrong_exponent_rejected(self, p_1_2, setup_q0):
        mu, _ = setup_q0
        with pytest.raises(ConstructionError) as err:
            build_supersolution(
                "B", mu, Nonlinearity(p=2.0, q=0.0), p_1_2, 4.0, 1024, alpha=2.0
            )
        assert err.value.condition == "B1"

    def test_atoms_rejected(self, p_1_2):
        with pytest.raises(ConstructionError):
            build_supersolution(
                "B", InitialMeasure.dirac(), Nonlinearity(p=3.0, q=0.0), p_1_2,
                4.0, 256, alpha=2.0,
            )

    def test_verification_qm1(self, p_1_2):
        prof = SingularProfile(
            "critical-borderline", p_1_2, p=3.0, q=-1.0, coefficient=0.005,
            cutoff=0.25, background=0.01,
        )
        mu = InitialMeasure.from_profile(prof, 4.0, 1024)
        F = Nonlinearity(p=3.0, q=-1.0, L=math.e)
        w = build_supersolution("B", mu, F, p_1_2, 4.0, 1024, alpha=2.0, L=2.0)
        rep = verify_supersolution(w, mu, F, p_1_2, T=0.01, steps=64)
        assert rep.passed


class TestFamilyC:
    @pytest.fixture(scope="class")
    def setup_c(self, p_1_2):
        prof = SingularProfile(
            "supercritical", p_1_2, p=7.0, q=0.0, coefficient=0.01, cutoff=0.25,
            background=0.01,
        )
        mu = InitialMeasure.from_profile(prof, 4.0, 1024)
        return mu, Nonlinearity(p=7.0, q=0.0)

    def test_constant_data(self, p_1_2):
        mu = InitialMeasure.constant(0.7)
        F = Nonlinearity(p=7.0, q=0.0)
        w = build_supersolution("C", mu, F, p_1_2, 2.0, 64, R=0.5, alpha=2.0)
        wt = w.evaluate(0.01)
        assert wt.background == pytest.approx(2.0 * 0.7 + 0.5, rel=1e-12)
        assert np.all(wt.values == 0.0)

    def test_verification(self, p_1_2, setup_c):
        mu, F = setup_c
        w = build_supersolution("C", mu, F, p_1_2, 4.0, 1024, R=0.5, alpha=2.0)
        rep = verify_supersolution(w, mu, F, p_1_2, T=0.01, steps=64)
        assert rep.passed

    def test_alpha_one_degenerates_to_A(self, p_1_2, dirac_smooth):
        wC = build_supersolution(
            "C", dirac_smooth, Nonlinearity(p=7.0, q=0.0), p_1_2, 6.0, 512,
            R=1.0, alpha=1.0,
        )
        prof = build_profile(p_1_2)
        grid = GridFunction.zeros(1, 6.0, 512)
        st_mu = apply_semigroup(dirac_smooth, 0.02, grid, prof)
        wt = wC.evaluate(0.02)
        direct = 1.0 + 2.0 * (st_mu.values + st_mu.background)
        assert np.max(np.abs((wt.values + wt.background) - direct)) < 1e-12

    def test_alpha_below_one_rejected(self, p_1_2, setup_c):
        mu, F = setup_c
        with pytest.raises(ConstructionError):
            build_supersolution("C", mu, F, p_1_2, 4.0, 1024, alpha=0.5)

    def test_domination_against_solve(self, p_1_2, setup_c):
        mu, F = setup_c
        cfg = SolverConfig(halfwidth=4.0, points=1024, T=0.01, M=32, mollify_n=64)
        out = solve(mu, F, cfg, p_1_2)
        assert out.converged
        w = build_supersolution("C", mu, F, p_1_2, 4.0, 1024, R=0.5, alpha=2.0)
        worst, slack, _ = domination_check(out, w, mollify_lag=cfg.mollify_lag)
        assert worst <= slack


class TestVerificationContract:
    def test_atoms_rejected(self, p_1_2, F2):
        mu = InitialMeasure.dirac()
        w = build_supersolution("A", mu, F2, p_1_2, 4.0, 256, R=1.0)
        with pytest.raises(ConstructionError):
            verify_supersolution(w, mu, F2, p_1_2, T=0.05)
