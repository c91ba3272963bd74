import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracheat.asymptotics import (
    CriticalScale,
    RegVarFunction,
    h_relations_check,
    integral_bound_check,
    regvar_inverse,
)


class TestRegVarInverse:
    def test_square_root(self):
        phi = RegVarFunction(a=2.0)
        assert regvar_inverse(phi, 9.0) == pytest.approx(3.0, rel=1e-12)

    def test_round_trip(self):
        phi = RegVarFunction(a=1.0, b=1.0)
        y = phi(1e6)
        assert regvar_inverse(phi, y) == pytest.approx(1e6, rel=1e-10)

    def test_inverse_band_152m1(self):
        # two-sided band of the inverse against the asymptotic formula,
        # computed by the bisection oracle itself over y in [1e4, 1e12]
        phi = RegVarFunction(a=1.5, b=2.0, c=-1.0)
        ratios = []
        for y in np.geomspace(1e4, 1e12, 40):
            tau = regvar_inverse(phi, y)
            formula = (
                y ** (1 / 1.5)
                * math.log(y) ** (-2 / 1.5)
                * math.log(math.log(y)) ** (1 / 1.5)
            )
            ratios.append(tau / formula)
        ratios = np.array(ratios)
        assert ratios.max() / ratios.min() < 1.2
        # recorded band for this range
        assert 1.8 < ratios.min() and ratios.max() < 2.1

    @given(
        y1=st.floats(min_value=1e3, max_value=1e11),
        y2=st.floats(min_value=1e3, max_value=1e11),
    )
    def test_monotone(self, y1, y2):
        phi = RegVarFunction(a=1.5, b=2.0, c=-1.0)
        lo, hi = sorted((y1, y2))
        if hi / lo < 1.0 + 1e-9:
            return
        assert regvar_inverse(phi, lo) < regvar_inverse(phi, hi)

    def test_below_range_rejected(self):
        phi = RegVarFunction(a=1.0, b=-3.0)
        with pytest.raises(ValueError):
            regvar_inverse(phi, phi(phi.L_valid * 1.000001) * 0.5)

    def test_a_positive_required(self):
        with pytest.raises(ValueError):
            RegVarFunction(a=0.0)

    def test_threshold_located(self):
        # b < 0 pushes the monotone threshold well above e
        phi = RegVarFunction(a=1.0, b=-5.0)
        assert phi.L_valid > math.e
        taus = np.geomspace(phi.L_valid * 1.01, phi.L_valid * 1e3, 200)
        assert np.all(np.diff(phi(taus)) > 0.0)


class TestIntegralBound:
    def test_plain_integral(self):
        lhs, rhs, ratio = integral_bound_check(1.0, 0.0, 0.0, 2.0, 4.0)
        assert lhs == pytest.approx(2.0, rel=1e-10)
        assert rhs == pytest.approx(2.0 * math.log(2.0), rel=1e-14)

    def test_cancelling_exponents(self):
        lhs, _, _ = integral_bound_check(2.0, 1.0, 0.0, 4.0, 16.0)
        assert lhs == pytest.approx(12.0, rel=1e-10)

    def test_lattice_constant_positive(self):
        # the lower-bound constant fitted once over a parameter lattice
        ratios = []
        for a in (0.5, 1.0, 1.5):
            for b in (0.0, 0.5):
                for c in (-1.0, 0.0, 1.0):
                    for A, B in ((2.0, 10.0), (10.0, 1e3), (100.0, 1e5)):
                        ratios.append(integral_bound_check(a, b, c, A, B)[2])
        assert min(ratios) > 0.0
        # fitted C1 for this lattice, recorded (an artifact of the range)
        assert min(ratios) > 0.7

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            integral_bound_check(1.0, 0.0, 0.0, 1.5, 4.0)
        with pytest.raises(ValueError):
            integral_bound_check(-1.0, 0.0, 0.0, 2.0, 4.0)


class TestCriticalScale:
    def test_h_positive_increasing(self):
        for q in (-1.0, 0.0, 2.0):
            scale = CriticalScale(q=q, alpha=1.0)
            taus = np.geomspace(1e-3, 1e12, 200)
            h = scale.h(taus)
            assert np.all(h > 0.0)
            assert np.all(np.diff(h) > 0.0)

    def test_q_below_minus_one_rejected(self):
        with pytest.raises(ValueError):
            CriticalScale(q=-1.5, alpha=1.0)

    def test_h_power_ratio_q0(self):
        # H(tau^2)/H(tau) tends to 2 and stays in [1, 3] on the range
        scale = CriticalScale(q=0.0, alpha=1.0)
        taus = np.geomspace(1e3, 1e12, 100)
        r = scale.h(taus**2) / scale.h(taus)
        assert np.all((1.0 <= r) & (r <= 3.0))
        assert r[-1] == pytest.approx(2.0, rel=0.01)

    def test_h_shift_ratio_qm1(self):
        scale = CriticalScale(q=-1.0, alpha=1.0)
        taus = np.geomspace(1e6, 1e15, 60)
        r = scale.h(10.0 * taus) / scale.h(taus)
        assert np.all((1.0 <= r) & (r <= 1.2))

    def test_phi_round_trip(self):
        scale = CriticalScale(q=0.0, alpha=2.0)
        taus = np.geomspace(max(1.0, scale.threshold * 1.01), 1e12, 60)
        y = scale.psi_minus(taus)
        back = scale.phi_alpha(y)
        assert np.max(np.abs(back - taus) / taus) < 1e-10
        assert np.max(np.abs(scale.psi_minus(back) - y) / y) < 1e-10

    def test_psi_plus_strictly_increasing(self):
        scale = CriticalScale(q=1.0, alpha=3.0)
        taus = np.geomspace(1e-6, 1e12, 500)
        assert np.all(np.diff(scale.psi_plus(taus)) > 0.0)

    def test_psi_minus_increasing_beyond_threshold(self):
        scale = CriticalScale(q=2.0, alpha=3.0)
        assert scale.threshold > 0.0
        taus = np.geomspace(scale.threshold * 1.001, 1e12, 500)
        assert np.all(np.diff(scale.psi_minus(taus)) > 0.0)

    def test_composition_band(self):
        scale = CriticalScale(q=0.0, alpha=2.0)
        taus = np.geomspace(1e3, 1e12, 100)
        comp = scale.psi_minus(scale.psi_plus(taus)) / taus
        assert comp.max() / comp.min() < 3.0

    def test_relations_bounded(self):
        scale = CriticalScale(q=0.0, alpha=1.0)
        report = h_relations_check(scale, 3.0, 2.0, 1.5, 1e3, 1e12)
        for name, (lo, hi) in report.items():
            assert 0.0 < lo <= hi < 10.0
