"""Regularly varying scales: monotone inverses, integral bounds, h-relations.

Every asymptotic-equivalence claim is operationalized as a two-sided ratio
band on a declared finite range; the fitted band constants are artifacts of
the tested range, not universal constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

__all__ = [
    "RegVarFunction",
    "CriticalScale",
    "regvar_inverse",
    "integral_bound_check",
    "h_relations_check",
]


@dataclass(frozen=True, eq=False)
class RegVarFunction:
    """phi(tau) = tau^a (log tau)^b (log log tau)^c, monotone beyond a threshold.

    The validity threshold ``L_valid`` (where phi' turns positive for good) is
    located at construction by a sign scan of the logarithmic derivative plus
    bisection.
    """

    a: float
    b: float = 0.0
    c: float = 0.0
    L_valid: float = field(init=False)

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError(f"need a > 0, got a={self.a}")
        object.__setattr__(self, "L_valid", self._find_threshold())

    def _rho(self, u):
        """Sign of phi' at tau = e^u equals the sign of this, for u > 1."""
        return self.a + self.b / u + self.c / (u * np.log(u))

    def _find_threshold(self) -> float:
        u_lo = 1.0 + 1e-9
        if self.b == 0.0 and self.c == 0.0:
            return math.exp(u_lo)
        u = 1.0 + np.geomspace(1e-9, 1e6, 6000)
        rho = self._rho(u)
        nonpos = np.nonzero(rho <= 0.0)[0]
        if len(nonpos) == 0:
            return math.exp(u_lo)
        i = nonpos[-1]
        if i + 1 >= len(u):
            raise ValueError("no monotone tail found in the scanned range")
        u_star = brentq(self._rho, u[i], u[i + 1], xtol=1e-14)
        return math.exp(u_star) * (1.0 + 1e-12)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= math.e):
            raise ValueError("phi is defined for tau > e")
        lt = np.log(tau)
        out = tau**self.a
        if self.b != 0.0:
            out = out * lt**self.b
        if self.c != 0.0:
            out = out * np.log(lt) ** self.c
        return out if out.ndim else float(out)


def regvar_inverse(phi: RegVarFunction, y: float, rtol: float = 1e-12) -> float:
    """tau with phi(tau) = y to relative tolerance, by geometric bracketing + Brent.

    Requires y above phi(L_valid) where the inverse exists.
    """
    lo = phi.L_valid * (1.0 + 1e-9)
    y_min = phi(lo)
    if y <= y_min:
        raise ValueError(
            f"y={y:.6g} below the invertible range (phi(L)={y_min:.6g})"
        )
    hi = 2.0 * lo
    for _ in range(2000):
        if phi(hi) >= y:
            break
        hi *= 2.0
    else:
        raise ValueError("failed to bracket the inverse")
    tau = brentq(lambda t: phi(t) - y, lo, hi, rtol=1e-15, maxiter=200)
    if abs(phi(tau) - y) > rtol * abs(y):
        raise ValueError("bisection failed to reach the requested tolerance")
    return float(tau)


def integral_bound_check(a: float, b: float, c: float, A: float, B: float):
    """Integral of tau^{a-b-1} (log tau)^c over [A, B] against its lower-bound expression.

    Returns (lhs, rhs, ratio) where rhs = A^a B^{-b} (log A)^c log(B/A); tests
    fit the constant ratio >= C1 > 0 over a parameter lattice.
    """
    if a <= 0.0 or b < 0.0:
        raise ValueError(f"need a > 0 and b >= 0, got a={a}, b={b}")
    if not (2.0 <= A <= B):
        raise ValueError(f"need 2 <= A <= B, got A={A}, B={B}")
    lhs, _ = quad(
        lambda u: math.exp((a - b) * u) * u**c,
        math.log(A),
        math.log(B),
        limit=400,
    )
    rhs = A**a * B ** (-b) * math.log(A) ** c * math.log(B / A)
    ratio = lhs / rhs if rhs > 0.0 else math.inf
    return lhs, rhs, ratio


@dataclass(frozen=True, eq=False)
class CriticalScale:
    """The critical-case correction scale h and its companions.

    h(tau) = (log(e+tau))^{q+1} for q > -1, log(e+log(e+tau)) for q = -1;
    psi_plus/minus(tau) = tau h(tau)^{+-alpha}.  ``phi_alpha`` is the monotone
    inverse of psi_minus above the computed threshold where psi_minus turns
    increasing, extended linearly below.
    """

    q: float
    alpha: float
    threshold: float = field(init=False)

    def __post_init__(self):
        if self.q < -1.0:
            raise ValueError(f"critical scale needs q >= -1, got q={self.q}")
        if self.alpha <= 0.0:
            raise ValueError(f"need alpha > 0, got alpha={self.alpha}")
        object.__setattr__(self, "threshold", self._find_threshold())

    def h(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.q > -1.0:
            out = np.log(math.e + tau) ** (self.q + 1.0)
        else:
            out = np.log(math.e + np.log(math.e + tau))
        return out if out.ndim else float(out)

    def _ratio(self, tau):
        """tau h'(tau)/h(tau), the quantity controlling psi_minus monotonicity."""
        tau = np.asarray(tau, dtype=float)
        if self.q > -1.0:
            return (self.q + 1.0) * tau / ((math.e + tau) * np.log(math.e + tau))
        w = np.log(math.e + tau)
        return tau / ((math.e + tau) * (math.e + w) * np.log(math.e + w))

    def _find_threshold(self) -> float:
        taus = np.geomspace(1e-6, 1e16, 8000)
        g = 1.0 - self.alpha * self._ratio(taus)
        nonpos = np.nonzero(g <= 0.0)[0]
        if len(nonpos) == 0:
            return 0.0
        i = nonpos[-1]
        if i + 1 >= len(taus):
            raise ValueError("psi_minus never turns increasing in the scanned range")
        f = lambda t: 1.0 - self.alpha * float(self._ratio(t))
        return float(brentq(f, taus[i], taus[i + 1], xtol=1e-14)) * (1.0 + 1e-12)

    def psi_plus(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = tau * self.h(tau) ** self.alpha
        return out if out.ndim else float(out)

    def psi_minus(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = tau * self.h(tau) ** (-self.alpha)
        return out if out.ndim else float(out)

    def phi_alpha(self, y):
        """Inverse of psi_minus above the threshold, linear extension below.

        Vectorized bisection; psi_minus is strictly increasing on
        [threshold, infinity) by construction.
        """
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y).copy()
        if np.any(y < 0.0):
            raise ValueError("phi_alpha is defined on y >= 0")
        t0 = max(self.threshold, 1e-30)
        y0 = float(self.psi_minus(t0))
        out = np.empty_like(y)
        small = y <= y0
        out[small] = y[small] * (t0 / y0)
        big = ~small
        if np.any(big):
            yb = y[big]
            lo = np.full_like(yb, t0)
            hi = np.full_like(yb, max(2.0 * t0, 1.0))
            for _ in range(200):
                need = self.psi_minus(hi) < yb
                if not np.any(need):
                    break
                hi[need] *= 2.0
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                below = self.psi_minus(mid) < yb
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            out[big] = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out


def h_relations_check(scale: CriticalScale, a: float, b: float, c: float, tau_lo: float, tau_hi: float, n: int = 200):
    """Min/max over a log grid of the three h-relation ratios.

    Ratios: h(a tau^b)/h(tau), h(tau^b h(tau)^c)/h(tau), and
    phi_alpha(tau)/psi_plus(tau) (the composition identity for the critical
    scale).  Boundedness of each on the declared range is the testable form
    of the asymptotic relations.
    """
    taus = np.geomspace(tau_lo, tau_hi, n)
    h = scale.h(taus)
    r1 = scale.h(a * taus**b) / h
    r2 = scale.h(taus**b * h**c) / h
    r3 = scale.phi_alpha(taus) / scale.psi_plus(taus)
    report = {}
    for name, r in (("h_power", r1), ("h_self", r2), ("phi_vs_psi_plus", r3)):
        report[name] = (float(np.min(r)), float(np.max(r)))
    return report
