"""Nonlinearities and their comparison functions.

The prototype nonlinearity is ``F(tau) = tau^p [log(L + tau)]^q`` with
``p > 1``, ``q`` real, ``L >= 1``.  Convex minorants and increasing majorants
with the same ``tau^p (log tau)^q`` growth are built from the double integral

    tau^d  int_R^tau s^{-d} ( int_R^s xi^{p-2} [log(e+xi)]^q dxi ) ds,

realized as two cumulative tables on a shared log-spaced grid completed by
exact Gauss segments, so evaluations are quadrature-accurate at solver scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .kernel import FracParams

__all__ = [
    "Nonlinearity",
    "ComparisonFunction",
    "ParameterError",
    "DominationError",
    "eval_F",
    "build_minorant",
    "build_majorant",
    "fit_minorant",
    "integral_criterion",
    "IntegralCriterion",
]


class ParameterError(ValueError):
    """Comparison-function parameters outside their admissible range."""


class DominationError(ValueError):
    """A majorant/minorant failed its sampled domination check."""

    def __init__(self, message, tau):
        super().__init__(message)
        self.tau = tau


@dataclass(frozen=True)
class Nonlinearity:
    """Evaluable F with its asymptotic descriptor (p, q).

    ``kind="prototype"`` evaluates the closed form; ``kind="tabulated"``
    interpolates a user table log-log, keeping the declared descriptor.
    """

    p: float
    q: float = 0.0
    L: float = 1.0
    kind: str = "prototype"
    table_tau: np.ndarray = field(default=None, repr=False)
    table_val: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.p <= 1.0:
            raise ParameterError(f"need p > 1, got p={self.p}")
        if self.kind == "prototype":
            if self.L < 1.0:
                raise ParameterError(f"prototype needs L >= 1, got L={self.L}")
            if self.q < 0.0 and self.L == 1.0:
                raise ParameterError(
                    "q < 0 with L = 1 is singular at tau = 0; use L > 1"
                )
        elif self.kind == "tabulated":
            if self.table_tau is None or self.table_val is None:
                raise ParameterError("tabulated nonlinearity needs tau/value tables")
        else:
            raise ParameterError(f"unknown kind {self.kind!r}")

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        tau = np.atleast_1d(tau)
        if np.any(tau < 0.0):
            raise ValueError("F is defined on tau >= 0")
        if self.kind == "prototype":
            with np.errstate(over="ignore"):
                out = np.where(
                    tau > 0.0,
                    tau**self.p * np.log(self.L + tau) ** self.q,
                    0.0,
                )
            out = np.minimum(out, 1e300)
        else:
            lt = np.log(np.maximum(tau, self.table_tau[0]))
            out = np.exp(
                np.interp(
                    lt, np.log(self.table_tau), np.log(np.maximum(self.table_val, 1e-300))
                )
            )
            out = np.where(tau == 0.0, 0.0, out)
        return float(out[0]) if scalar else out


def eval_F(F: Nonlinearity, tau):
    return F(tau)


# ---------------------------------------------------------------------------
# nested-integral comparison functions

_G8_NODES, _G8_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _gauss_panels(a, b, fn):
    """Vectorized 8-point Gauss over [a_i, b_i] panels."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid[..., None] + half[..., None] * _G8_NODES
    return np.sum(half[..., None] * _G8_WEIGHTS * fn(x), axis=-1)


class ComparisonFunction:
    """Nested-integral comparison function (minorant or majorant).

    role "minorant": f(tau) = kappa tau^d J(tau), zero on [0, R].
    role "majorant": f(tau) = kappa tau^d J(tau) + L with R = 0.
    Here J(tau) = int_R^tau s^{-d} I(s) ds and I(s) = int_R^s xi^{p-2}
    [log(e+xi)]^q dxi, cached cumulatively on a log grid.
    """

    def __init__(self, role, p, d, q, R, kappa, L=0.0, t_max=1e13, nodes_per_decade=160):
        if role not in ("minorant", "majorant"):
            raise ParameterError(f"unknown role {role!r}")
        self.role = role
        self.p = float(p)
        self.d = float(d)
        self.q = float(q)
        self.R = float(R)
        self.kappa = float(kappa)
        self.L = float(L)
        scale = max(self.R, 1.0)
        lo, hi = 1e-9 * scale, t_max
        n = int(nodes_per_decade * math.log10(hi / lo)) + 1
        self._off = np.geomspace(lo, hi, n)
        self._nodes = self.R + self._off
        phi = self._phi
        # inner cumulative: head by adaptive quadrature (endpoint may be singular)
        head, _ = quad(phi, self.R, self._nodes[0], limit=200)
        segs = _gauss_panels(self._nodes[:-1], self._nodes[1:], phi)
        self._inner_cum = head + np.concatenate(([0.0], np.cumsum(segs)))
        # outer cumulative over s^{-d} I(s)
        outer_head, _ = quad(
            lambda s: s ** (-self.d) * self._inner_at(np.asarray(s)),
            self.R if self.R > 0.0 else lo * 1e-6,
            self._nodes[0],
            limit=200,
        )
        if self.R == 0.0:
            # analytic continuation to 0: integrand ~ s^{p-1-d}/(p-1)
            s0 = lo * 1e-6
            outer_head += s0 ** (self.p - self.d) / ((self.p - 1.0) * (self.p - self.d))
        osegs = _gauss_panels(
            self._nodes[:-1], self._nodes[1:], lambda s: s ** (-self.d) * self._inner_at(s)
        )
        self._outer_cum = outer_head + np.concatenate(([0.0], np.cumsum(osegs)))

    def _phi(self, xi):
        xi = np.asarray(xi, dtype=float)
        with np.errstate(over="ignore"):
            out = xi ** (self.p - 2.0) * np.log(math.e + xi) ** self.q
        return out

    def _inner_at(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self._nodes, s) - 1, 0, len(self._nodes) - 1)
        base = self._inner_cum[k]
        return base + _gauss_panels(self._nodes[k], s, self._phi)

    def _outer_at(self, tau):
        tau = np.asarray(tau, dtype=float)
        k = np.clip(np.searchsorted(self._nodes, tau) - 1, 0, len(self._nodes) - 1)
        base = self._outer_cum[k]
        return base + _gauss_panels(
            self._nodes[k], tau, lambda s: s ** (-self.d) * self._inner_at(s)
        )

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        tau = np.atleast_1d(tau)
        if np.any(tau < 0.0):
            raise ValueError("comparison functions are defined on tau >= 0")
        out = np.zeros_like(tau)
        if np.any(tau > self._nodes[-1]):
            raise ValueError(
                f"tau beyond cached range {self._nodes[-1]:.3g}; rebuild with larger t_max"
            )
        live = tau > self.R + (0.0 if self.R == 0.0 else 0.0)
        # below the first node the double integral is negligible but computed
        small = live & (tau <= self._nodes[0])
        big = live & ~small
        if np.any(big):
            out[big] = self.kappa * tau[big] ** self.d * self._outer_at(tau[big])
        if np.any(small):
            for i in np.argwhere(small).ravel():
                t = tau[i]
                val, _ = quad(
                    lambda s: s ** (-self.d) * self._inner_at(np.asarray(s)),
                    self.R if self.R > 0.0 else 0.0,
                    t,
                    limit=200,
                )
                out[i] = self.kappa * t**self.d * val
        if self.role == "majorant":
            out = out + self.L
        return float(out[0]) if scalar else out


def _domination_grid(lo=1e-9, hi=1e12, per_decade=1000):
    n = int(per_decade * math.log10(hi / lo)) + 1
    return np.concatenate(([0.0], np.geomspace(lo, hi, n)))


def build_minorant(p, d, q, R, kappa) -> ComparisonFunction:
    """Convex minorant candidate: zero on [0, R], nested integral beyond.

    The construction guarantees convexity and that tau^{-d} f(tau) increases;
    whether f actually lies below a given F is checked by callers (see
    :func:`fit_minorant`).
    """
    if not (1.0 < d < p):
        raise ParameterError(f"need 1 < d < p, got d={d}, p={p}")
    if R < 0.0 or kappa <= 0.0:
        raise ParameterError("need R >= 0 and kappa > 0")
    return ComparisonFunction("minorant", p, d, q, R, kappa)


def build_majorant(
    F: Nonlinearity,
    kappa: float = None,
    L: float = None,
    d: float = 1.0,
    check_hi: float = 1e12,
    per_decade: int = 1000,
) -> ComparisonFunction:
    """Increasing majorant f = kappa * (nested integral) + L with f >= F.

    With ``kappa``/``L`` given, the domination is verified on a geometric
    sample and a :class:`DominationError` reports the failing tau; with
    either omitted, a doubling search finds the smallest sampled-check-passing
    values.  ``d = 1`` is the ratio-monotone variant; ``1 < d < p`` gives the
    d-homogeneous variant.
    """
    p, q = F.p, F.q
    if d != 1.0 and not (1.0 < d < p):
        raise ParameterError(f"need d = 1 or 1 < d < p, got d={d}")
    grid = _domination_grid(hi=check_hi, per_decade=per_decade)
    Fg = F(grid)
    # tiny relative slack so roundoff at huge tau cannot fail an analytic >=
    slack = 1.0 - 1e-9
    if kappa is not None and L is not None:
        f = ComparisonFunction("majorant", p, d, q, 0.0, kappa, L)
        fg = f(grid)
        bad = fg < Fg * slack
        if np.any(bad):
            tau = float(grid[bad][0])
            raise DominationError(
                f"majorant fails f >= F at tau={tau:.6g}", tau
            )
        return f
    kap, ell = (1.0 if kappa is None else kappa), (1.0 if L is None else L)
    for _ in range(80):
        f = ComparisonFunction("majorant", p, d, q, 0.0, kap, ell)
        fg = f(grid)
        if np.all(fg >= Fg * slack):
            return f
        # double whichever side is failing: small tau -> L, large tau -> kappa
        tau_fail = grid[fg < Fg][0]
        if tau_fail <= 1.0 and L is None:
            ell *= 2.0
        elif kappa is None:
            kap *= 2.0
        elif L is None:
            ell *= 2.0
        else:  # pragma: no cover - both fixed handled above
            break
    raise DominationError("doubling search failed to dominate F", float(tau_fail))


def fit_minorant(
    F: Nonlinearity,
    d: float = None,
    q: float = None,
    R: float = 1.0,
    check_hi: float = 1e12,
    per_decade: int = 1000,
) -> ComparisonFunction:
    """Minorant below F by doubling search: halve kappa, double R as needed."""
    p = F.p
    d = 0.5 * (1.0 + p) if d is None else d
    q = F.q if q is None else q
    grid = _domination_grid(hi=check_hi, per_decade=per_decade)
    Fg = F(grid)
    kappa, Rcur = 1.0, R
    slack = 1.0 + 1e-9
    for _ in range(80):
        f = build_minorant(p, d, q, Rcur, kappa)
        fg = f(grid)
        if np.all(fg <= Fg * slack):
            return f
        tau_fail = grid[fg > Fg * slack][0]
        if tau_fail <= 10.0 * max(Rcur, 1.0):
            Rcur *= 2.0
        else:
            kappa *= 0.5
    raise DominationError("doubling search failed to stay below F", float(tau_fail))


# ---------------------------------------------------------------------------
# the tail integral criterion


@dataclass(frozen=True)
class IntegralCriterion:
    finite: bool
    reason: str
    partial: float
    cutoff: float


def integral_criterion(F: Nonlinearity, params: FracParams, cutoff: float = 1e8) -> IntegralCriterion:
    """Convergence of the tail integral of tau^{-p_theta - 1} F(tau).

    The verdict is analytic from the descriptor: finite iff p < p_theta, or
    p = p_theta and q < -1.  The numeric partial integral up to ``cutoff``
    is reported alongside.
    """
    pt = params.p_theta
    tol = 1e-12 * pt
    if F.p < pt - tol:
        finite, reason = True, f"p={F.p:g} < p_theta={pt:g}"
    elif abs(F.p - pt) <= tol:
        if F.q < -1.0:
            finite, reason = True, f"p = p_theta and q={F.q:g} < -1"
        else:
            finite, reason = False, f"p = p_theta and q={F.q:g} >= -1"
    else:
        finite, reason = False, f"p={F.p:g} > p_theta={pt:g}"
    val, _ = quad(
        lambda u: math.exp(-pt * u) * float(F(math.exp(u))),
        0.0,
        math.log(cutoff),
        limit=400,
    )
    return IntegralCriterion(finite=finite, reason=reason, partial=val, cutoff=cutoff)
