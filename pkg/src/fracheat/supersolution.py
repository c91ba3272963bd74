"""The three supersolution families and numerical verification.

Family A:  w(t) = R + 2 S(t)mu                    (integrable-tail regime)
Family B:  w(t) = 2 Phi_alpha^{-1}( S(t) Phi_alpha(mu + L) )   (critical regime)
Family C:  w(t) = 2 [S(t) mu^alpha]^{1/alpha} + R (supercritical regime)

Each evaluator composes exactly one semigroup application with pointwise
scalar maps.  ``verify_supersolution`` recomputes the Duhamel right side at
checkpoint times and certifies RHS <= w up to a tolerance scaled by the
measured time-quadrature error (M versus 2M), never a fixed epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import CriticalScale
from .kernel import FracParams, GridFunction, apply_semigroup, build_profile
from .measures import InitialMeasure
from .nonlinearity import Nonlinearity, integral_criterion
from .solver import SolverOutcome, duhamel_rhs

__all__ = [
    "Supersolution",
    "ConstructionError",
    "VerificationReport",
    "build_supersolution",
    "verify_supersolution",
    "domination_check",
    "mollify_measure",
]


class ConstructionError(ValueError):
    """A family hypothesis failed its construction-time sampling."""

    def __init__(self, condition, message):
        super().__init__(f"[{condition}] {message}")
        self.condition = condition


def mollify_measure(
    mu: InitialMeasure, lag: float, halfwidth: float, points: int, params: FracParams
) -> InitialMeasure:
    """Replace mu by its kernel smoothing S(lag) mu as a grid measure."""
    profile = build_profile(params)
    grid = GridFunction.zeros(params.N, halfwidth, points)
    sm = apply_semigroup(mu, lag, grid, profile)
    return InitialMeasure(density=grid.like(sm.values), background=mu.background)


@dataclass
class Supersolution:
    """Evaluator for one comparison family on a fixed grid."""

    family: str
    mu: InitialMeasure
    F: Nonlinearity
    params: FracParams
    halfwidth: float
    points: int
    R: float = 0.0
    L: float = 0.0
    alpha: float = 1.0
    scale: CriticalScale = field(default=None, repr=False)
    _phi_mu: InitialMeasure = field(default=None, repr=False)
    _pow_mu: InitialMeasure = field(default=None, repr=False)

    def _grid(self) -> GridFunction:
        return GridFunction.zeros(self.params.N, self.halfwidth, self.points)

    def _mu_values(self):
        dens = self.mu.density
        if dens is None:
            return np.zeros((self.points,) * self.params.N)
        return dens.values

    def evaluate(self, t: float) -> GridFunction:
        """w(., t) as a grid function; t = 0 returns the scalar map of mu itself."""
        profile = build_profile(self.params)
        grid = self._grid()
        K = self.mu.background
        if self.family == "A":
            if t == 0.0:
                base_vals, base_bg = self._mu_values(), K
            else:
                sg = apply_semigroup(self.mu, t, grid, profile)
                base_vals, base_bg = sg.values, sg.background
            return grid.like(
                2.0 * base_vals, background=self.R + 2.0 * base_bg, time=t
            )
        if self.family == "B":
            if t == 0.0:
                v_vals = self._phi_mu.density.values
                v_bg = self._phi_mu.background
            else:
                sg = apply_semigroup(self._phi_mu, t, grid, profile)
                v_vals, v_bg = sg.values, sg.background
            total = 2.0 * self.scale.psi_minus(v_vals + v_bg)
            bg = 2.0 * float(self.scale.psi_minus(v_bg))
            return grid.like(np.maximum(total - bg, 0.0), background=bg, time=t)
        # family C
        if t == 0.0:
            y_vals = self._pow_mu.density.values
            y_bg = self._pow_mu.background
        else:
            sg = apply_semigroup(self._pow_mu, t, grid, profile)
            y_vals, y_bg = sg.values, sg.background
        total = 2.0 * (y_vals + y_bg) ** (1.0 / self.alpha) + self.R
        bg = 2.0 * y_bg ** (1.0 / self.alpha) + self.R
        return grid.like(np.maximum(total - bg, 0.0), background=bg, time=t)

    def at(self, t: float):
        """(values, background) pair for the Duhamel quadrature."""
        w = self.evaluate(t)
        return w.values, w.background


def _sampled_increasing(fn, lo, hi, n=400, name="F"):
    taus = np.geomspace(lo, hi, n)
    vals = fn(taus)
    if not np.all(np.diff(vals) >= -1e-12 * np.abs(vals[:-1])):
        raise ConstructionError(name, f"not increasing on sampled range [{lo:g}, {hi:g}]")


def build_supersolution(
    family: str,
    mu: InitialMeasure,
    F: Nonlinearity,
    params: FracParams,
    halfwidth: float,
    points: int,
    R: float = 1.0,
    L: float = 10.0,
    alpha: float = 2.0,
) -> Supersolution:
    """Construct a family evaluator after sampling the family's hypotheses.

    Failures raise :class:`ConstructionError` naming the condition.  The
    hypothesis checks are finite-range samples: they certify the declared
    ranges only.
    """
    if family not in ("A", "B", "C"):
        raise ConstructionError("family", f"unknown family {family!r}")
    if family == "A":
        # ratio monotone beyond some level, integrable tail
        _sampled_increasing(lambda t: F(t) / t, max(R, 1.0), 1e10, name="A1")
        crit = integral_criterion(F, params)
        if not crit.finite:
            raise ConstructionError("A2", f"tail integral diverges: {crit.reason}")
        return Supersolution("A", mu, F, params, halfwidth, points, R=R)

    if mu.atoms:
        raise ConstructionError(
            "measure", f"family {family} requires a density (no atoms)"
        )
    _sampled_increasing(F, 1e-2, 1e10, name="F-monotone")

    if family == "B":
        pt = params.p_theta
        if abs(F.p - pt) > 1e-12 * pt:
            raise ConstructionError(
                "B1", f"tau^-p_theta F(tau) not slowly varying: p={F.p:g} != p_theta={pt:g}"
            )
        if F.q < -1.0:
            raise ConstructionError("B-scale", f"critical scale needs q >= -1, got {F.q:g}")
        scale = CriticalScale(q=F.q, alpha=alpha)
        # B1 band: tau^{-p_theta} F / G two-sided on a wide sample
        taus = np.geomspace(1e2, 1e10, 200)
        G = np.log(math.e + taus) ** F.q
        band = F(taus) / taus**pt / G
        if band.max() / band.min() > 1e2:
            raise ConstructionError("B1", "ratio band wider than 100 on [1e2,1e10]")
        # B5 with eta = theta/(2N) beyond the scale threshold
        eta = params.theta / (2.0 * params.N)
        lo = max(10.0, 2.0 * scale.threshold)
        P = lambda t: t**eta * scale.h(t) ** (-alpha) * np.log(math.e + t) ** F.q
        _sampled_increasing(P, lo, 1e12, name="B5")
        # put L above the monotone threshold of psi_minus so the inverse
        # composition is exact on the evaluation range
        L_eff = max(L, scale.threshold + 1.0)
        vals = (mu.density.values if mu.density is not None else np.zeros((points,) * params.N))
        phi_vals = scale.phi_alpha(vals + mu.background + L_eff)
        phi_bg = float(scale.phi_alpha(mu.background + L_eff))
        grid = GridFunction.zeros(params.N, halfwidth, points)
        phi_mu = InitialMeasure(
            density=grid.like(np.maximum(phi_vals - phi_bg, 0.0)), background=phi_bg
        )
        return Supersolution(
            "B", mu, F, params, halfwidth, points, L=L_eff, alpha=alpha,
            scale=scale, _phi_mu=phi_mu,
        )

    # family C
    if alpha < 1.0:
        raise ConstructionError("C-alpha", f"need alpha >= 1, got {alpha}")
    d = 0.5 * (1.0 + F.p)
    _sampled_increasing(lambda t: F(t) / t**d, max(R, 10.0), 1e10, name="C1")
    taus = np.geomspace(max(R, 10.0), 1e10, 200)
    G = np.log(taus) ** F.q
    if np.any(F(taus) / taus**F.p / G > 1e2 * (F(taus[0]) / taus[0] ** F.p / G[0])):
        raise ConstructionError("C2", "tau^-p F not dominated by G on the sampled range")
    delta = 0.5
    gd = taus ** (-delta) * G
    if not np.all(np.diff(gd) <= 1e-12 * np.abs(gd[:-1])):
        raise ConstructionError("C4", "tau^-delta G not decreasing on the sampled range")
    vals = mu.density.values if mu.density is not None else np.zeros((points,) * params.N)
    K = mu.background
    grid = GridFunction.zeros(params.N, halfwidth, points)
    pow_mu = InitialMeasure(
        density=grid.like((vals + K) ** alpha - K**alpha), background=K**alpha
    )
    return Supersolution(
        "C", mu, F, params, halfwidth, points, R=R, alpha=alpha, _pow_mu=pow_mu
    )


@dataclass
class VerificationReport:
    rows: list  # (t, violation, rhs_sup, w_sup)
    max_violation: float
    quad_error: float
    tolerance: float
    passed: bool


def verify_supersolution(
    w: Supersolution,
    mu: InitialMeasure,
    F: Nonlinearity,
    params: FracParams,
    T: float,
    checkpoints=None,
    steps: int = 64,
) -> VerificationReport:
    """Check S(t)mu + int_0^t S(t-s) F(w(s)) ds <= w(t) at checkpoint times.

    The right side is quadratured with ``steps`` and ``2*steps`` time steps;
    the difference calibrates the tolerance (2x the measured quadrature
    error), so discretization noise cannot fail an analytic inequality.
    Requires an atom-free mu (mollify first; pointwise values of w at t = 0
    must be finite).
    """
    if mu.atoms:
        raise ConstructionError(
            "measure", "verification needs atom-free data; mollify the measure first"
        )
    if checkpoints is None:
        checkpoints = [T / 4.0, T / 2.0, 3.0 * T / 4.0, T]
    grid = GridFunction.zeros(params.N, w.halfwidth, w.points)
    rows = []
    max_violation = -math.inf
    quad_err = 0.0
    for t in checkpoints:
        coarse_vals, coarse_bg = duhamel_rhs(w.at, mu, F, t, steps, grid, params)
        fine_vals, fine_bg = duhamel_rhs(w.at, mu, F, t, 2 * steps, grid, params)
        quad_err = max(
            quad_err,
            float(np.max(np.abs((fine_vals + fine_bg) - (coarse_vals + coarse_bg)))),
        )
        wt = w.evaluate(t)
        diff = (fine_vals + fine_bg) - (wt.values + wt.background)
        violation = float(np.max(diff))
        rows.append((t, violation, float(np.max(fine_vals) + fine_bg), wt.sup()))
        max_violation = max(max_violation, violation)
    tolerance = 2.0 * quad_err + 1e-12
    return VerificationReport(
        rows=rows,
        max_violation=max_violation,
        quad_error=quad_err,
        tolerance=tolerance,
        passed=max_violation <= tolerance,
    )


def domination_check(outcome: SolverOutcome, w: Supersolution, mollify_lag: float):
    """Converged trajectory slices against the time-shifted supersolution.

    Mollified iterates are dominated by w evaluated ``mollify_lag`` later,
    which is exact for the kernel-smoothing mollifier.  Returns
    (max_violation, slack, rows).
    """
    if not outcome.converged:
        raise ValueError("domination check requires a converged outcome")
    traj = outcome.trajectory
    slack = 2.0 * (outcome.residual or 0.0) + 1e-9
    rows = []
    worst = -math.inf
    for j in range(len(traj.times)):
        t = float(traj.times[j])
        wt = w.evaluate(t + mollify_lag)
        diff = (traj.grids[j] + traj.backgrounds[j]) - (wt.values + wt.background)
        v = float(np.max(diff))
        rows.append((t, v))
        worst = max(worst, v)
    return worst, slack, rows
