"""Solvability regimes, optimal profiles, and the condition checks.

``classify`` labels the (p, q) plane relative to the critical exponent
``p_theta``; the three singular regimes carry the matching optimal-profile
formula.  The necessary-side checks test the ball-mass integral inequality
and the envelope bounds; the sufficient-side checks test the averaged
functionals of the three existence theorems.  All theorem constants are
calibration parameters supplied by callers and recorded in the reports;
verdicts are always relative to the constant they were tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad

from .asymptotics import CriticalScale
from .kernel import FracParams, ball_volume
from .measures import (
    InitialMeasure,
    SingularProfile,
    ball_volume as _bv,
    lattice_scan,
    radial_ball_integral,
    sup_ball_mass,
)
from .nonlinearity import (
    ComparisonFunction,
    IntegralCriterion,
    Nonlinearity,
    ParameterError,
    integral_criterion,
)

__all__ = [
    "CaseLabel",
    "ConditionReport",
    "classify",
    "profile_for_case",
    "necessary_check",
    "necessary_envelope",
    "sufficient_check_A",
    "sufficient_check_B",
    "sufficient_check_C",
    "dirac_solvable",
]

REGIMES = (
    "subcritical",
    "critical-integrable",
    "critical-borderline",
    "critical-log",
    "supercritical",
)

_SOLVABLE_IFF_BOUNDED = "solvable iff sup_z mu(B(z,1)) < infinity"


@dataclass(frozen=True)
class CaseLabel:
    """Solvability regime of (N, theta, p, q) with its optimal-profile formula."""

    regime: str
    params: FracParams
    p: float
    q: float
    formula: str
    criterion: str

    @property
    def p_theta(self) -> float:
        return self.params.p_theta

    @property
    def singular(self) -> bool:
        return self.regime in ("critical-borderline", "critical-log", "supercritical")


@dataclass
class ConditionReport:
    """Outcome of one condition check, always relative to its calibrated constant."""

    condition: str
    worst_ratio: float
    witness: tuple
    satisfied: bool
    constant: float
    rows: list = field(default_factory=list)  # (sigma_or_tau, lhs, rhs, ratio, witness)


def classify(params: FracParams, p: float, q: float) -> CaseLabel:
    """Total classification of (p - p_theta, q); p <= 1 is out of scope."""
    if p <= 1.0:
        raise ParameterError(f"classification requires p > 1, got p={p}")
    pt = params.p_theta
    tol = 1e-12 * pt
    if p < pt - tol:
        return CaseLabel("subcritical", params, p, q, "", _SOLVABLE_IFF_BOUNDED)
    if abs(p - pt) <= tol:
        if q < -1.0:
            return CaseLabel(
                "critical-integrable", params, p, q, "", _SOLVABLE_IFF_BOUNDED
            )
        regime = "critical-borderline" if q == -1.0 else "critical-log"
    else:
        regime = "supercritical"
    template = profile_for_case(regime, params, p, q)
    return CaseLabel(
        regime,
        params,
        p,
        q,
        template.formula(),
        "optimal singularity: unsolvable above gamma * profile, "
        "solvable below eps * profile + K",
    )


def profile_for_case(
    regime: str,
    params: FracParams,
    p: float,
    q: float,
    coefficient: float = 1.0,
    cutoff: float = 0.25,
    background: float = 0.0,
) -> SingularProfile:
    """The matching optimal-singularity profile for a singular regime."""
    return SingularProfile(
        case=regime,
        params=params,
        p=p,
        q=q,
        coefficient=coefficient,
        cutoff=cutoff,
        background=background,
    )


# ---------------------------------------------------------------------------
# necessary side


def necessary_check(
    mu: InitialMeasure,
    f: ComparisonFunction,
    params: FracParams,
    T: float,
    gamma: float,
    samples,
) -> ConditionReport:
    """Ball-mass integral inequality over a sample of (z, sigma) pairs.

    For each sample the integral of s^{-p_theta-1} f(s) over
    [m/(gamma T^{N/theta}), m sigma^{-N}/gamma] is compared against
    gamma^{p_theta+1} m^{-theta/N} with m the ball mass; ratios above 1 are
    violations at the calibrated gamma.
    """
    if gamma < 1.0:
        raise ParameterError(f"gamma must be >= 1, got {gamma}")
    from .measures import ball_mass

    pt = params.p_theta
    rows = []
    worst, witness = 0.0, None
    for z, sigma in samples:
        m = ball_mass(mu, z, sigma)
        lo = m / (gamma * T ** (params.N / params.theta))
        hi = m * sigma ** (-params.N) / gamma
        if m <= 0.0 or hi <= lo:
            rows.append((sigma, 0.0, math.inf, 0.0, z))
            continue
        integral, _ = quad(
            lambda u: math.exp(-pt * u) * float(f(math.exp(u))),
            math.log(lo),
            math.log(hi),
            limit=400,
        )
        rhs = gamma ** (pt + 1.0) * m ** (-params.theta / params.N)
        ratio = integral / rhs
        rows.append((sigma, integral, rhs, ratio, z))
        if ratio > worst:
            worst, witness = ratio, (z, sigma)
    return ConditionReport(
        condition="necessary-3.1",
        worst_ratio=worst,
        witness=witness,
        satisfied=worst <= 1.0,
        constant=gamma,
        rows=rows,
    )


def _envelope(params: FracParams, p: float, q: float, sigma: float) -> float:
    """The case envelope of the sharpened necessary condition."""
    pt = params.p_theta
    tol = 1e-12 * pt
    N, theta = params.N, params.theta
    if abs(p - pt) > tol:
        return sigma ** (N - theta / (p - 1.0)) * abs(math.log(sigma)) ** (
            -q / (p - 1.0)
        )
    if q != -1.0:
        return abs(math.log(sigma)) ** (-N * (q + 1.0) / theta)
    return math.log(abs(math.log(sigma))) ** (-N / theta)


def necessary_envelope(
    mu: InitialMeasure,
    params: FracParams,
    p: float,
    q: float,
    sigmas,
    search_halfwidth: float,
) -> ConditionReport:
    """Quotients sup_z mu(B(z, sigma)) / envelope(sigma) down the sigma grid.

    Admissible data have quotients decaying to zero; data at or above the
    optimal singularity keep the quotient bounded away from zero (the fitted
    constant is the max quotient and is reported, never assumed).
    """
    rows = []
    worst, witness = 0.0, None
    for sigma in sigmas:
        mass, center = sup_ball_mass(mu, sigma, search_halfwidth)
        env = _envelope(params, p, q, sigma)
        quotient = mass / env
        rows.append((sigma, mass, env, quotient, center))
        if quotient > worst:
            worst, witness = quotient, (center, sigma)
    quot = np.array([r[3] for r in rows])
    # unbounded growth down the grid is the only intrinsic violation signal;
    # measures saturating the envelope order keep a constant quotient and are
    # judged against a caller-calibrated constant instead
    growing_unboundedly = quot[-1] > 2.0 * quot[0]
    return ConditionReport(
        condition="necessary-cor3.1",
        worst_ratio=worst,
        witness=witness,
        satisfied=not growing_unboundedly,
        constant=worst,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# sufficient side


def _ball_integral_of_map(mu: InitialMeasure, g, z, sigma: float) -> float:
    """Integral of g(mu(y)) over B(z, sigma); +inf when an atom is inside.

    Pointwise values of atomic parts are infinite, so any superlinear g makes
    the average diverge; that is reported as +inf rather than an error.
    """
    z_vec = np.atleast_1d(np.asarray(z, dtype=float))
    N = mu.ndim
    for loc, mass in mu.atoms:
        loc_vec = np.atleast_1d(np.asarray(loc, dtype=float))
        if mass > 0.0 and np.sum((loc_vec - z_vec) ** 2) <= sigma**2:
            return math.inf
    K = mu.background
    vol = ball_volume(N, sigma)
    if mu.profile is not None:
        pr = mu.profile
        d = float(np.sqrt(np.sum(z_vec**2)))
        covered = radial_ball_integral(lambda r: 1.0, N, d, sigma, pr.cutoff)
        inner = radial_ball_integral(
            lambda r: g(pr.singular_value(r) + K), N, d, sigma, pr.cutoff
        )
        return inner + g(K) * max(vol - covered, 0.0)
    if mu.density is not None:
        dens = mu.density
        dx = dens.dx
        if N == 1:
            ax = dens.axis()
            lo = np.maximum(ax - dx / 2.0, z_vec[0] - sigma)
            hi = np.minimum(ax + dx / 2.0, z_vec[0] + sigma)
            overlap = np.clip(hi - lo, 0.0, dx)
        else:
            r = dens.radii_from(z_vec)
            half_diag = 0.5 * dx * math.sqrt(N)
            overlap = np.where(
                r <= sigma - half_diag,
                dens.cell_volume,
                np.where(r >= sigma + half_diag, 0.0, 0.5 * dens.cell_volume),
            )
        gv = g(dens.values + K)
        covered = float(np.sum(overlap))
        return float(np.sum(gv * overlap)) + g(K) * max(vol - covered, 0.0)
    return g(K) * vol


def sufficient_check_A(mu: InitialMeasure, search_halfwidth: float) -> ConditionReport:
    """Unit-ball mass supremum; finite for every artifact measure.

    The value is reported for comparison with the smallness-free existence
    hypothesis of the subcritical/integrable regime.
    """
    mass, center = sup_ball_mass(mu, 1.0, search_halfwidth)
    return ConditionReport(
        condition="sufficient-A",
        worst_ratio=0.0 if math.isfinite(mass) else math.inf,
        witness=(center, 1.0),
        satisfied=math.isfinite(mass),
        constant=mass,
        rows=[(1.0, mass, math.inf, 0.0, center)],
    )


def sufficient_check_B(
    mu: InitialMeasure,
    params: FracParams,
    q: float,
    alpha: float,
    epsilon: float,
    sigmas,
    search_halfwidth: float,
) -> ConditionReport:
    """Critical-regime averaged condition with the psi_alpha distortions.

    For each sigma, the sup over centers of
    psi_minus[ average over B(x, sigma) of psi_plus(mu) ] is compared against
    epsilon sigma^{-N} h(1/sigma)^{-N/theta}.

    Larger alpha makes the condition strictly stronger; on optimal-profile
    data the averaged psi_plus stays finite only for alpha < N/theta, so
    profile consistency runs should pick alpha in that range (an infinite
    ratio otherwise is a correct verdict, not an error).
    """
    if q < -1.0:
        raise ParameterError(f"check B needs q >= -1, got q={q}")
    N = params.N
    scale = CriticalScale(q=q, alpha=alpha)
    rows = []
    worst, witness = 0.0, None
    for sigma in sigmas:
        vol = ball_volume(N, sigma)

        def lhs_at(center):
            total = _ball_integral_of_map(mu, scale.psi_plus, center, sigma)
            if not math.isfinite(total):
                return math.inf
            return float(scale.psi_minus(total / vol))

        radial = mu.profile is not None and not mu.atoms
        lhs, center = lattice_scan(lhs_at, N, search_halfwidth, sigma / 4.0, radial=radial)
        rhs = (
            epsilon
            * sigma ** (-N)
            * float(scale.h(1.0 / sigma)) ** (-N / params.theta)
        )
        ratio = lhs / rhs
        rows.append((sigma, lhs, rhs, ratio, center))
        if ratio > worst:
            worst, witness = ratio, (center, sigma)
    return ConditionReport(
        condition="sufficient-B",
        worst_ratio=worst,
        witness=witness,
        satisfied=worst <= 1.0,
        constant=epsilon,
        rows=rows,
    )


def sufficient_check_C(
    mu: InitialMeasure,
    params: FracParams,
    p: float,
    q: float,
    alpha: float,
    epsilon: float,
    sigmas,
    search_halfwidth: float,
) -> ConditionReport:
    """Supercritical averaged condition: alpha-means against the decay envelope.

    Requires alpha > 1 with alpha * theta / (p - 1) < N so the alpha-power of
    the optimal profile stays locally integrable.
    """
    if p <= params.p_theta:
        raise ParameterError(f"check C needs p > p_theta, got p={p}")
    if alpha <= 1.0:
        raise ParameterError(f"check C needs alpha > 1, got alpha={alpha}")
    if alpha * params.theta / (p - 1.0) >= params.N:
        suggestion = 0.5 * (1.0 + params.N * (p - 1.0) / params.theta)
        raise ParameterError(
            f"alpha*theta/(p-1) = {alpha * params.theta / (p - 1.0):.3g} >= N={params.N}; "
            f"admissible alpha must be below {params.N * (p - 1.0) / params.theta:.3g} "
            f"(e.g. alpha={suggestion:.3g})"
        )
    N = params.N
    rows = []
    worst, witness = 0.0, None
    for sigma in sigmas:
        vol = ball_volume(N, sigma)

        def lhs_at(center):
            total = _ball_integral_of_map(mu, lambda v: np.asarray(v) ** alpha, center, sigma)
            if not math.isfinite(total):
                return math.inf
            return (total / vol) ** (1.0 / alpha)

        radial = mu.profile is not None and not mu.atoms
        lhs, center = lattice_scan(lhs_at, N, search_halfwidth, sigma / 4.0, radial=radial)
        rhs = (
            epsilon
            * sigma ** (-params.theta / (p - 1.0))
            * abs(math.log(sigma)) ** (-q / (p - 1.0))
        )
        ratio = lhs / rhs
        rows.append((sigma, lhs, rhs, ratio, center))
        if ratio > worst:
            worst, witness = ratio, (center, sigma)
    return ConditionReport(
        condition="sufficient-C",
        worst_ratio=worst,
        witness=witness,
        satisfied=worst <= 1.0,
        constant=epsilon,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# Dirac data


def dirac_solvable(F: Nonlinearity, params: FracParams) -> tuple:
    """Solvability verdict for Dirac initial data via the tail integral.

    Samples the ratio-monotonicity and convexity hypotheses before
    delegating; returns (solvable, IntegralCriterion).
    """
    d = 0.5 * (1.0 + F.p)
    taus = np.geomspace(1.0, 1e10, 800)
    ratios = F(taus) / taus**d
    decreasing = np.nonzero(np.diff(ratios) < -1e-12 * ratios[:-1])[0]
    # (D2) asks for monotonicity beyond SOME level; locate it and require a
    # dominant increasing tail within the sampled window
    if len(decreasing) and decreasing[-1] > len(taus) // 3:
        raise ParameterError(
            f"tau^(-d) F(tau) not increasing beyond tau={taus[decreasing[-1]]:.3g} "
            "within the sampled range"
        )
    R_mono = taus[decreasing[-1] + 1] if len(decreasing) else taus[0]
    us = np.linspace(max(10.0, 2.0 * R_mono), 1e5, 2001)
    vals = F(us)
    second = vals[2:] - 2.0 * vals[1:-1] + vals[:-2]
    if not np.all(second >= -1e-9 * np.abs(vals[1:-1])):
        raise ParameterError("F is not convex on the sampled range")
    crit = integral_criterion(F, params)
    return crit.finite, crit
