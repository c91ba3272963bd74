"""Nonnegative measures: grid densities, atoms, constants, singular profiles.

An :class:`InitialMeasure` is the sum of a cell-averaged grid density, a
finite list of point masses, and a constant background.  When the density
discretizes one of the optimal singular profiles, the measure keeps the
profile descriptor so that ball masses and related integrals are computed by
radial quadrature of the exact formula instead of from the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad

from .kernel import FracParams, GridFunction, ball_volume, sphere_area

__all__ = [
    "SingularProfile",
    "InitialMeasure",
    "SingularPointError",
    "profile_value",
    "ball_mass",
    "profile_ball_mass",
    "sup_ball_mass",
    "lattice_scan",
    "radial_ball_integral",
    "save_measure",
    "load_measure",
]

SINGULAR_CASES = ("critical-borderline", "critical-log", "supercritical")


class SingularPointError(ValueError):
    """Profile evaluated exactly at its singular point."""


@dataclass(frozen=True)
class SingularProfile:
    """One of the three optimal singular initial profiles, truncated to a ball.

    The value is ``coefficient * r^{-a} |log r|^{-b} [log|log r|]^{-g}`` for
    ``r = |x| < cutoff`` plus the constant ``background`` everywhere, with the
    exponents determined by the regime:

    =====================  ============  ==================  =========
    case                   a             b                   g
    =====================  ============  ==================  =========
    critical-borderline    N             1                   N/theta+1
    critical-log           N             N(q+1)/theta + 1    0
    supercritical          theta/(p-1)   q/(p-1)             0
    =====================  ============  ==================  =========
    """

    case: str
    params: FracParams
    p: float
    q: float
    coefficient: float
    cutoff: float
    background: float = 0.0

    def __post_init__(self):
        if self.case not in SINGULAR_CASES:
            raise ValueError(f"unknown singular case {self.case!r}")
        if not (0.0 < self.cutoff <= 1.0):
            raise ValueError(f"cutoff must lie in (0, 1], got {self.cutoff}")
        if self.coefficient < 0.0 or self.background < 0.0:
            raise ValueError("coefficient and background must be nonnegative")
        if self.case == "supercritical" and self.p <= self.params.p_theta:
            raise ValueError("supercritical profile requires p > p_theta")
        if self.case == "critical-log" and self.q <= -1.0:
            raise ValueError("critical-log profile requires q > -1")
        a, b, g = self.exponents
        if b != 0.0 and self.cutoff >= 1.0:
            # |log r| must stay positive on the support
            raise ValueError("profiles with a log factor need cutoff < 1")
        if g != 0.0 and self.cutoff >= math.exp(-1.0):
            # log|log r| must stay positive on the support
            raise ValueError(
                "critical-borderline profile needs cutoff < 1/e so the "
                "iterated logarithm is positive on the support"
            )

    @property
    def exponents(self):
        """(power, log, loglog) exponents (a, b, g) of the singular factor."""
        N, theta = self.params.N, self.params.theta
        if self.case == "critical-borderline":
            return (float(N), 1.0, N / theta + 1.0)
        if self.case == "critical-log":
            return (float(N), N * (self.q + 1.0) / theta + 1.0, 0.0)
        return (theta / (self.p - 1.0), self.q / (self.p - 1.0), 0.0)

    def singular_value(self, r):
        """Value of the singular factor at radius r (no background), 0 beyond cutoff."""
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if np.any(r == 0.0):
            raise SingularPointError(
                "profile evaluated at the singular point; integrate across the cell"
            )
        a, b, g = self.exponents
        out = np.zeros_like(r)
        inside = r < self.cutoff
        ri = r[inside]
        with np.errstate(over="ignore"):
            v = self.coefficient * ri ** (-a)
            if b != 0.0:
                v = v * np.abs(np.log(ri)) ** (-b)
            if g != 0.0:
                v = v * np.log(np.abs(np.log(ri))) ** (-g)
        out[inside] = np.minimum(v, 1e300)
        return float(out[0]) if scalar else out

    def value(self, x):
        """Profile value at a point (background included)."""
        r = np.sqrt(np.sum(np.atleast_1d(np.asarray(x, dtype=float)) ** 2))
        return self.singular_value(r) + self.background

    def formula(self) -> str:
        """Human-readable rendering of the singular factor."""
        from fractions import Fraction

        def fmt(e):
            f = Fraction(e).limit_denominator(10**6)
            return str(f) if f.denominator <= 64 else f"{float(e):g}"

        a, b, g = self.exponents
        s = f"|x|^(-{fmt(a)})"
        if b != 0.0:
            s += f" |log|x||^(-{fmt(b)})"
        if g != 0.0:
            s += f" [log|log|x||]^(-{fmt(g)})"
        return s


def profile_value(profile: SingularProfile, x):
    """coefficient * (case formula) * chi_{B(0,R)}(x) + background."""
    return profile.value(x)


# ---------------------------------------------------------------------------
# exact radial integrals of (functions of) singular profiles


def _shell_fraction(r, d, sigma, N):
    """Fraction of the sphere of radius r (centred 0) lying inside B(z, sigma), |z| = d."""
    r = np.asarray(r, dtype=float)
    if N == 1:
        return 0.5 * (
            (np.abs(r - d) <= sigma).astype(float) + (r + d <= sigma).astype(float)
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        cosphi = (r**2 + d**2 - sigma**2) / (2.0 * r * d)
    cosphi = np.clip(cosphi, -1.0, 1.0)
    if N == 2:
        return np.arccos(cosphi) / math.pi
    return 0.5 * (1.0 - cosphi)


def radial_ball_integral(fn, N: int, d: float, sigma: float, r_support: float):
    """Integral of fn(|y|) over the ball B(z, sigma), |z| = d, fn supported in [0, r_support].

    fn may blow up at the origin provided fn(r) r^{N-1} is integrable; the
    full-sphere inner part is handled on a logarithmic axis so that the
    singularity is resolved adaptively.
    """
    omega = sphere_area(N)
    d = float(abs(d))
    hi = min(d + sigma, r_support)
    total = 0.0
    inner = min(sigma - d, r_support) if d < sigma else 0.0
    if inner > 0.0:
        # full-sphere part on u = -log r, decaying integrand; fn(r) r^{N-1}
        # is integrable so the underflow region contributes nothing
        def log_axis(u):
            r = math.exp(-u)
            if r == 0.0:
                return 0.0
            return omega * fn(r) * math.exp(-N * u)

        u0 = -math.log(inner)
        val, _ = quad(log_axis, u0, np.inf, limit=400)
        total += val
    lo = max(d - sigma, inner, 0.0)
    if hi > lo:
        val, _ = quad(
            lambda r: omega
            * fn(r)
            * r ** (N - 1)
            * _shell_fraction(np.asarray(r), d, sigma, N),
            lo,
            hi,
            limit=400,
        )
        total += val
    return total


def _profile_full_mass(profile: SingularProfile, rho: float) -> float:
    """Mass of the singular part over the centred ball B(0, rho), closed form when exact."""
    N = profile.params.N
    omega = sphere_area(N)
    rho = min(rho, profile.cutoff)
    if rho <= 0.0:
        return 0.0
    a, b, g = profile.exponents
    c = profile.coefficient
    if g > 0.0:  # a = N, b = 1: iterated-log antiderivative
        return omega * c * math.log(-math.log(rho)) ** (1.0 - g) / (g - 1.0)
    if a == N and b > 1.0 and g == 0.0:
        return omega * c * (-math.log(rho)) ** (1.0 - b) / (b - 1.0)
    if b == 0.0 and a < N:
        return omega * c * rho ** (N - a) / (N - a)
    return radial_ball_integral(profile.singular_value, N, 0.0, rho, rho)


def profile_ball_mass(profile: SingularProfile, z, sigma: float) -> float:
    """Singular-part mass of B(z, sigma) by exact radial quadrature (no background)."""
    d = float(np.sqrt(np.sum(np.atleast_1d(np.asarray(z, dtype=float)) ** 2)))
    R = profile.cutoff
    if d - sigma >= R:
        return 0.0
    if d == 0.0:
        return _profile_full_mass(profile, min(sigma, R))
    total = 0.0
    inner = min(sigma - d, R) if d < sigma else 0.0
    if inner > 0.0:
        total += _profile_full_mass(profile, inner)
    lo = max(d - sigma, inner, 0.0)
    hi = min(d + sigma, R)
    if hi > lo:
        omega = sphere_area(profile.params.N)
        N = profile.params.N
        val, _ = quad(
            lambda r: omega
            * profile.singular_value(r)
            * r ** (N - 1)
            * _shell_fraction(np.asarray(r), d, sigma, N),
            lo,
            hi,
            limit=400,
        )
        total += val
    return total


# ---------------------------------------------------------------------------
# measures


@dataclass
class InitialMeasure:
    """Grid density + atoms + constant background, optionally profile-backed."""

    density: GridFunction | None = None
    atoms: list = field(default_factory=list)
    background: float = 0.0
    profile: SingularProfile | None = None

    def __post_init__(self):
        if self.background < 0.0:
            raise ValueError("background must be nonnegative")
        for _, mass in self.atoms:
            if mass < 0.0:
                raise ValueError("atom masses must be nonnegative")
        if self.density is not None and np.any(self.density.values < 0.0):
            raise ValueError("density values must be nonnegative")

    @property
    def ndim(self) -> int:
        if self.density is not None:
            return self.density.ndim
        if self.profile is not None:
            return self.profile.params.N
        if self.atoms:
            return np.ndim(self.atoms[0][0]) and len(np.atleast_1d(self.atoms[0][0])) or 1
        return 1

    def scaled(self, c: float) -> "InitialMeasure":
        """The measure c * mu (background included)."""
        if c < 0.0:
            raise ValueError("scale factor must be nonnegative")
        density = None
        if self.density is not None:
            density = self.density.like(self.density.values * c, background=0.0)
        profile = None
        if self.profile is not None:
            profile = replace(
                self.profile,
                coefficient=self.profile.coefficient * c,
                background=self.profile.background * c,
            )
        return InitialMeasure(
            density=density,
            atoms=[(loc, m * c) for loc, m in self.atoms],
            background=self.background * c,
            profile=profile,
        )

    def translated(self, shift) -> "InitialMeasure":
        """Grid-aligned translation: atoms move exactly, density shifts with zero fill."""
        shift_vec = np.atleast_1d(np.asarray(shift, dtype=float))
        density = self.density
        if density is not None:
            steps = shift_vec / density.dx
            ints = np.rint(steps).astype(int)
            if not np.allclose(steps, ints, atol=1e-9):
                raise ValueError("translation must be grid-aligned")
            vals = density.values
            for ax, k in enumerate(ints):
                vals = _shift_zero_fill(vals, int(k), ax)
            density = density.like(vals)
        atoms = [
            (
                (np.atleast_1d(np.asarray(loc, float)) + shift_vec)
                if np.ndim(loc)
                else float(loc) + float(shift_vec[0]),
                m,
            )
            for loc, m in self.atoms
        ]
        if self.profile is not None:
            raise ValueError("profile-backed measures only translate via their grid")
        return InitialMeasure(density=density, atoms=atoms, background=self.background)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def dirac(mass: float = 1.0, location=0.0) -> "InitialMeasure":
        return InitialMeasure(atoms=[(location, mass)])

    @staticmethod
    def constant(K: float) -> "InitialMeasure":
        return InitialMeasure(background=K)

    @staticmethod
    def from_density(density: GridFunction, background: float = 0.0) -> "InitialMeasure":
        return InitialMeasure(density=density, background=background)

    @staticmethod
    def from_profile(
        profile: SingularProfile, halfwidth: float, points: int
    ) -> "InitialMeasure":
        """Discretize a singular profile to cell averages.

        Cells meeting the singular point store the exact cell integral
        (radial quadrature; equal-volume ball for N >= 2), nearby cells are
        integrated cell by cell, and far cells are point-sampled.  The
        profile descriptor is kept so that ball masses stay exact.
        """
        N = profile.params.N
        grid = GridFunction.zeros(N, halfwidth, points)
        dx = grid.dx
        r = grid.radii_from()
        vals = np.zeros_like(r)
        far = r >= 3.0 * dx
        vals[far] = profile.singular_value(r[far])
        near_idx = np.argwhere(~far)
        cellvol = grid.cell_volume
        ax = grid.axis()
        for idx in near_idx:
            center = np.array([ax[i] for i in idx])
            dist = float(np.sqrt(np.sum(center**2)))
            if dist < 0.5 * dx:  # the singular cell
                if N == 1:
                    lo, hi = center[0] - dx / 2.0, center[0] + dx / 2.0
                    m = 0.5 * (
                        _profile_full_mass(profile, abs(lo))
                        + _profile_full_mass(profile, abs(hi))
                    )
                else:
                    # equal-volume ball centred at the origin
                    rho = (cellvol / ball_volume(N)) ** (1.0 / N)
                    m = _profile_full_mass(profile, rho)
                vals[tuple(idx)] = m / cellvol
            else:
                if N == 1:
                    lo, hi = center[0] - dx / 2.0, center[0] + dx / 2.0
                    if lo * hi >= 0.0:
                        a, b = sorted((abs(lo), abs(hi)))
                        m = _profile_full_mass(profile, b) - _profile_full_mass(profile, a)
                        m *= 0.5
                    else:
                        m = 0.5 * (
                            _profile_full_mass(profile, abs(lo))
                            + _profile_full_mass(profile, abs(hi))
                        )
                    vals[tuple(idx)] = m / cellvol
                else:
                    # subsample the cell away from the exact singular point
                    sub = _subsample_offsets(N, 5) * dx
                    pts = center[None, :] + sub
                    rr = np.sqrt(np.sum(pts**2, axis=1))
                    rr = np.maximum(rr, 1e-300)
                    vals[tuple(idx)] = float(np.mean(profile.singular_value(rr)))
        return InitialMeasure(
            density=grid.like(vals),
            background=profile.background,
            profile=profile,
        )


def _shift_zero_fill(arr: np.ndarray, k: int, axis: int) -> np.ndarray:
    out = np.zeros_like(arr)
    if k == 0:
        return arr.copy()
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if k > 0:
        src[axis] = slice(0, arr.shape[axis] - k)
        dst[axis] = slice(k, arr.shape[axis])
    else:
        src[axis] = slice(-k, arr.shape[axis])
        dst[axis] = slice(0, arr.shape[axis] + k)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _subsample_offsets(N: int, per_axis: int) -> np.ndarray:
    """Cell-relative subsample offsets in (-1/2, 1/2)^N, shape (per_axis^N, N)."""
    u = (np.arange(per_axis) + 0.5) / per_axis - 0.5
    grids = np.meshgrid(*([u] * N), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


# ---------------------------------------------------------------------------
# ball masses


def _grid_ball_mass(density: GridFunction, z, sigma: float) -> float:
    """Cell-clipped mass of the grid density inside B(z, sigma)."""
    N = density.ndim
    z = np.atleast_1d(np.asarray(z, dtype=float))
    dx = density.dx
    if N == 1:
        ax = density.axis()
        lo = np.maximum(ax - dx / 2.0, z[0] - sigma)
        hi = np.minimum(ax + dx / 2.0, z[0] + sigma)
        overlap = np.clip(hi - lo, 0.0, dx)
        return float(np.sum(density.values * overlap))
    r = density.radii_from(z)
    half_diag = 0.5 * dx * math.sqrt(N)
    full = r <= sigma - half_diag
    none = r >= sigma + half_diag
    boundary = ~(full | none)
    total = float(np.sum(density.values[full])) * density.cell_volume
    if np.any(boundary):
        idx = np.argwhere(boundary)
        ax = density.axis()
        centers = np.stack([ax[idx[:, k]] for k in range(N)], axis=1)
        sub = _subsample_offsets(N, 5) * dx
        pts = centers[:, None, :] + sub[None, :, :]
        inside = np.sum((pts - z[None, None, :]) ** 2, axis=2) <= sigma**2
        frac = inside.mean(axis=1)
        total += float(np.sum(density.values[boundary] * frac)) * density.cell_volume
    return total


def ball_mass(mu: InitialMeasure, z, sigma: float) -> float:
    """mu(B(z, sigma)): density by cell-clipped/exact quadrature, atoms, background."""
    if sigma <= 0.0:
        raise ValueError(f"ball radius must be positive, got {sigma}")
    z_vec = np.atleast_1d(np.asarray(z, dtype=float))
    N = mu.ndim
    total = mu.background * ball_volume(N, sigma)
    for loc, mass in mu.atoms:
        loc_vec = np.atleast_1d(np.asarray(loc, dtype=float))
        if np.sum((loc_vec - z_vec) ** 2) <= sigma**2:
            total += mass
    if mu.profile is not None:
        total += profile_ball_mass(mu.profile, z_vec, sigma)
    elif mu.density is not None:
        total += _grid_ball_mass(mu.density, z_vec, sigma)
    return total


def lattice_scan(fn, N: int, search_halfwidth: float, pitch: float, radial: bool = False):
    """Maximize fn(center) over a lattice, one refinement pass at pitch/4.

    ``radial=True`` deduplicates centers by their distance to the origin
    (valid when fn depends only on |center|).  Returns (best, argmax).
    """
    cache = {}

    def value_at(center):
        if radial:
            key = round(float(np.sqrt(np.sum(center**2))) / pitch * 4096.0)
            if key not in cache:
                cache[key] = fn(center)
            return cache[key]
        return fn(center)

    def scan(points):
        best, best_c = -np.inf, None
        for c in points:
            m = value_at(c)
            if m > best:
                best, best_c = m, c
        return best, best_c

    ax = np.arange(-search_halfwidth, search_halfwidth + pitch / 2.0, pitch)
    grids = np.meshgrid(*([ax] * N), indexing="ij")
    coarse = np.stack([g.ravel() for g in grids], axis=1)
    best, best_c = scan(coarse)
    offs = np.arange(-pitch, pitch + pitch / 8.0, pitch / 4.0)
    grids = np.meshgrid(*([offs] * N), indexing="ij")
    fine = np.stack([g.ravel() for g in grids], axis=1) + best_c[None, :]
    ref, ref_c = scan(fine)
    if ref > best:
        best, best_c = ref, ref_c
    return best, best_c


def sup_ball_mass(mu: InitialMeasure, sigma: float, search_halfwidth: float, pitch=None):
    """Maximize the ball mass over a lattice of centres, one refinement pass.

    The lattice pitch defaults to sigma/4; the refinement rescans around the
    coarse argmax at a quarter of the pitch.  The supremum over all of R^N is
    reduced to the search box: callers must choose it to cover the support of
    the non-constant part (the constant background contributes identically
    everywhere).  Returns (mass, centre).
    """
    if pitch is None:
        pitch = sigma / 4.0
    N = mu.ndim
    radial = mu.profile is not None and not mu.atoms
    best, best_c = lattice_scan(
        lambda c: ball_mass(mu, c, sigma), N, search_halfwidth, pitch, radial=radial
    )
    return best, (float(best_c[0]) if N == 1 else np.asarray(best_c))


# ---------------------------------------------------------------------------
# serialization


def save_measure(mu: InitialMeasure, path) -> None:
    """Structured-text serialization; the density payload goes to a sibling CSV."""
    import os

    lines = ["[measure]", f"background = {mu.background!r}", f"ndim = {mu.ndim}"]
    if mu.atoms:
        lines.append("[atoms]")
        for loc, mass in mu.atoms:
            loc_vec = np.atleast_1d(np.asarray(loc, dtype=float))
            lines.append(" ".join(repr(float(v)) for v in loc_vec) + f" {mass!r}")
    if mu.profile is not None:
        pr = mu.profile
        lines += [
            "[profile]",
            f"case = {pr.case}",
            f"N = {pr.params.N}",
            f"theta = {pr.params.theta!r}",
            f"p = {pr.p!r}",
            f"q = {pr.q!r}",
            f"coefficient = {pr.coefficient!r}",
            f"cutoff = {pr.cutoff!r}",
            f"background = {pr.background!r}",
        ]
    if mu.density is not None:
        payload = str(path) + ".density.csv"
        lines += [
            "[density]",
            f"halfwidth = {mu.density.halfwidth!r}",
            f"points = {mu.density.points}",
            f"file = {os.path.basename(payload)}",
        ]
        np.savetxt(payload, mu.density.values.ravel(), header="value", comments="# ")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_measure(path) -> InitialMeasure:
    import os

    sections = {}
    current = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                current = line.strip("[]")
                sections[current] = []
            else:
                sections[current].append(line)

    def as_dict(rows):
        return dict(
            (k.strip(), v.strip()) for k, v in (row.split("=", 1) for row in rows)
        )

    meas = as_dict(sections.get("measure", []))
    background = float(meas.get("background", 0.0))
    ndim = int(meas.get("ndim", 1))
    atoms = []
    for row in sections.get("atoms", []):
        parts = [float(tok) for tok in row.split()]
        loc = parts[0] if len(parts) == 2 else tuple(parts[:-1])
        atoms.append((loc, parts[-1]))
    profile = None
    if "profile" in sections:
        pr = as_dict(sections["profile"])
        profile = SingularProfile(
            case=pr["case"],
            params=FracParams(int(pr["N"]), float(pr["theta"])),
            p=float(pr["p"]),
            q=float(pr["q"]),
            coefficient=float(pr["coefficient"]),
            cutoff=float(pr["cutoff"]),
            background=float(pr["background"]),
        )
    density = None
    if "density" in sections:
        dn = as_dict(sections["density"])
        points = int(dn["points"])
        payload = os.path.join(os.path.dirname(str(path)), dn["file"])
        values = np.loadtxt(payload).reshape((points,) * ndim)
        density = GridFunction(float(dn["halfwidth"]), points, values)
    return InitialMeasure(
        density=density, atoms=atoms, background=background, profile=profile
    )
