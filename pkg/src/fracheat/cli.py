"""Command-line surface and experiment orchestration.

Subcommands: kernel, classify, profile, solve, sweep, verify-super,
check-conditions.  Experiments are driven by a flat sectioned INI config;
every ``--set section.key=value`` flag overrides the corresponding key.
Emitted CSVs carry a header row and a comment line with the sha256 of the
fully resolved configuration.  Exit codes: 0 ok/converged, 1 usage,
2 diverged, 3 inconclusive, 4 construction/hypothesis failure.

Environment: FRACHEAT_OUTDIR sets the default output directory,
FRACHEAT_WORKERS the sweep worker count; flags override both.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys

import numpy as np

from .classify import (
    classify,
    necessary_envelope,
    profile_for_case,
    sufficient_check_A,
    sufficient_check_B,
    sufficient_check_C,
)
from .kernel import (
    FracParams,
    KernelError,
    build_profile,
    chapman_kolmogorov_check,
    export_table,
    kernel_bound_ratio,
    normalization,
)
from .measures import InitialMeasure, SingularProfile
from .nonlinearity import Nonlinearity, ParameterError
from .solver import SolverConfig, solve
from .supersolution import (
    ConstructionError,
    build_supersolution,
    mollify_measure,
    verify_supersolution,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_INCONCLUSIVE = 3
EXIT_CONSTRUCTION = 4


class _Parser(argparse.ArgumentParser):
    """ArgumentParser with the stable usage exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# configuration plumbing

DEFAULTS = {
    "problem": {"n": "1", "theta": "2.0", "p": "2.0", "q": "0.0", "l": "1.0"},
    "initial": {
        "kind": "profile",  # profile | uniform | dirac | zero
        "coefficient": "1.0",
        "cutoff": "0.25",
        "background": "0.0",
        "value": "1.0",  # uniform value
        "mass": "1.0",  # dirac mass
        "atoms": "",
    },
    "solver": {
        "halfwidth": "4.0",
        "points": "256",
        "t": "0.1",
        "m": "256",
        "trunc_m": "1e30",
        "mollify_n": "64",
        "max_sweeps": "120",
        "u_cap": "1e8",
        "conv_tol": "1e-6",
    },
    "sweep": {"c_lo": "0.05", "c_hi": "5.0", "tol": "0.1", "workers": "", "scan": "0"},
    "super": {
        "family": "A",
        "r": "1.0",
        "l": "2.0",
        "alpha": "2.0",
        "t": "0.01",
        "steps": "64",
        "mollify_n": "16",
    },
    "conditions": {
        "k_lo": "3",
        "k_hi": "12",
        "alpha_b": "0.25",
        "alpha_c": "2.0",
        "epsilon": "1.0",
        "search_halfwidth": "0.5",
    },
    "output": {"dir": "", "csv": "true", "svg": "false"},
}


def load_config(path=None, overrides=()):
    cfg = configparser.ConfigParser()
    cfg.read_dict(DEFAULTS)
    if path:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        cfg.read(path)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValueError(f"override must look like section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        section, name = key.split(".", 1)
        if not cfg.has_section(section):
            cfg.add_section(section)
        cfg.set(section.strip(), name.strip(), value.strip())
    return cfg


def config_hash(cfg) -> str:
    lines = []
    for section in sorted(cfg.sections()):
        for key, value in sorted(cfg.items(section)):
            lines.append(f"{section}.{key}={value}")
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


def out_dir(cfg, args) -> str:
    d = getattr(args, "out", None) or cfg.get("output", "dir", fallback="") or os.environ.get(
        "FRACHEAT_OUTDIR", "."
    )
    os.makedirs(d, exist_ok=True)
    return d


def write_csv(path, header, rows, cfg=None):
    with open(path, "w") as fh:
        if cfg is not None:
            fh.write(f"# config-sha256={config_hash(cfg)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_svg(path, xs, ys, xlabel, ylabel, logy=False):
    """Decorative polyline plot; the CSV next to it is the source of truth."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if logy:
        ys = np.log10(np.maximum(ys, 1e-300))
    W, H, pad = 640, 400, 50
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    px = pad + (xs - x0) / (x1 - x0) * (W - 2 * pad)
    py = H - pad - (ys - y0) / (y1 - y0) * (H - 2 * pad)
    points = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
    with open(path, "w") as fh:
        fh.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">'
            f'<rect width="{W}" height="{H}" fill="white"/>'
            f'<polyline points="{points}" fill="none" stroke="steelblue" stroke-width="1.5"/>'
            f'<text x="{W//2}" y="{H-12}" text-anchor="middle" font-size="12">{xlabel}</text>'
            f'<text x="14" y="{H//2}" font-size="12" transform="rotate(-90 14 {H//2})" '
            f'text-anchor="middle">{ylabel}{" (log10)" if logy else ""}</text>'
            "</svg>"
        )


def _problem(cfg):
    params = FracParams(cfg.getint("problem", "n"), cfg.getfloat("problem", "theta"))
    p = cfg.getfloat("problem", "p")
    q = cfg.getfloat("problem", "q")
    L = cfg.getfloat("problem", "l")
    return params, Nonlinearity(p=p, q=q, L=L), p, q


def _initial_measure(cfg, params, p, q) -> InitialMeasure:
    kind = cfg.get("initial", "kind")
    halfwidth = cfg.getfloat("solver", "halfwidth")
    points = cfg.getint("solver", "points")
    background = cfg.getfloat("initial", "background")
    atoms = []
    raw = cfg.get("initial", "atoms").strip()
    if raw:
        for tok in raw.split(";"):
            loc, mass = tok.split(":")
            atoms.append((float(loc), float(mass)))
    if kind == "zero":
        return InitialMeasure(background=background, atoms=atoms)
    if kind == "uniform":
        return InitialMeasure(
            background=background + cfg.getfloat("initial", "value"), atoms=atoms
        )
    if kind == "dirac":
        return InitialMeasure(
            atoms=atoms + [(0.0, cfg.getfloat("initial", "mass"))],
            background=background,
        )
    if kind == "profile":
        label = classify(params, p, q)
        if not label.singular:
            raise ConstructionError(
                "initial",
                f"regime {label.regime} has no singular profile; use kind=uniform/dirac",
            )
        prof = profile_for_case(
            label.regime,
            params,
            p,
            q,
            coefficient=cfg.getfloat("initial", "coefficient"),
            cutoff=cfg.getfloat("initial", "cutoff"),
            background=background,
        )
        mu = InitialMeasure.from_profile(prof, halfwidth, points)
        if atoms:
            mu = InitialMeasure(
                density=mu.density, atoms=atoms, background=mu.background, profile=None
            )
        return mu
    raise ValueError(f"unknown initial kind {kind!r}")


def _solver_config(cfg) -> SolverConfig:
    return SolverConfig(
        halfwidth=cfg.getfloat("solver", "halfwidth"),
        points=cfg.getint("solver", "points"),
        T=cfg.getfloat("solver", "t"),
        M=cfg.getint("solver", "m"),
        trunc_m=cfg.getfloat("solver", "trunc_m"),
        mollify_n=cfg.getint("solver", "mollify_n"),
        max_sweeps=cfg.getint("solver", "max_sweeps"),
        u_cap=cfg.getfloat("solver", "u_cap"),
        conv_tol=cfg.getfloat("solver", "conv_tol"),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_kernel(args) -> int:
    cfg = load_config(args.config, args.set or [])
    if args.N is not None:
        cfg.set("problem", "n", str(args.N))
    if args.theta is not None:
        cfg.set("problem", "theta", str(args.theta))
    params = FracParams(cfg.getint("problem", "n"), cfg.getfloat("problem", "theta"))
    profile = build_profile(params)
    d = out_dir(cfg, args)
    table_path = os.path.join(d, f"kernel_N{params.N}_theta{params.theta:g}.csv")
    export_table(profile, table_path)
    print(f"kernel table: {table_path} ({profile.evaluation_mode})")
    if args.check:
        rows = []
        mass_err = abs(normalization(profile) - 1.0)
        rows.append(("normalization_error", mass_err, 1e-6, mass_err < 1e-6))
        ck = chapman_kolmogorov_check(params, 2.0, 1.0, halfwidth=500.0, points=2048)
        rows.append(("chapman_kolmogorov", ck, 1e-4, ck < 1e-4))
        if params.theta < 2.0:
            rats = []
            for t in np.geomspace(1e-2, 1.0, 7):
                rats.append(kernel_bound_ratio(params, np.linspace(0, 100, 200), t))
            rats = np.concatenate(rats)
            width = float(rats.max() / rats.min())
            rows.append(("bound_ratio_band_width", width, 1e2, width <= 1e2))
        report = os.path.join(d, "kernel_check.csv")
        write_csv(report, ("check", "value", "threshold", "pass"), rows, cfg)
        for name, value, threshold, ok in rows:
            print(f"  {name}: {value:.3e} (threshold {threshold:g}) -> {'pass' if ok else 'FAIL'}")
        if not all(r[3] for r in rows):
            return EXIT_CONSTRUCTION
    return EXIT_OK


def cmd_classify(args) -> int:
    params = FracParams(args.N, args.theta)
    label = classify(params, args.p, args.q)
    print(f"regime: {label.regime}")
    print(f"p_theta: {label.p_theta:g}")
    if label.singular:
        print(f"profile: {label.formula}")
    print(f"criterion: {label.criterion}")
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = load_config(args.config, args.set or [])
    params, _, p, q = _problem(cfg)
    label = classify(params, p, q)
    if not label.singular:
        print(f"regime {label.regime}: no singular profile ({label.criterion})")
        return EXIT_OK
    prof = profile_for_case(
        label.regime,
        params,
        p,
        q,
        coefficient=cfg.getfloat("initial", "coefficient"),
        cutoff=cfg.getfloat("initial", "cutoff"),
        background=cfg.getfloat("initial", "background"),
    )
    d = out_dir(cfg, args)
    radii = np.geomspace(1e-6, prof.cutoff, 200)
    rows = [(float(r), float(prof.singular_value(r)) + prof.background) for r in radii]
    path = os.path.join(d, "profile.csv")
    write_csv(path, ("radius", "value"), rows, cfg)
    from .measures import profile_ball_mass

    sig_rows = []
    for k in range(cfg.getint("conditions", "k_lo"), cfg.getint("conditions", "k_hi") + 1):
        s = 2.0**-k
        sig_rows.append((s, profile_ball_mass(prof, 0.0, s)))
    mass_path = os.path.join(d, "profile_ball_mass.csv")
    write_csv(mass_path, ("sigma", "mass"), sig_rows, cfg)
    print(f"profile: {label.formula}")
    print(f"wrote {path}, {mass_path}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = load_config(args.config, args.set or [])
    params, F, p, q = _problem(cfg)
    mu = _initial_measure(cfg, params, p, q)
    scfg = _solver_config(cfg)
    outcome = solve(mu, F, scfg, params)
    d = out_dir(cfg, args)
    traj = outcome.trajectory
    write_csv(
        os.path.join(d, "supnorm_history.csv"),
        ("sweep", "sup_norm"),
        list(enumerate(traj.sup_history)),
        cfg,
    )
    write_csv(
        os.path.join(d, "supnorm_by_time.csv"),
        ("time", "sup_norm"),
        [(float(traj.times[j]), traj.slice_sup(j)) for j in range(len(traj.times))],
        cfg,
    )
    final = traj.slice(len(traj.times) - 1)
    ax = final.axis()
    write_csv(
        os.path.join(d, "final_snapshot.csv"),
        ("x", "u"),
        [
            (float(ax[i]), float(final.values[i] + final.background))
            for i in range(final.points)
        ]
        if params.N == 1
        else [("flat_index", "see npy")],
        cfg,
    )
    summary = {
        "verdict": outcome.verdict,
        "sweeps": outcome.sweeps,
        "residual": outcome.residual,
        "final_sup": traj.final_sup(),
        "divergence": outcome.divergence,
        "warnings": traj.warnings,
        "config_sha256": config_hash(cfg),
    }
    with open(os.path.join(d, "solve_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if cfg.getboolean("output", "svg"):
        write_svg(
            os.path.join(d, "supnorm_by_time.svg"),
            traj.times,
            [traj.slice_sup(j) for j in range(len(traj.times))],
            "time",
            "sup norm",
        )
    print(f"verdict: {outcome.verdict} (sweeps={outcome.sweeps}, final sup={traj.final_sup():.6g})")
    if outcome.verdict == "converged":
        print(f"duhamel residual: {outcome.residual:.3e}")
        return EXIT_OK
    if outcome.verdict == "diverged":
        j, sweep, supn = outcome.divergence
        print(f"diverged at time index {j}, sweep {sweep} (sup {supn:.3g})")
        return EXIT_DIVERGED
    return EXIT_INCONCLUSIVE


def _sweep_solve(payload):
    mu_base, F, scfg, params, c = payload
    outcome = solve(mu_base.scaled(c), F, scfg, params)
    return c, outcome.verdict, outcome.sweeps, outcome.trajectory.sup_history[-1]


def cmd_sweep(args) -> int:
    from dataclasses import replace as _replace

    cfg = load_config(args.config, args.set or [])
    params, F, p, q = _problem(cfg)
    cfg.set("initial", "coefficient", "1.0")
    mu_base = _initial_measure(cfg, params, p, q)
    scfg = _solver_config(cfg)
    c_lo = cfg.getfloat("sweep", "c_lo")
    c_hi = cfg.getfloat("sweep", "c_hi")
    tol = cfg.getfloat("sweep", "tol")
    workers = cfg.get("sweep", "workers") or os.environ.get("FRACHEAT_WORKERS", "1")
    workers = int(workers)
    scan = cfg.getint("sweep", "scan")
    d = out_dir(cfg, args)

    records = []

    def run(c, budget_factor=1):
        sc = (
            scfg
            if budget_factor == 1
            else _replace(scfg, max_sweeps=scfg.max_sweeps * budget_factor)
        )
        c_, verdict, sweeps, supn = _sweep_solve((mu_base, F, sc, params, c))
        records.append((c_, verdict, sweeps, supn))
        return verdict

    points = [c_lo, c_hi]
    if scan > 0:
        points = list(np.geomspace(c_lo, c_hi, scan + 2))
    if workers > 1 and len(points) > 2:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(
                _sweep_solve, [(mu_base, F, scfg, params, c) for c in points]
            ):
                records.append(rec)
    else:
        for c in points:
            run(c)
    by_c = {c: v for c, v, _, _ in records}
    if by_c[c_lo] != "converged" or by_c[c_hi] != "diverged":
        print(
            f"no dichotomy in range: solve({c_lo})={by_c[c_lo]}, solve({c_hi})={by_c[c_hi]}",
            file=sys.stderr,
        )
        _write_sweep(d, cfg, records, None, None)
        return EXIT_CONSTRUCTION
    lo = max(c for c, v in by_c.items() if v == "converged")
    hi = min(c for c, v in by_c.items() if v == "diverged")
    anomaly = None
    while hi / lo > 1.0 + tol:
        mid = math.sqrt(lo * hi)
        verdict = run(mid)
        if verdict == "inconclusive":
            verdict = run(mid, budget_factor=2)
        if verdict == "converged":
            lo = mid
        elif verdict == "diverged":
            hi = mid
        else:
            anomaly = f"inconclusive at c={mid:g} after doubled sweep budget"
            break
    # monotonicity audit over everything observed
    conv = [c for c, v, _, _ in records if v == "converged"]
    div = [c for c, v, _, _ in records if v == "diverged"]
    if conv and div and max(conv) > min(div):
        anomaly = (
            f"non-monotone verdicts: converged at c={max(conv):g} "
            f"above diverged at c={min(div):g}"
        )
    _write_sweep(d, cfg, records, lo, hi)
    if anomaly:
        print(f"anomaly: {anomaly}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    print(f"bracket: [{lo:.6g}, {hi:.6g}] ratio {hi / lo:.4f}")
    return EXIT_OK


def _write_sweep(d, cfg, records, lo, hi):
    write_csv(
        os.path.join(d, "sweep.csv"),
        ("coefficient", "verdict", "sweeps", "max_sup"),
        sorted(records),
        cfg,
    )
    with open(os.path.join(d, "sweep_summary.json"), "w") as fh:
        json.dump(
            {
                "bracket_lo": lo,
                "bracket_hi": hi,
                "ratio": (hi / lo) if (lo and hi) else None,
                "config_sha256": config_hash(cfg),
            },
            fh,
            indent=2,
        )
    if cfg.getboolean("output", "svg") and records:
        recs = sorted(records)
        write_svg(
            os.path.join(d, "sweep.svg"),
            [math.log10(c) for c, *_ in recs],
            [s for *_, s in recs],
            "log10 coefficient",
            "max sup-norm",
            logy=True,
        )


def cmd_verify_super(args) -> int:
    cfg = load_config(args.config, args.set or [])
    params, F, p, q = _problem(cfg)
    mu = _initial_measure(cfg, params, p, q)
    family = cfg.get("super", "family").upper()
    halfwidth = cfg.getfloat("solver", "halfwidth")
    points = cfg.getint("solver", "points")
    if mu.atoms:
        mu = mollify_measure(
            mu, 2.0 / cfg.getint("super", "mollify_n"), halfwidth, points, params
        )
    w = build_supersolution(
        family,
        mu,
        F,
        params,
        halfwidth,
        points,
        R=cfg.getfloat("super", "r"),
        L=cfg.getfloat("super", "l"),
        alpha=cfg.getfloat("super", "alpha"),
    )
    rep = verify_supersolution(
        w, mu, F, params, T=cfg.getfloat("super", "t"), steps=cfg.getint("super", "steps")
    )
    d = out_dir(cfg, args)
    write_csv(
        os.path.join(d, "verify_super.csv"),
        ("t", "max_violation", "rhs_sup", "w_sup"),
        rep.rows,
        cfg,
    )
    print(
        f"family {family}: max violation {rep.max_violation:.3e}, "
        f"tolerance {rep.tolerance:.3e} -> {'pass' if rep.passed else 'FAIL'}"
    )
    return EXIT_OK if rep.passed else EXIT_CONSTRUCTION


def cmd_check_conditions(args) -> int:
    cfg = load_config(args.config, args.set or [])
    params, F, p, q = _problem(cfg)
    mu = _initial_measure(cfg, params, p, q)
    label = classify(params, p, q)
    k_lo = cfg.getint("conditions", "k_lo")
    k_hi = cfg.getint("conditions", "k_hi")
    sigmas = [2.0**-k for k in range(k_lo, k_hi + 1)]
    shw = cfg.getfloat("conditions", "search_halfwidth")
    eps = cfg.getfloat("conditions", "epsilon")
    reports = [necessary_envelope(mu, params, p, q, sigmas, shw)]
    if label.regime in ("subcritical", "critical-integrable"):
        reports.append(sufficient_check_A(mu, shw))
    elif label.regime in ("critical-borderline", "critical-log"):
        reports.append(
            sufficient_check_B(
                mu, params, q, cfg.getfloat("conditions", "alpha_b"), eps, sigmas, shw
            )
        )
    else:
        reports.append(
            sufficient_check_C(
                mu, params, p, q, cfg.getfloat("conditions", "alpha_c"), eps, sigmas, shw
            )
        )
    d = out_dir(cfg, args)
    rows = []
    for rep in reports:
        for sigma, lhs, rhs, ratio, witness in rep.rows:
            rows.append((rep.condition, sigma, lhs, rhs, ratio, witness))
        print(
            f"{rep.condition}: worst ratio {rep.worst_ratio:.4g} at {rep.witness} "
            f"(constant {rep.constant:.4g}) -> {'satisfied' if rep.satisfied else 'violated'}"
        )
    write_csv(
        os.path.join(d, "conditions.csv"),
        ("condition", "sigma", "lhs", "rhs", "ratio", "witness"),
        rows,
        cfg,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="fracheat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="INI experiment config")
        sp.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override a config key (repeatable)",
        )
        sp.add_argument("--out", default=None, help="output directory")

    sp = sub.add_parser("kernel", help="kernel table and self-checks")
    common(sp)
    sp.add_argument("--N", type=int, default=None)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--check", action="store_true", help="run kernel self-checks")
    sp.set_defaults(fn=cmd_kernel)

    sp = sub.add_parser("classify", help="solvability regime of (N, theta, p, q)")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--theta", type=float, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--q", type=float, default=0.0)
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("profile", help="tabulate the optimal singular profile")
    common(sp)
    sp.set_defaults(fn=cmd_profile)

    sp = sub.add_parser("solve", help="run the Picard solver on configured data")
    common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("sweep", help="bisect the solvability threshold coefficient")
    common(sp)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("verify-super", help="verify a supersolution family")
    common(sp)
    sp.set_defaults(fn=cmd_verify_super)

    sp = sub.add_parser("check-conditions", help="necessary/sufficient condition scans")
    common(sp)
    sp.set_defaults(fn=cmd_check_conditions)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (KernelError, ParameterError, FileNotFoundError, ValueError) as exc:
        if isinstance(exc, ConstructionError):
            print(f"construction error: {exc}", file=sys.stderr)
            return EXIT_CONSTRUCTION
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConstructionError as exc:  # pragma: no cover - caught above
        print(f"construction error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION


if __name__ == "__main__":
    sys.exit(main())
