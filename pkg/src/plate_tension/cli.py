"""Command-line front end.

Subcommands: ball, torsion, twoball, grid-eig, grid-torsion, verify,
criteria, specfn. All flags are long-form. Output is deterministic for
fixed arguments and seed (JSON with sorted keys, CSV with 17 significant
digits). Exit codes: 0 success, 1 assertion or verification failure,
2 usage error. The environment variable PLATE_THREADS bounds the worker
count of parallel verification suites.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import ball as ball_mod
from . import gridsolver as grid
from . import rearrange, specfn, twoball


def _max_workers() -> int:
    try:
        n = int(os.environ.get("PLATE_THREADS", "1"))
    except ValueError:
        return 1
    return max(1, n)


def _parse_h(text: str) -> float:
    """Grid spacing given as a float or a fraction like 1/128."""
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _parse_tau_list(text: str) -> list[float]:
    items = [t for t in text.split(",") if t.strip()]
    return [float(t) for t in items]


def _emit(payload: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(payload)
        if not payload.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# subcommands


def cmd_ball(args) -> int:
    b = ball_mod.Ball(d=args.d, R=args.r)
    lam = (specfn.bessel_j_zero(b.nu, 1) / b.R) ** 2
    buckling = ball_mod.buckling_eigs(b, kappa_max=2, i_max=2)[0][0]
    record = {
        "d": args.d,
        "r": args.r,
        "tau": args.tau,
        "lambda": lam,
        "buckling_first": buckling,
        "grad_norm_sq": ball_mod.grad_norm_sq_u0(b),
    }
    if args.tau < 0:
        # only the rigidity extends below tau = 0 (up to the buckling loads)
        res = ball_mod.torsion_ball(b, args.tau)
        record.update(
            {
                "gamma": None,
                "alpha": None,
                "rigidity": res.rigidity,
                "status": res.status,
            }
        )
        if res.near_singular:
            record["warning"] = "tau is within 1e-8 of a radial buckling load"
    else:
        eig = ball_mod.plate_first_eig_ball(b, args.tau)
        record.update(
            {
                "gamma": eig.gamma,
                "alpha": grid.optimality_alpha(
                    eig.gamma, args.tau, b.d, b.volume, record["grad_norm_sq"]
                ),
                "rigidity": ball_mod.torsional_rigidity_ball(b, args.tau),
                "status": "Unique",
            }
        )
    _emit(_json(record), args.output)
    return 0


def cmd_torsion(args) -> int:
    b = ball_mod.Ball(d=args.d, R=args.r)
    res = ball_mod.torsion_ball(b, args.tau)
    record = {
        "d": args.d,
        "r": args.r,
        "tau": args.tau,
        "status": res.status,
        "rigidity": res.rigidity,
        "near_singular": res.near_singular,
    }
    _emit(_json(record), args.output)
    return 0


def _sweep_csv(rows) -> str:
    lines = ["d,tau,a,E"]
    for d, tau, a, e in rows:
        lines.append(f"{d:d},{tau:.17g},{a:.17g},{e:.17g}")
    return "\n".join(lines) + "\n"


def _sweep_svg(rows, width: int = 640, height: int = 420) -> str:
    """Minimal polyline chart: x = a, y = E, one polyline per tau."""
    curves: dict[float, list[tuple[float, float]]] = {}
    for _, tau, a, e in rows:
        curves.setdefault(tau, []).append((a, e))
    all_e = [e for _, _, _, e in rows]
    emin, emax = min(all_e), max(all_e)
    if emax == emin:
        emax = emin + 1.0
    pad = 50
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]

    def sx(a):
        return pad + (a - 0.0) / 1.0 * (width - 2 * pad)

    def sy(e):
        return height - pad - (e - emin) / (emax - emin) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
        f'height="{height - 2 * pad}" fill="none" stroke="#000"/>',
        f'<text x="{width // 2}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">a</text>',
        f'<text x="14" y="{height // 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {height // 2})">E</text>',
    ]
    for k, tau in enumerate(sorted(curves)):
        pts = " ".join(f"{sx(a):.2f},{sy(e):.2f}" for a, e in curves[tau])
        color = colors[k % len(colors)]
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        a_last, e_last = curves[tau][-1]
        parts.append(
            f'<text x="{sx(a_last) + 4:.2f}" y="{sy(e_last):.2f}" font-size="11" '
            f'fill="{color}">tau={tau:g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_twoball(args) -> int:
    taus = _parse_tau_list(args.tau)
    if not taus:
        raise UsageError("twoball needs a non-empty --tau list")
    a_grid = np.linspace(args.a_min, args.a_max, args.a_count)
    try:
        rows = twoball.sweep(args.d, taus, a_grid)
    except twoball.MonotonicityError as exc:
        sys.stderr.write(f"monotonicity failure: {exc}\n")
        return 1
    _emit(_sweep_csv(rows), args.output)
    if args.svg is not None:
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(_sweep_svg(rows))
    return 0


def _load_domain(args) -> grid.GridDomain:
    h = _parse_h(args.h)
    if args.mask is not None:
        dom = grid.read_mask_file(args.mask)
        if abs(dom.h - h) > 1e-12 * h:
            raise UsageError(
                f"mask file spacing {dom.h} disagrees with --h {h}; drop --h "
                "or make them match"
            )
        return dom
    if args.shape is None:
        raise UsageError("need either --shape or --mask")
    return grid.unit_area_domain(args.shape, h)


def cmd_grid_eig(args) -> int:
    dom = _load_domain(args)
    res = grid.plate_first(dom, args.tau)
    record = {
        "shape": dom.provenance,
        "h": dom.h,
        "tau": args.tau,
        "gamma": res.gamma,
        "grad_norm_sq": res.grad_norm_sq,
        "one_signed": res.one_signed,
    }
    _emit(_json(record), args.output)
    return 0


def cmd_grid_torsion(args) -> int:
    dom = _load_domain(args)
    res = grid.plate_torsion(dom, args.tau)
    record = {
        "shape": dom.provenance,
        "h": dom.h,
        "tau": args.tau,
        "rigidity": res.rigidity,
    }
    _emit(_json(record), args.output)
    return 0


# ---------------------------------------------------------------------------
# verification suites


def _suite_szego(args) -> dict:
    report = grid.verify_szego_ordering(h=_parse_h(args.h))
    return {"suite": "szego", "results": report, "passes": all(r["passes"] for r in report)}


def _suite_saintvenant(args) -> dict:
    report = grid.verify_saint_venant(h=_parse_h(args.h))
    return {
        "suite": "saintvenant",
        "results": report,
        "passes": all(r["passes"] for r in report),
    }


def _suite_talenti(args) -> dict:
    workers = _max_workers()
    trials = args.trials
    if workers == 1:
        reports = rearrange.run_talenti_trials(trials, base_seed=args.seed)
    else:
        # trials are independent; merge in seed order
        chunks = [
            (args.seed + t, 1) for t in range(trials)
        ]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda c: rearrange.run_talenti_trials(c[1], base_seed=c[0]), chunks)
            )
        reports = [r for part in parts for r in part]
    met = [r for r in reports if r.hypothesis_met]
    results = [json.loads(r.json_line()) for r in reports]
    return {
        "suite": "talenti",
        "results": results,
        "trials": trials,
        "hypothesis_met": len(met),
        "passes": bool(met) and all(r.passes for r in met),
    }


def _suite_slopes(args) -> dict:
    h = _parse_h(args.h)
    results = []
    for name in ("disk", "square", "triangle"):
        dom = grid.unit_area_domain(name, h)
        slope, lower, upper = grid.slope_sandwich_grid(dom, 0.5)
        results.append(
            {
                "shape": name,
                "slope": slope,
                "lower": lower,
                "upper": upper,
                "passes": bool(lower <= slope <= upper),
            }
        )
    return {"suite": "slopes", "results": results, "passes": all(r["passes"] for r in results)}


_SUITES = {
    "szego": _suite_szego,
    "saintvenant": _suite_saintvenant,
    "talenti": _suite_talenti,
    "slopes": _suite_slopes,
}


def cmd_verify(args) -> int:
    names = list(_SUITES) if args.suite == "all" else [args.suite]
    reports = [_SUITES[n](args) for n in names]
    payload = _json(reports[0] if len(reports) == 1 else reports)
    _emit(payload, args.output)
    return 0 if all(r["passes"] for r in reports) else 1


# ---------------------------------------------------------------------------
# acceptance criteria, CLI edition


def _crit_constants() -> dict:
    g0 = specfn.gamma_nu(0.0)
    thr = grid.convex_criterion(1.0, 1.0)["threshold"]
    checks = [
        abs(g0 - 3.19622) <= 1e-4,
        abs(thr - 6.92801) <= 1e-4,
    ]
    return {
        "criterion": "constants",
        "gamma0": g0,
        "disk_threshold": thr,
        "passes": all(checks),
    }


def _crit_twoball() -> dict:
    ok = True
    details = []
    for d in (2, 3):
        try:
            rows = twoball.sweep(d, (0.0, 1.0, 10.0, 100.0))
        except twoball.MonotonicityError as exc:
            ok = False
            details.append(str(exc))
            continue
        for tau in (0.0, 1.0, 10.0, 100.0):
            cur = [r for r in rows if r[1] == tau]
            t1 = ball_mod.torsional_rigidity_ball(ball_mod.Ball(d=d, R=1.0), tau)
            if abs(cur[0][3]) >= 1e-3 * t1 or abs(cur[-1][3] + t1) >= 1e-2 * t1:
                ok = False
                details.append(f"endpoint limit failed at d={d}, tau={tau}")
    return {"criterion": "two-ball monotonicity and endpoints", "passes": ok, "details": details}


def _crit_slope_concavity() -> dict:
    b = ball_mod.Ball(d=2, R=1.0)
    taus = np.linspace(0.0, 20.0, 41)
    gammas = np.array([ball_mod.plate_first_eig_ball(b, t).gamma for t in taus])
    second = np.diff(gammas, 2) / (taus[1] - taus[0]) ** 2
    lam = (specfn.bessel_j_zero(b.nu, 1) / b.R) ** 2
    big = ball_mod.plate_first_eig_ball(b, 1e4).gamma / 1e4
    slope, lower, upper = ball_mod.gamma_tau_slope_check(b, 0.0)
    checks = [
        bool(np.all(second <= 1e-6)),
        abs(big - lam) <= 0.03 * lam,
        lower <= slope <= upper,
    ]
    return {
        "criterion": "slope bounds, concavity, large-tau limit",
        "passes": all(checks),
        "second_difference_max": float(second.max()),
        "gamma_over_tau_at_1e4": big,
        "lambda": lam,
    }


def _crit_torsion_residuals() -> dict:
    ok = True
    b = ball_mod.Ball(d=2, R=1.0)
    for tau in (0.0, 1.0, 10.0, -5.0):
        res = ball_mod.torsion_ball(b, tau)
        r = np.array([b.R])
        w, dw = res.profile(r)[0], res.profile.deriv(r)[0]
        ok &= abs(w) < 1e-9 and abs(dw) < 1e-9
    t_pos = ball_mod.torsional_rigidity_ball(b, 1e-7)
    t_neg = ball_mod.torsional_rigidity_ball(b, -1e-7)
    t0 = ball_mod.torsional_rigidity_ball(b, 0.0)
    ok &= abs(t_pos - t0) <= 1e-6 * t0 and abs(t_neg - t0) <= 1e-6 * t0
    lam_buck = specfn.bessel_j_zero(b.nu + 1.0, 1) ** 2
    t_far = ball_mod.torsional_rigidity_ball(b, -(lam_buck - 1e-2))
    t_close = ball_mod.torsional_rigidity_ball(b, -(lam_buck - 1e-3))
    ok &= abs(t_close) >= 5.0 * abs(t_far)
    ok &= ball_mod.torsion_ball(b, -lam_buck).status == "NonExistent"
    return {"criterion": "ball torsion residuals, continuity, divergence", "passes": bool(ok)}


def cmd_criteria(args) -> int:
    """Closed-form acceptance checks; grid-based criteria run through
    `verify` (and at full resolution through the test suite)."""
    reports = [
        _crit_constants(),
        _crit_twoball(),
        _crit_slope_concavity(),
        _crit_torsion_residuals(),
    ]
    _emit(_json(reports), args.output)
    return 0 if all(r["passes"] for r in reports) else 1


def cmd_specfn(args) -> int:
    nu = args.nu if args.nu is not None else specfn.order_from_dim(args.d)
    if args.op == "gamma":
        value = specfn.gamma_nu(nu)
    elif args.op == "zero":
        value = specfn.bessel_j_zero(nu, args.i)
    elif args.op == "ratio":
        value = specfn.ratio_i(nu, args.x)
    elif args.op == "besselj":
        value = specfn.bessel_j(nu, args.x)
    else:  # besseli
        value = specfn.bessel_i(nu, args.x)
    _emit(_json({"op": args.op, "nu": nu, "value": value}), args.output)
    return 0


# ---------------------------------------------------------------------------
# parser


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="plate-tension",
        description="Clamped plate under tension: ball closed forms, two-ball "
        "energies, grid solves, and verification suites.",
    )
    sub = p.add_subparsers(dest="subcommand", required=True)

    def add_output(sp):
        sp.add_argument("--output", default=None, help="write to file instead of stdout")

    sp = sub.add_parser("ball", help="closed-form ball quantities in one record")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--tau", type=float, default=0.0)
    add_output(sp)
    sp.set_defaults(fn=cmd_ball)

    sp = sub.add_parser("torsion", help="ball torsion status and rigidity (any tau)")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--tau", type=float, required=True)
    add_output(sp)
    sp.set_defaults(fn=cmd_torsion)

    sp = sub.add_parser("twoball", help="two-ball energy sweep (CSV, optional SVG)")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--tau", required=True, help="comma-separated tension list")
    sp.add_argument("--a-min", type=float, default=0.01)
    sp.add_argument("--a-max", type=float, default=0.99)
    sp.add_argument("--a-count", type=int, default=99)
    sp.add_argument("--svg", default=None, help="also write an SVG line chart")
    add_output(sp)
    sp.set_defaults(fn=cmd_twoball)

    for name, fn in (("grid-eig", cmd_grid_eig), ("grid-torsion", cmd_grid_torsion)):
        sp = sub.add_parser(name, help=f"{name} on a named shape or mask file")
        sp.add_argument("--shape", choices=grid.SHAPE_NAMES, default=None)
        sp.add_argument("--mask", default=None, help="mask file (nx ny h header)")
        sp.add_argument("--h", default="1/64", help="grid spacing, float or fraction")
        sp.add_argument("--tau", type=float, default=0.0)
        add_output(sp)
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("verify", help="run a verification suite")
    sp.add_argument("suite", choices=[*_SUITES, "all"])
    sp.add_argument("--h", default="1/64", help="grid spacing for grid suites")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    add_output(sp)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("criteria", help="closed-form acceptance checks")
    add_output(sp)
    sp.set_defaults(fn=cmd_criteria)

    sp = sub.add_parser("specfn", help="Bessel primitives")
    sp.add_argument("--op", choices=("gamma", "zero", "ratio", "besselj", "besseli"), required=True)
    sp.add_argument("--nu", type=float, default=None)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--i", type=int, default=1)
    sp.add_argument("--x", type=float, default=1.0)
    add_output(sp)
    sp.set_defaults(fn=cmd_specfn)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 2
    except (ValueError, ball_mod.NonExistentTorsion) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
