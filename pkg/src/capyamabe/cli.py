"""Command-line front end: cap / solve / sweep / verify / mass subcommands.

Outputs are machine-readable (JSON for structured results, CSV for
sequences) and deterministic: identical configuration and seed produce
byte-identical files.  Exit codes: 0 success, 2 configuration error,
3 numerical non-convergence, 4 identity verification failure.

Configuration precedence: command-line flags override the optional JSON
config file (``--config``), which overrides built-in defaults.  The output
directory may also be set via the ``CAPYAMABE_OUTPUT_DIR`` environment
variable (flag > config > environment > current directory).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import geometry_checks as gc
from .bubble import (
    Bubble,
    bubble_energy,
    bubble_energy_quadrature,
    verify_bubble_pde,
    verify_stereo_conformal,
)
from .errors import ConfigurationError, DomainError, NonConvergenceError
from .halfspace import CapSolution, Dim, Weights, cap_identity_residual, solve_cap, yamabe_halfspace
from .mass_flux import boundary_cross_metric, conformally_flat_metric, flat_metric, mass
from .numerics import HalfGrid
from .variational import (
    MinimizerOptions,
    conformal_curvatures,
    critical_limit,
    flat_annulus_geometry,
    flat_ball_geometry,
    sweep_ab,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_VERIFY_FAILED = 4


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _dump_json(obj, path: Path | None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        try:
            cfg.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config file: {exc}") from exc
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _output_dir(cfg: dict) -> Path:
    out = cfg.get("output_dir") or os.environ.get("CAPYAMABE_OUTPUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_floats(text: str) -> list:
    try:
        return [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse float list {text!r}") from exc


# ---------------------------------------------------------------------------
# cap


def cmd_cap(args) -> int:
    cfg = _merged(args, {"n": 3, "a": 1.0, "b": 1.0, "output_dir": None, "json_name": None})
    dim = Dim(int(cfg["n"]))
    w = Weights(float(cfg["a"]), float(cfg["b"]))
    Y = yamabe_halfspace(w, dim)
    if w.a > 0.0 and w.b > 0.0:
        sol = solve_cap(w, dim)
        ident = cap_identity_residual(sol, w, dim)
        y_boundary = -2.0 * sol.T_c * sol.B ** (1.0 / (dim.n - 1)) / w.b
        agreement = abs(sol.Y - y_boundary) / abs(sol.Y)
    else:
        # edge caps: b=0 is the zero-mean-curvature hemisphere cap, a=0 the
        # degenerate thin-cap limit; identity residuals are vacuous there
        r = math.pi / 2 if w.b == 0.0 else 0.0
        from .halfspace import cap_A, cap_B

        A = cap_A(math.pi / 2, dim) if w.b == 0.0 else 0.0
        B = cap_B(math.pi / 2, dim) if w.b == 0.0 else 0.0
        sol = CapSolution(r=r, T_c=0.0 if w.b == 0.0 else -math.inf, A=A, B=B, Y=Y)
        ident, agreement = 0.0, 0.0
    report = {
        "n": dim.n,
        "a": w.a,
        "b": w.b,
        "r": sol.r,
        "T_c": sol.T_c,
        "A": sol.A,
        "B": sol.B,
        "Y": Y,
        "identity_residuals": {"cap_identity": ident, "formula_agreement": agreement},
    }
    out = None
    if cfg["json_name"]:
        out = _output_dir(cfg) / cfg["json_name"]
    _dump_json(report, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _initial_field(geom, seed):
    values = np.ones_like(geom.mesh.nodes)
    if seed is not None:
        rng = np.random.default_rng(int(seed))
        values = values + 0.01 * rng.standard_normal(values.shape)
        values = np.abs(values) + 0.1
    from .numerics import DiscreteField

    return DiscreteField(values, geom.mesh)


def _make_geometry(cfg):
    dim = Dim(int(cfg["n"]))
    if cfg["geometry"] == "ball":
        return flat_ball_geometry(int(cfg["cells"]), dim, float(cfg["grading"]))
    if cfg["geometry"] == "annulus":
        return flat_annulus_geometry(
            int(cfg["cells"]), dim, float(cfg["r_in"]), float(cfg["r_out"])
        )
    raise ConfigurationError(f"unknown geometry {cfg['geometry']!r}")


def cmd_solve(args) -> int:
    cfg = _merged(
        args,
        {
            "n": 3,
            "a": 1.0,
            "b": 1.0,
            "geometry": "ball",
            "cells": 2000,
            "grading": 1.0,
            "r_in": 0.5,
            "r_out": 1.0,
            "schedule": None,
            "seed": None,
            "tol": 1e-6,
            "output_dir": None,
            "prefix": "solve",
        },
    )
    geom = _make_geometry(cfg)
    w = Weights(float(cfg["a"]), float(cfg["b"]))
    schedule = _parse_floats(cfg["schedule"]) if cfg["schedule"] else None
    opts = MinimizerOptions(tol=float(cfg["tol"]))
    init = _initial_field(geom, cfg["seed"])
    out_dir = _output_dir(cfg)
    csv_path = out_dir / f"{cfg['prefix']}.csv"
    json_path = out_dir / f"{cfg['prefix']}.json"

    lim = critical_limit(geom, w, schedule, opts, init=init)
    rows = list(zip(lim.qs, lim.mus, lim.residuals, lim.iterations))
    _write_csv(csv_path, ["q", "mu_q", "el_residual", "iterations"], rows)

    y_half = yamabe_halfspace(w, geom.dim)
    summary = {
        "Y_extrapolated": lim.extrapolated,
        "Y_halfspace": y_half,
        "upper_bound_satisfied": bool(lim.extrapolated <= y_half * (1 + 1e-3)),
        "converged": lim.converged,
        "flags": lim.flags,
    }
    if cfg["geometry"] == "ball":
        summary["Y_closed_form"] = y_half
        summary["relative_gap"] = abs(lim.extrapolated - y_half) / y_half
    if lim.final is not None:
        R_g, h_g, h_norm = conformal_curvatures(lim.final, w, geom)
        summary.update(R_g=R_g, h_g=h_g, h_normalized=h_norm)
    _dump_json(summary, json_path)
    sys.stdout.write(f"wrote {csv_path} and {json_path}\n")
    if not lim.converged or lim.flags:
        return EXIT_NONCONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def _sweep_cell(payload):
    cfg, a, b = payload
    geom = _make_geometry(cfg)
    schedule = _parse_floats(cfg["schedule"]) if cfg["schedule"] else None
    cell = {"a": a, "b": b, "Y": None, "R_g": None, "h_g": None, "h_normalized": None, "error": ""}
    try:
        w = Weights(a, b)
        lim = critical_limit(geom, w, schedule, init=_initial_field(geom, cfg["seed"]))
        R_g, h_g, h_norm = conformal_curvatures(lim.final, w, geom)
        cell.update(Y=lim.extrapolated, R_g=R_g, h_g=h_g, h_normalized=h_norm)
        if lim.flags:
            cell["error"] = "; ".join(lim.flags)
    except Exception as exc:
        cell["error"] = str(exc)
    return cell


def cmd_sweep(args) -> int:
    cfg = _merged(
        args,
        {
            "n": 3,
            "a_values": "0.5,1,2,4",
            "b_values": "0.5,1,2,4",
            "geometry": "ball",
            "cells": 600,
            "grading": 1.0,
            "r_in": 0.5,
            "r_out": 1.0,
            "schedule": None,
            "seed": None,
            "jobs": 1,
            "output_dir": None,
            "prefix": "sweep",
        },
    )
    a_values = _parse_floats(cfg["a_values"])
    b_values = _parse_floats(cfg["b_values"])
    if not a_values or not b_values:
        raise ConfigurationError("weight grid must be non-empty")
    payloads = [(cfg, a, b) for a in a_values for b in b_values]
    jobs = max(1, int(cfg["jobs"]))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, payloads))
    else:
        rows = [_sweep_cell(p) for p in payloads]

    out_dir = _output_dir(cfg)
    csv_path = out_dir / f"{cfg['prefix']}.csv"
    csv_rows = [
        [r["a"], r["b"], r["Y"] if r["Y"] is not None else "",
         r["R_g"] if r["R_g"] is not None else "",
         r["h_g"] if r["h_g"] is not None else "",
         r["h_normalized"] if r["h_normalized"] is not None else "",
         r["error"]]
        for r in rows
    ]
    _write_csv(csv_path, ["a", "b", "Y", "R_g", "h_g", "h_normalized", "error"], csv_rows)

    def get(a, b):
        for r in rows:
            if r["a"] == a and r["b"] == b:
                return r["Y"]
        return None

    violations = []
    for b in b_values:
        ys = [get(a, b) for a in a_values]
        for (a1, y1), (a2, y2) in zip(zip(a_values, ys), zip(a_values[1:], ys[1:])):
            if y1 is not None and y2 is not None and y2 > y1 * 1.001:
                violations.append(f"Y({a2},{b}) > Y({a1},{b})")
    for a in a_values:
        ys = [get(a, b) for b in b_values]
        for (b1, y1), (b2, y2) in zip(zip(b_values, ys), zip(b_values[1:], ys[1:])):
            if y1 is not None and y2 is not None and y2 > y1 * 1.001:
                violations.append(f"Y({a},{b2}) > Y({a},{b1})")
    ok_cells = sum(1 for r in rows if not r["error"])
    report = {
        "cells": len(rows),
        "succeeded": ok_cells,
        "monotone": not violations,
        "violations": violations,
    }
    _dump_json(report, out_dir / f"{cfg['prefix']}_monotonicity.json")
    sys.stdout.write(f"wrote {csv_path}\n")
    if ok_cells < 0.9 * len(rows):
        return EXIT_NONCONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _verify_report(identity: str, n: int, eps: float, h: float, extent: float) -> dict:
    dim = Dim(n)
    bub = Bubble.from_weights(Weights(1.0, 1.0), dim, eps=eps)
    grid = HalfGrid(h=h, half_extent=extent, dim=dim)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3.0, 3.0, size=(n, 100))
    pts[-1] = np.abs(pts[-1])
    bpts = pts.copy()
    bpts[-1] = 0.0
    report = {"identity": identity}

    if identity == "bubble":
        res = verify_bubble_pde(bub, pts, bpts)
        e_formula = bubble_energy(bub)
        e_quad = bubble_energy_quadrature(bub)
        report.update(
            interior=res["interior"],
            boundary=res["boundary"],
            energy_agreement=abs(e_formula - e_quad) / e_formula,
            stereo_conformal=verify_stereo_conformal(pts, bub.T_c),
        )
        report["passed"] = bool(
            res["interior"] <= 1e-9
            and res["boundary"] <= 1e-9
            and report["energy_agreement"] <= 1e-3
            and report["stereo_conformal"] <= 1e-6
        )
    elif identity == "einstein":
        res = gc.verify_einstein_identity(bub, pts)
        report.update(residual=res, passed=bool(res <= 1e-9))
    elif identity in ("lin-scalar", "lin-mean"):
        fn = gc.verify_linearized_scalar if identity == "lin-scalar" else gc.verify_linearized_mean
        V = gc.random_cubic_field(dim, seed=3)
        exact = fn(gc.dilation_field(dim), bub, grid, mode="analytic")
        fd = fn(V, bub, grid, mode="fd")
        report.update(
            analytic_residual=exact.residual_h,
            fd_residual_h=fd.residual_h,
            fd_residual_h2=fd.residual_h2,
            fd_order=fd.order,
        )
        report["passed"] = bool(
            exact.residual_h <= 1e-8 and fd.order is not None and 1.8 <= fd.order <= 2.2
        )
    elif identity == "second-var":
        V = gc.random_cubic_field(dim, seed=3)
        oe = gc.verify_second_variation(V, bub, grid)
        Vf = gc.boundary_flux_field(bub)
        H = gc.taylor_perturbation(dim, seed=5)
        xi_res = gc.xi_boundary_residual(Vf, bub, bpts, H)
        report.update(
            residual_h=oe.residual_h,
            residual_h2=oe.residual_h2,
            order=oe.order,
            xi_boundary_residual=xi_res,
        )
        report["passed"] = bool(
            oe.order is not None and 1.8 <= oe.order <= 2.2 and xi_res <= 1e-8
        )
    elif identity == "st-boundary":
        Vf = gc.boundary_flux_field(bub)
        res = gc.verify_ST_boundary(Vf, bub, bpts)
        report.update(res)
        report["passed"] = bool(max(res.values()) <= 1e-8)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigurationError(f"unknown identity {identity!r}")
    return report


def cmd_verify(args) -> int:
    cfg = _merged(
        args,
        {"identity": "all", "n": 3, "eps": 1.0, "h": 0.25, "extent": 2.0,
         "output_dir": None, "json_name": None},
    )
    names = ["bubble", "einstein", "lin-scalar", "lin-mean", "second-var", "st-boundary"]
    selected = names if cfg["identity"] == "all" else [cfg["identity"]]
    reports = [
        _verify_report(name, int(cfg["n"]), float(cfg["eps"]), float(cfg["h"]), float(cfg["extent"]))
        for name in selected
    ]
    out = None
    if cfg["json_name"]:
        out = _output_dir(cfg) / cfg["json_name"]
    _dump_json({"reports": reports}, out)
    failing = [r["identity"] for r in reports if not r["passed"]]
    if failing:
        sys.stderr.write(f"verification failed: {', '.join(failing)}\n")
        return EXIT_VERIFY_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# mass


def cmd_mass(args) -> int:
    cfg = _merged(
        args,
        {"metric": "flat", "n": 3, "m": 0.1, "c": 0.5, "radii": "20,40,80",
         "resolution": 40, "output_dir": None, "json_name": None},
    )
    dim = Dim(int(cfg["n"]))
    name = cfg["metric"]
    if name == "flat":
        g = flat_metric(dim)
    elif name == "conformal":
        g = conformally_flat_metric(dim, float(cfg["m"]))
    elif name == "boundary-cross":
        g = boundary_cross_metric(dim, float(cfg["c"]))
    else:
        raise ConfigurationError(f"unknown metric {name!r}")
    result = mass(g, _parse_floats(cfg["radii"]), int(cfg["resolution"]))
    report = {
        "metric": name,
        "radii": result.radii,
        "flux_values": result.flux_values,
        "hemisphere_values": result.hemisphere_values,
        "equator_values": result.equator_values,
        "extrapolated_mass": result.extrapolated_mass,
        "converged": result.converged,
    }
    out = None
    if cfg["json_name"]:
        out = _output_dir(cfg) / cfg["json_name"]
    _dump_json(report, out)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capyamabe",
        description="Two-constant boundary curvature invariants: closed forms, "
        "subcritical minimization, identity verification, and mass flux.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (flags take precedence)")
        p.add_argument("--output-dir", dest="output_dir", help="directory for output files")

    p = sub.add_parser("cap", help="closed-form cap invariant")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--json-name", dest="json_name")
    p.set_defaults(func=cmd_cap)

    p = sub.add_parser("solve", help="subcritical scheme with critical extrapolation")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--geometry", choices=["ball", "annulus"])
    p.add_argument("--cells", type=int)
    p.add_argument("--grading", type=float)
    p.add_argument("--r-in", dest="r_in", type=float)
    p.add_argument("--r-out", dest="r_out", type=float)
    p.add_argument("--schedule", help="comma-separated exponent ladder")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--prefix")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="weight-grid sweep with monotonicity report")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--a-values", dest="a_values")
    p.add_argument("--b-values", dest="b_values")
    p.add_argument("--geometry", choices=["ball", "annulus"])
    p.add_argument("--cells", type=int)
    p.add_argument("--grading", type=float)
    p.add_argument("--r-in", dest="r_in", type=float)
    p.add_argument("--r-out", dest="r_out", type=float)
    p.add_argument("--schedule")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--prefix")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="tensor identity verification")
    common(p)
    p.add_argument(
        "--identity",
        choices=["bubble", "einstein", "lin-scalar", "lin-mean", "second-var",
                 "st-boundary", "all"],
    )
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--extent", type=float)
    p.add_argument("--json-name", dest="json_name")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mass", help="asymptotic mass of built-in metrics")
    common(p)
    p.add_argument("--metric", choices=["flat", "conformal", "boundary-cross"])
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--radii")
    p.add_argument("--resolution", type=int)
    p.add_argument("--json-name", dest="json_name")
    p.set_defaults(func=cmd_mass)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, ConfigurationError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        sys.stderr.write(f"non-convergence: {exc}\n")
        return EXIT_NONCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
