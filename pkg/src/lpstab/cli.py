"""Command line entry point ``lpstab``.

Exit status: 0 when every asserted check passes, 1 when one fails, 2 for
usage or configuration errors.  Report-only results never change the status.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .coefficients import MollifierKernel, mollification_bounds, mollify_values
from .config import ConfigError, ExperimentConfig, load_config, resolve_output_dir
from .grid import Field, PeriodicGrid, random_field, single_mode
from .harness import ScanConfig, negative_control_scan, stability_scan
from .littlewood_paley import annulus_leakage, bernstein_ratio, decompose
from .paraproduct import positivity_margin
from .solver import SolverConfig, SolverError, manufacture_backward, solve_forward

REPORT_NAME = "report.json"
METADATA_NAME = "metadata.json"


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def dump_json(obj) -> str:
    return json.dumps(ex._jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def frozen_constants(obj, found=None) -> list:
    """Collect every frozen calibration constant embedded in a details tree."""
    found = [] if found is None else found
    if isinstance(obj, dict):
        if {"name", "value", "training_max", "safety"} <= set(obj):
            if obj not in found:
                found.append(obj)
        else:
            for v in obj.values():
                frozen_constants(v, found)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            frozen_constants(v, found)
    return found


# ---------------------------------------------------------------------------
# subcommands; each returns a list of CheckResults and may add report entries
# ---------------------------------------------------------------------------

def _suite(fns, cfg: ExperimentConfig):
    return [fn(cfg.sizes, cfg.seed, cfg.tolerances()) for fn in fns]


def cmd_lp_check(cfg, args, out: Path, extra: dict):
    g = PeriodicGrid(args.grid or cfg.grid)
    f = random_field(g, np.random.default_rng(cfg.seed), decay=0.5)
    rows = []
    for k, block in enumerate(decompose(f).blocks):
        norm = float(np.sqrt(np.mean(block.values**2)))
        ratio = bernstein_ratio(block, k) if (k >= 1 and norm > 0) else float("nan")
        ok = annulus_leakage(block, k) <= cfg.tolerances()["lp_leakage"]
        rows.append((k, norm, float(np.max(np.abs(block.values))), ratio, ok))
    write_csv(out / "lp_blocks.csv", ("k", "l2_norm", "linf_norm", "bernstein_ratio", "annulus_ok"),
              rows)
    return _suite((ex.lp_completeness, ex.bernstein, ex.sobolev_equivalence), cfg)


def cmd_para_check(cfg, args, out, extra):
    sizes = cfg.sizes
    if args.m is not None:
        sizes = replace(sizes, para_m=args.m)
    if args.trials is not None:
        sizes = replace(sizes, positivity_trials=args.trials)
    cfg = replace(cfg, sizes=sizes)
    checks = _suite((ex.paraproduct_identity, ex.positivity, ex.coifman_meyer), cfg)
    g = PeriodicGrid(args.grid or cfg.grid)
    m = sizes.para_m
    s = 0.5 if args.s is None else args.s
    a = g.sample(lambda x: 1.0 + 0.5 * np.sin(x))
    margin = positivity_margin(a, m, sizes.positivity_trials, cfg.seed)
    rem = ex._remainder_ratios(g, sizes.para_pairs, m, s, np.random.default_rng(cfg.seed))
    pid, pos, cm = checks
    extra["checks_summary"] = [
        {"check_name": "positivity_at_m", "fitted_C": None, "margin": margin,
         "pass": margin >= 0.25, "m": m},
        {"check_name": "remainder_smoothing", "fitted_C": max(rem), "margin": None,
         "pass": pid.passed, "s": s},
        {"check_name": "mapping", "fitted_C": max(pid.details["mapping_constants"]),
         "margin": None, "pass": pid.details["mapping_ok"]},
        {"check_name": "coifman_meyer_slope", "fitted_C": max(cm.details["mean_ratio"]),
         "margin": cm.details["slope"], "pass": cm.passed},
        {"check_name": "find_m0", "fitted_C": None, "margin": pos.details["validation_margin"],
         "pass": pos.passed, "m0": pos.details["m0"]},
    ]
    return checks


def cmd_weights(cfg, args, out, extra):
    lam = cfg.weight_params["lam"] if args.lam is None else args.lam
    if not lam > 1:
        raise ConfigError(f"--lambda must exceed 1, got {lam}")
    rows = ex.weight_table(lam, args.samples)
    write_csv(out / "weights.csv", ("y", "psi", "phi", "phi_prime", "ode_residual"), rows)
    extra["lambda"] = lam
    return _suite((ex.weight_identities,), cfg)


def cmd_mollify(cfg, args, out, extra):
    a = cfg.coefficient_field()
    kernel = MollifierKernel()
    eps = 2.0 ** (-2 * args.nu)
    bound = mollification_bounds(a.declared_A_LL, eps, kernel)[0]
    ts = np.linspace(0.0, a.T, cfg.sizes.mollify_t_samples)
    xs = np.linspace(0.0, 2 * np.pi, cfg.sizes.mollify_x_samples, endpoint=False)
    rows = []
    for t in ts:
        val, _ = mollify_values(a, t, xs, eps, kernel)
        for x, raw, sm in zip(xs, a(t, xs), val):
            rows.append((float(t), float(x), float(raw), float(sm), bound))
    write_csv(out / "mollify.csv", ("t", "x", "a", "a_eps", "bound"), rows)
    extra["mollified_coefficient"] = {"tag": a.family_tag, "eps": eps, "bound": bound}
    return _suite((ex.mollification,), cfg)


def parse_datum(text: str, g: PeriodicGrid) -> Field:
    """``random[:decay=D,seed=S]``, ``mode:xi=K``, ``gaussian[:width=W]`` or ``file:PATH``."""
    kind, _, rest = text.partition(":")
    if kind == "file":
        from .grid import read_field_csv
        f = read_field_csv(rest)
        if f.grid != g:
            raise ConfigError(f"datum file has {f.grid.n_points} points, grid has {g.n_points}")
        return f
    opts = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"malformed datum option {item!r}")
        opts[key.strip()] = float(value)
    if kind == "random":
        return random_field(g, np.random.default_rng(int(opts.get("seed", 0))),
                            decay=opts.get("decay", 1.0))
    if kind == "mode":
        return single_mode(g, int(opts.get("xi", 1)))
    if kind == "gaussian":
        w = opts.get("width", 0.5)
        return g.sample(lambda x: np.exp(-((x - np.pi) ** 2) / (2 * w * w)))
    raise ConfigError(f"unknown datum kind {kind!r}")


def cmd_simulate(cfg, args, out, extra):
    coef_cfg = dict(cfg.coefficient)
    if args.coeff:
        coef_cfg = {"tag": args.coeff, "params": {}}
    try:
        from .coefficients import builtin_family
        a = builtin_family(coef_cfg["tag"], dict(coef_cfg["params"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    g = PeriodicGrid(args.grid or cfg.grid)
    T = args.T if args.T is not None else cfg.solver["T"]
    dt = args.dt if args.dt is not None else cfg.solver["dt"]
    if abs(a.T - T) > 1e-12:
        a = replace(a, T=T)
    try:
        sc = SolverConfig(g, dt, T, cfg.solver["scheme"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    datum = parse_datum(args.datum, g)
    every = max(1, sc.n_steps // max(1, args.snapshots))
    if args.direction == "backward":
        traj = manufacture_backward(a, datum, T, sc, save_every=every)
    else:
        traj = solve_forward(a, datum, sc, save_every=every)
    rows = [(float(t), i, float(x), float(v))
            for t, vals in zip(traj.times, traj.values) for i, (x, v) in enumerate(zip(g.x, vals))]
    write_csv(out / "trajectory.csv", ("t", "index", "x", "value"), rows)
    masses = traj.masses()
    norms = traj.l2_norms()
    scale = max(float(np.sum(np.abs(traj.values[0])) * g.spacing), 1e-300)
    drift = float(np.max(np.abs(masses - masses[0]))) / scale
    tol = cfg.tolerances()["mass"]
    manifest = {"coefficient": {"tag": a.family_tag, "params": a.params}, "grid": g.n_points,
                "dt": dt, "T": T, "scheme": sc.scheme, "datum": args.datum,
                "direction": args.direction, "snapshots": len(traj.times),
                "residual": {"max_linear_solve": traj.max_solve_residual},
                "conservation": {"mass_first": float(masses[0]), "relative_drift": drift},
                "norms": {"first": float(norms[0]), "last": float(norms[-1])}}
    (out / "manifest.json").write_text(dump_json(manifest))
    extra["manifest"] = manifest
    checks = [ex.CheckResult("mass_conservation", drift <= tol, {"relative_drift": drift})]
    if args.direction == "backward":
        checks.append(ex.CheckResult("smoothing_direction", bool(norms[0] <= norms[-1]),
                                     {"u0": float(norms[0]), "uT": float(norms[-1])}))
    return checks


def cmd_energy(cfg, args, out, extra):
    res = ex.energy_estimate(cfg.sizes, cfg.seed, cfg.tolerances(), cfg.weights())
    rows = []
    for r in res.details["runs"]:
        for p, m in zip(res.details["p_values"], r["fitted_M"]):
            rows.append((r["family"], r["grid"], r["steps"], r["seed"], p, m))
    write_csv(out / "energy_points.csv", ("family", "grid", "steps", "seed", "p", "fitted_M"), rows)
    extra.update({"params": res.details["params"],
                  "per_point": [dict(zip(("family", "grid", "steps", "seed", "p", "fitted_M"), r))
                                for r in rows],
                  "fitted": {"M": res.details["frozen"]["value"]}, "verdict": res.status})
    return [res]


def _write_scan_csv(path, result):
    write_csv(path, ("rho", "sup_norm", "fit_value"), result.plot_rows())


def cmd_stability_scan(cfg, args, out, extra):
    res = ex.stability(cfg.sizes, cfg.seed, cfg.tolerances())
    for label, scan in res.artifacts["scans"].items():
        _write_scan_csv(out / f"scan_{label}.csv", scan)
    checks = [res]
    # the configured coefficient, if it is not already covered, is scanned report-only
    g = PeriodicGrid(cfg.sizes.scan_grid)
    sc = ScanConfig(g, n_steps=cfg.sizes.scan_steps, alpha=cfg.weight_params["alpha"],
                    lam=cfg.weight_params["lam"])
    a = cfg.coefficient_field()
    scales = ex.scan_scales(cfg.sizes)
    s = cfg.weight_params["s"] if args.s is None else args.s
    if a.family_tag == "oscillatory_control":
        own = negative_control_scan(a, None, scales, s, sc, args.mode)
    else:
        own = stability_scan(a, None if args.mode == "worst_case" else
                             g.sample(lambda x: np.exp(np.cos(x)) - 1.0),
                             ([1.0] + scales) if args.mode == "scaled_datum" else scales,
                             s, sc, args.mode)
    _write_scan_csv(out / "scan_configured.csv", own)
    checks.append(ex.CheckResult("configured_coefficient_scan", None, own.as_dict()))
    main = res.artifacts["scans"]["loglip_t"]
    extra.update({"params": {"s": 0.5, "grid": g.n_points, "steps": cfg.sizes.scan_steps},
                  "per_point": main.as_dict()["per_point"],
                  "fitted": main.as_dict()["fitted"], "verdict": main.verdict})
    return checks


def cmd_all(cfg, args, out, extra):
    checks = _suite((ex.lp_completeness, ex.bernstein, ex.sobolev_equivalence,
                     ex.paraproduct_identity, ex.positivity, ex.coifman_meyer,
                     ex.weight_identities, ex.mollification, ex.solver_checks), cfg)
    checks.append(ex.energy_estimate(cfg.sizes, cfg.seed, cfg.tolerances(), cfg.weights()))
    stab = ex.stability(cfg.sizes, cfg.seed, cfg.tolerances())
    for label, scan in stab.artifacts["scans"].items():
        _write_scan_csv(out / f"scan_{label}.csv", scan)
    checks.append(stab)
    write_csv(out / "weights.csv", ("y", "psi", "phi", "phi_prime", "ode_residual"),
              ex.weight_table(cfg.weight_params["lam"], 32))
    return checks


COMMANDS = {
    "lp-check": cmd_lp_check,
    "para-check": cmd_para_check,
    "weights": cmd_weights,
    "mollify": cmd_mollify,
    "simulate": cmd_simulate,
    "energy": cmd_energy,
    "stability-scan": cmd_stability_scan,
    "all": cmd_all,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory (overrides OUTPUT_DIR and the config)")
    common.add_argument("--grid", type=int, help="grid size for single-grid outputs")
    parser = argparse.ArgumentParser(prog="lpstab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("lp-check", parents=[common], help="dyadic decomposition checks")
    p = sub.add_parser("para-check", parents=[common], help="paraproduct checks")
    p.add_argument("--m", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--trials", type=int)
    p = sub.add_parser("weights", parents=[common], help="weight functions table and identities")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--samples", type=int, default=64)
    p = sub.add_parser("mollify", parents=[common], help="time mollification of the coefficient")
    p.add_argument("--nu", type=int, default=4)
    p = sub.add_parser("simulate", parents=[common], help="forward or manufactured backward run")
    p.add_argument("--coeff")
    p.add_argument("--dt", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--datum", default="random:decay=1,seed=0")
    p.add_argument("--direction", choices=("backward", "forward"), default="backward")
    p.add_argument("--snapshots", type=int, default=16)
    sub.add_parser("energy", parents=[common], help="weighted energy estimate suite")
    p = sub.add_parser("stability-scan", parents=[common], help="conditional stability scans")
    p.add_argument("--mode", choices=("worst_case", "scaled_datum"), default="worst_case")
    p.add_argument("--s", type=float)
    sub.add_parser("all", parents=[common], help="every check suite")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg = replace(cfg, seed=args.seed)
        if args.grid is not None and (args.grid < 16 or args.grid & (args.grid - 1)):
            raise ConfigError(f"--grid must be a power of two >= 16, got {args.grid}")
        cfg = replace(cfg, subcommand=args.command)
        out = resolve_output_dir(cfg, args.out)
        out.mkdir(parents=True, exist_ok=True)
        extra: dict = {}
        checks = COMMANDS[args.command](cfg, args, out, extra)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"check failed: solver: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    asserted = [c for c in checks if c.passed is not None]
    failed = [c for c in asserted if not c.passed]
    details = [c.as_dict() for c in checks]
    report = {"config": cfg.resolved(), "checks": details,
              "frozen_constants": frozen_constants(details),
              "verdict": "FAIL" if failed else "PASS", **extra}
    (out / REPORT_NAME).write_text(dump_json(report))
    meta = {"started": started, "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "seconds": {c.name: round(c.seconds, 3) for c in checks},
            "output_dir": str(out.resolve()), "argv": list(sys.argv[1:] if argv is None else argv)}
    (out / METADATA_NAME).write_text(dump_json(meta))
    for c in checks:
        print(c.line())
    for c in failed:
        print(f"check failed: {c.name}", file=sys.stderr)
    return 1 if failed else 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
