"""Command-line front end: check, solve, simulate, frontier, compare.

Every run writes its outputs plus a manifest.json (config hash, resolved
config, seed, versions) under the output directory; re-running a manifest's
config byte-reproduces all CSV outputs.  Exit codes: 0 success, 1
usage/config, 2 advisory feasibility condition failed, 3 solver error,
4 simulation error.  Errors are emitted on stderr as JSON with a
machine-readable error.kind.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import (ConfigDict, config_hash, get_bool, get_float,
                     get_float_list, get_int, get_str, parse_config,
                     render_config, set_key)
from .errors import (ConvergenceError, CSVFormatError, DegeneracyError,
                     DegenerateFrontierError, DelayLQError, DomainError,
                     ParameterError, PositivityError, SimulationError,
                     StateError)
from .grid import (GridSpec, KERNEL_IDS, export_csv, import_csv,
                   max_abs_diff_slices)
from .markowitz import MarketParams, eta_star, frontier, two_asset_frontier
from .model import ModelParams, feasibility
from .sim import (InitialSegment, SimConfig, simulate,
                  simulate_two_asset, stats_of, value_of)
from .solver import SolveConfig, TwoAssetParams, solve_single, solve_two_asset

_USAGE_EXIT = 1
_ADVISORY_EXIT = 2
_SOLVER_EXIT = 3
_SIM_EXIT = 4

_SOLVER_KINDS = (ConvergenceError, PositivityError, DegeneracyError,
                 DegenerateFrontierError, StateError, DomainError)


def _fail(err: DelayLQError) -> int:
    payload = {"error": {"kind": err.kind, "message": str(err)}}
    print(json.dumps(payload), file=sys.stderr)
    if isinstance(err, (ParameterError, CSVFormatError)):
        return _USAGE_EXIT
    if isinstance(err, SimulationError):
        return _SIM_EXIT
    if isinstance(err, _SOLVER_KINDS):
        return _SOLVER_EXIT
    return _USAGE_EXIT


# -- config helpers ---------------------------------------------------------


def _load_config(args) -> ConfigDict:
    cfg = parse_config(args.config) if args.config else {}
    if getattr(args, "m", None) is not None:
        set_key(cfg, "grid", "m", args.m)
    if getattr(args, "seed", None) is not None:
        set_key(cfg, "sim", "master_seed", args.seed)
    if getattr(args, "paths", None) is not None:
        set_key(cfg, "sim", "n_paths", args.paths)
    if getattr(args, "test_mode", False):
        set_key(cfg, "sim", "test_mode", "true")
    return cfg


def _kind(cfg: ConfigDict) -> str:
    kind = get_str(cfg, "problem", "kind", "single")
    if kind not in ("single", "two-asset", "markowitz", "markowitz2"):
        raise ParameterError(f"unknown problem kind {kind!r}")
    return kind


def _model_params(cfg: ConfigDict, kind: str):
    if kind == "single":
        return ModelParams(b=get_float(cfg, "model", "b"),
                           sigma=get_float(cfg, "model", "sigma"),
                           d=get_float(cfg, "model", "d"),
                           T=get_float(cfg, "model", "T"))
    if kind == "markowitz":
        return _market_params(cfg).to_model()
    # two-asset kinds
    return TwoAssetParams(sigma1=get_float(cfg, "two_asset", "sigma1"),
                          sigma2=get_float(cfg, "two_asset", "sigma2"),
                          lambda1=get_float(cfg, "two_asset", "lambda1"),
                          lambda2=get_float(cfg, "two_asset", "lambda2"),
                          rho=get_float(cfg, "two_asset", "rho"),
                          d=get_float(cfg, "two_asset", "d"),
                          T=get_float(cfg, "two_asset", "T"))


def _market_params(cfg: ConfigDict) -> MarketParams:
    return MarketParams(lam=get_float(cfg, "market", "lambda"),
                        sigma=get_float(cfg, "market", "sigma"),
                        d=get_float(cfg, "market", "d"),
                        T=get_float(cfg, "market", "T"),
                        x0=get_float(cfg, "market", "x0"),
                        c=get_float(cfg, "market", "c", 0.0))


def _solve_config(cfg: ConfigDict) -> SolveConfig:
    floor = cfg.get("solve", {}).get("positivity_floor")
    return SolveConfig(
        tol=get_float(cfg, "solve", "tol", 1e-11),
        max_iter=get_int(cfg, "solve", "max_iter", 400),
        positivity_floor=float(floor) if floor is not None else None)


def _grid_spec(cfg: ConfigDict, params) -> GridSpec:
    m = get_int(cfg, "grid", "m", 32)
    return GridSpec.build(d=params.d, T=params.T, m=m)


def _gamma(cfg: ConfigDict, spec: GridSpec | None) -> InitialSegment:
    kind = get_str(cfg, "gamma", "kind", "constant")
    if kind == "constant":
        return InitialSegment.const(get_float(cfg, "gamma", "value", 0.0))
    if kind == "table":
        path = get_str(cfg, "gamma", "file")
        if not os.path.exists(path):
            raise ParameterError(f"gamma table file not found: {path}")
        with open(path) as fh:
            values = [float(tok) for tok in fh.read().split()]
        return InitialSegment.tabulated(values)
    raise ParameterError(f"unknown gamma kind {kind!r}")


def _sim_config(cfg: ConfigDict) -> SimConfig:
    return SimConfig(n_paths=get_int(cfg, "sim", "n_paths", 1000),
                     master_seed=get_int(cfg, "sim", "master_seed", 0),
                     x0=get_float(cfg, "sim", "x0",
                                  get_float(cfg, "market", "x0", 0.0)
                                  if "market" in cfg else None),
                     test_mode=get_bool(cfg, "sim", "test_mode", False))


def _solve_for(cfg: ConfigDict, kind: str):
    params = _model_params(cfg, kind)
    spec = _grid_spec(cfg, params)
    scfg = _solve_config(cfg)
    if isinstance(params, TwoAssetParams):
        grid, diag = solve_two_asset(params, spec, scfg)
    else:
        grid, diag = solve_single(params, spec, scfg)
    return grid, diag


def _write_manifest(outdir: str, command: str, cfg: ConfigDict,
                    outputs: list[str]) -> None:
    seed = cfg.get("sim", {}).get("master_seed")
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "seed": int(seed) if seed is not None else None,
        "versions": {"delaylq": __version__,
                     "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "outputs": outputs,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_outdir(args) -> str:
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _diag_payload(diag) -> dict:
    return {
        "slices": [{"index": s.index, "j_lo": s.j_lo, "j_up": s.j_up,
                    "iterations": s.iterations, "residual": s.residual,
                    "min_p11": s.min_p11, "bound": s.bound}
                   for s in diag.slices],
        "min_p2hat2_t0": None if math.isinf(diag.min_p2hat2_t0)
        else diag.min_p2hat2_t0,
        "min_p11": diag.min_p11,
        "positivity_ok": diag.positivity_ok,
        "sufficient_holds": diag.sufficient_holds,
        "a_seq": list(diag.a_seq) if diag.a_seq is not None else None,
    }


# -- subcommands -------------------------------------------------------------


def cmd_check(args) -> int:
    cfg = _load_config(args)
    kind = _kind(cfg)
    params = _model_params(cfg, kind)
    if isinstance(params, TwoAssetParams):
        raise ParameterError("check applies to single-asset/markowitz kinds")
    report = feasibility(params)
    payload = {
        "a_seq": list(report.a_seq),
        "n_cal": report.n_cal,
        "sufficient_holds": report.sufficient_holds,
        "margin": None if math.isinf(report.margin) else report.margin,
    }
    print(json.dumps(payload, indent=2))
    return 0 if report.sufficient_holds else _ADVISORY_EXIT


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    kind = _kind(cfg)
    outdir = _ensure_outdir(args)
    grid, diag = _solve_for(cfg, kind)
    outputs = []
    for which in KERNEL_IDS:
        path = os.path.join(outdir, f"p{which}.csv")
        export_csv(grid, which, path)
        outputs.append(os.path.basename(path))
    with open(os.path.join(outdir, "diagnostics.json"), "w") as fh:
        json.dump(_diag_payload(diag), fh, indent=2)
        fh.write("\n")
    outputs.append("diagnostics.json")
    _write_manifest(outdir, "solve", cfg, outputs)
    print(json.dumps({"outdir": outdir, "min_p11": diag.min_p11,
                      "positivity_ok": diag.positivity_ok}))
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    kind = _kind(cfg)
    outdir = _ensure_outdir(args)
    grid, _ = _solve_for(cfg, kind)
    gamma = _gamma(cfg, grid.spec)
    sim_cfg = _sim_config(cfg)

    if kind in ("markowitz", "markowitz2"):
        market = _market_params(cfg)
        x0 = market.x0
        sim_cfg = SimConfig(n_paths=sim_cfg.n_paths,
                            master_seed=sim_cfg.master_seed, x0=x0,
                            test_mode=sim_cfg.test_mode)
        _, xi = eta_star(grid, x0, market.c, gamma)
    else:
        xi = get_float(cfg, "sim", "xi", 0.0)

    if kind in ("two-asset", "markowitz2"):
        bundle = simulate_two_asset(grid, gamma, sim_cfg, xi)
    else:
        bundle = simulate(grid, gamma, sim_cfg, xi)

    paths_csv = os.path.join(outdir, "paths.csv")
    two_asset = bundle.beta is not None
    with open(paths_csv, "w") as fh:
        fh.write("path_id,t,X,alpha,beta\n" if two_asset
                 else "path_id,t,X,alpha\n")
        m = grid.spec.m
        for i in range(bundle.X.shape[0]):
            for k, t in enumerate(bundle.times):
                if two_asset:
                    row = (f"{i},{t:.17g},{bundle.X[i, k]:.17g},"
                           f"{bundle.alpha[i, k]:.17g},"
                           f"{bundle.beta[i, k + m]:.17g}")
                else:
                    row = (f"{i},{t:.17g},{bundle.X[i, k]:.17g},"
                           f"{bundle.alpha[i, k + m]:.17g}")
                fh.write(row + "\n")

    cost = (bundle.terminal() - xi) ** 2
    st = stats_of(cost)
    stats = {"mean": st.mean, "variance": st.variance,
             "std_error": st.std_error, "n_paths": st.n_paths,
             "seed": sim_cfg.master_seed,
             "functional": "squared_terminal_tracking_error",
             "xi": xi, "v0": value_of(grid, sim_cfg.x0 - xi, gamma)}
    with open(os.path.join(outdir, "stats.json"), "w") as fh:
        json.dump(stats, fh, indent=2)
        fh.write("\n")
    _write_manifest(outdir, "simulate", cfg, ["paths.csv", "stats.json"])
    print(json.dumps({"outdir": outdir, "mean": st.mean,
                      "std_error": st.std_error}))
    return 0


def cmd_frontier(args) -> int:
    cfg = _load_config(args)
    kind = _kind(cfg)
    if kind not in ("markowitz", "markowitz2"):
        raise ParameterError("frontier requires a markowitz problem kind")
    outdir = _ensure_outdir(args)
    grid, _ = _solve_for(cfg, kind)
    gamma = _gamma(cfg, grid.spec)
    market = _market_params(cfg)
    if "c_list" in cfg.get("market", {}):
        c_list = get_float_list(cfg, "market", "c_list")
    else:
        c_list = [market.c]
    fn = two_asset_frontier if kind == "markowitz2" else frontier
    points = fn(grid, market.x0, gamma, c_list)
    path = os.path.join(outdir, "frontier.csv")
    with open(path, "w") as fh:
        fh.write("c,eta_star,xi_star,variance\n")
        for p in points:
            fh.write(f"{p.c:.17g},{p.eta_star:.17g},{p.xi_star:.17g},"
                     f"{p.variance:.17g}\n")
    _write_manifest(outdir, "frontier", cfg, ["frontier.csv"])
    print(json.dumps({"outdir": outdir, "n_points": len(points)}))
    return 0


def cmd_compare(args) -> int:
    report = {}
    for which in KERNEL_IDS:
        fa = os.path.join(args.path_a, f"p{which}.csv")
        fb = os.path.join(args.path_b, f"p{which}.csv")
        if not (os.path.exists(fa) and os.path.exists(fb)):
            continue
        sa, sb = import_csv(fa), import_csv(fb)
        diff, point, n_common = max_abs_diff_slices(sa, sb)
        report[f"p{which}"] = {"max_diff": diff, "at": point,
                               "n_common": n_common}
    if not report:
        raise ParameterError("no common kernel CSV files to compare")
    out = json.dumps(report, indent=2)
    print(out)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare.json"), "w") as fh:
            fh.write(out + "\n")
    return 0


# -- entry -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="delaylq",
        description="Riccati-kernel toolkit for LQ control with delayed "
                    "control and Markowitz selection under execution delay")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config,
                       help="run configuration file (INI sections)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override [sim] master_seed")
        p.add_argument("--m", type=int, default=None,
                       help="override [grid] m (steps per delay)")
        p.add_argument("--paths", type=int, default=None,
                       help="override [sim] n_paths")
        p.add_argument("--test-mode", action="store_true",
                       help="zero-noise deterministic simulation")

    common(sub.add_parser("check", help="feasibility recursion report"))
    common(sub.add_parser("solve", help="solve kernels, export CSVs"))
    common(sub.add_parser("simulate", help="Monte Carlo under the optimal "
                                           "feedback"))
    common(sub.add_parser("frontier", help="mean-variance frontier CSV"))
    pc = sub.add_parser("compare", help="max node-wise difference between "
                                        "two kernel CSV directories")
    pc.add_argument("path_a")
    pc.add_argument("path_b")
    pc.add_argument("--out", default=None)
    return ap


_DISPATCH = {
    "check": cmd_check,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "frontier": cmd_frontier,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return _USAGE_EXIT if exc.code not in (0, None) else 0
    try:
        return _DISPATCH[args.command](args)
    except DelayLQError as err:
        return _fail(err)


def entry() -> None:
    sys.exit(main())
