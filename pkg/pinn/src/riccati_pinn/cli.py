"""Train-and-export command line.

Reads the same INI config format as the grid solver's CLI; the model
coefficients come from [model] (or [market] via b = sigma*lambda) and the
training hyperparameters from the [pinn] section: steps, batch_interior,
batch_boundary, batch_terminal, lr, seed, width, depth, quotient_floor.
Outputs kernel CSVs in the shared schema plus loss_history.csv.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

from .export import GridLayout, export_kernels, export_loss_history
from .losses import Problem
from .training import Hyper, TrainingError, train


def load_problem(cfg: configparser.ConfigParser) -> Problem:
    if cfg.has_section("model"):
        sec = cfg["model"]
        b = sec.getfloat("b")
        sigma = sec.getfloat("sigma")
        d, T = sec.getfloat("d"), sec.getfloat("T")
    elif cfg.has_section("market"):
        sec = cfg["market"]
        sigma = sec.getfloat("sigma")
        b = sigma * sec.getfloat("lambda")
        d, T = sec.getfloat("d"), sec.getfloat("T")
    else:
        raise ValueError("config needs a [model] or [market] section")
    return Problem(b=b, sigma=sigma, d=d, T=T)


def load_hyper(cfg: configparser.ConfigParser) -> Hyper:
    base = Hyper()
    if not cfg.has_section("pinn"):
        return base
    sec = cfg["pinn"]
    floor = sec.getfloat("quotient_floor", fallback=None)
    return Hyper(
        steps=sec.getint("steps", fallback=base.steps),
        batch_interior=sec.getint("batch_interior",
                                  fallback=base.batch_interior),
        batch_boundary=sec.getint("batch_boundary",
                                  fallback=base.batch_boundary),
        batch_terminal=sec.getint("batch_terminal",
                                  fallback=base.batch_terminal),
        lr=sec.getfloat("lr", fallback=base.lr),
        seed=sec.getint("seed", fallback=base.seed),
        width=sec.getint("width", fallback=base.width),
        depth=sec.getint("depth", fallback=base.depth),
        quotient_floor=floor,
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="riccati-pinn",
        description="neural solver for the delayed-control kernel system")
    sub = ap.add_subparsers(dest="command", required=True)
    tr = sub.add_parser("train", help="train and export kernel CSVs")
    tr.add_argument("--config", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--m", type=int, default=32,
                    help="steps per delay for the export grid")
    tr.add_argument("--steps", type=int, default=None,
                    help="override [pinn] steps")
    tr.add_argument("--seed", type=int, default=None,
                    help="override [pinn] seed")
    args = ap.parse_args(argv)

    cfg = configparser.ConfigParser()
    cfg.optionxform = str
    if not os.path.exists(args.config):
        print(json.dumps({"error": {"kind": "parameter",
                                    "message": f"no config {args.config}"}}),
              file=sys.stderr)
        return 1
    cfg.read(args.config)
    try:
        prob = load_problem(cfg)
        hyper = load_hyper(cfg)
        if args.steps is not None:
            hyper.steps = args.steps
        if args.seed is not None:
            hyper.seed = args.seed
        result = train(prob, hyper)
    except TrainingError as err:
        print(json.dumps({"error": {"kind": "training",
                                    "message": str(err), "step": err.step}}),
              file=sys.stderr)
        return 3
    except ValueError as err:
        print(json.dumps({"error": {"kind": "parameter",
                                    "message": str(err)}}), file=sys.stderr)
        return 1

    layout = GridLayout.build(d=prob.d, T=prob.T, m=args.m)
    os.makedirs(args.out, exist_ok=True)
    export_kernels(result.bank, layout, args.out)
    export_loss_history(result.history, args.out)
    final = result.history[-1] if result.history else {}
    print(json.dumps({"outdir": args.out, "steps": hyper.steps,
                      "final_losses": final}))
    return 0


def entry() -> None:
    sys.exit(main())
