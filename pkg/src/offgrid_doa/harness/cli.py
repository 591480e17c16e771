"""Command line: ``offgrid-doa {simulate,rip-probe,estimate,complexity}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys

import numpy as np

from ..array_model import ArrayGeometry
from ..dictionary import build_dictionary, build_grid
from ..estimators import METHODS, EstimatorConfig, estimate


def _cmd_simulate(args) -> int:
    from .config import load_config
    from .sweep import run_sweep

    config = load_config(args.config)
    result = run_sweep(config, args.out, args.stem, args.workers)
    for r in result.rows:
        print(f"{r.method:16s} {r.sweep_value:8g}  rmse_db={r.rmse_db:9.3f}  pcd={r.pcd:.3f}  fail={r.n_fail}")
    for kind, path in result.paths.items():
        print(f"wrote {kind}: {path}")
    return 0


def _cmd_rip(args) -> int:
    from ..rip_probe import estimate_probabilities, write_csv

    geometry = ArrayGeometry.ula(args.sensors)
    grid = build_grid(args.grid_size)
    sparsities = list(range(args.min_sparsity, args.max_sparsity + 1, args.step))
    out = []
    for structure, b in [("lasso", 1), ("neighbor", 2), ("taylor1", 2), ("taylor2", 3)]:
        if structure in args.structures:
            out += estimate_probabilities(geometry, grid, b, sparsities, args.trials, "gaussian", args.seed,
                                          structure, args.workers)
    if "proportional" in args.structures:
        out += estimate_probabilities(geometry, grid, 3, sparsities, args.trials, "proportional", args.seed,
                                      workers=args.workers)
    if args.out:
        write_csv(out, args.out)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["b", "generator", "two_K", "prob_lt_1", "prob_lt_sqrt2m1"])
    for e in out:
        w.writerow([e.block_length, e.generator, e.sparsity, f"{e.prob_lt_1:.4f}", f"{e.prob_lt_sqrt2m1:.4f}"])
    return 0


def _load_observation(path):
    """JSON with ``geometry`` (as written by ArrayGeometry.to_dict) and ``observation``
    given as ``{"real": [...], "imag": [...]}``."""
    with open(path) as fh:
        data = json.load(fh)
    geometry = ArrayGeometry.from_dict(data["geometry"])
    obs = data["observation"]
    y = np.asarray(obs["real"], dtype=float) + 1j * np.asarray(obs.get("imag", np.zeros(len(obs["real"]))))
    return geometry, y, data.get("noise_std")


def _cmd_estimate(args) -> int:
    geometry, y, noise_std = _load_observation(args.input)
    grid = build_grid(args.grid_size)
    dictionary = build_dictionary(geometry, grid, 2)
    M = geometry.num_sensors
    if args.mu is not None:
        mu = args.mu
    else:
        sigma = args.noise_std if args.noise_std is not None else noise_std
        if sigma is None or not sigma > 0:
            print("error: give --mu, --noise-std or a positive noise_std in the input file", file=sys.stderr)
            return 2
        mu = sigma * math.sqrt(M * math.log(M))
    rows = []
    for method in args.methods:
        cfg = EstimatorConfig(method=method, mu=mu, eta=args.eta, source_count=args.sources)
        res = estimate(y, dictionary, cfg, geometry)
        rows.append(res.csv_row(args.sources))
    cols = list(rows[0])
    w = csv.DictWriter(sys.stdout, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return 0


def _cmd_complexity(args) -> int:
    from ..conic.complexity import complexity_probe, growth_exponent

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["method", "L", "per_iteration_s", "iterations", "num_variables", "status"])
    results = []
    for method in args.methods:
        rows = complexity_probe(args.sensors, args.grid_points, args.trials, method, seed=args.seed)
        results.append((method, rows))
        for r in rows:
            w.writerow([method, r.grid_points, f"{r.per_iteration_time:.6g}", f"{r.iterations:g}",
                        r.num_variables, r.status])
    if len(args.grid_points) > 1:
        for method, rows in results:
            print(f"# {method}: growth exponent {growth_exponent(rows):.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="offgrid-doa", description="Off-grid sparse DOA estimation experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run an experiment config and write CSV and gnuplot files")
    s.add_argument("config")
    s.add_argument("--out", default=".", help="output directory")
    s.add_argument("--stem", default="sweep")
    s.add_argument("--workers", type=int, default=None, help="process count (default: $OFFGRID_DOA_WORKERS or 1)")
    s.set_defaults(func=_cmd_simulate)

    r = sub.add_parser("rip-probe", help="Monte Carlo block-RIP probabilities")
    r.add_argument("--sensors", type=int, default=8)
    r.add_argument("--grid-size", type=float, default=0.01)
    r.add_argument("--trials", type=int, default=10000)
    r.add_argument("--min-sparsity", type=int, default=2)
    r.add_argument("--max-sparsity", type=int, default=20)
    r.add_argument("--step", type=int, default=2)
    r.add_argument("--structures", nargs="+", default=["lasso", "neighbor", "taylor1", "taylor2", "proportional"],
                   choices=["lasso", "neighbor", "taylor1", "taylor2", "proportional"])
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--out", help="CSV path")
    r.set_defaults(func=_cmd_rip)

    e = sub.add_parser("estimate", help="estimate frequencies from one snapshot stored as JSON")
    e.add_argument("input")
    e.add_argument("--methods", nargs="+", default=["taylor2_glasso"], choices=METHODS)
    e.add_argument("--sources", type=int, default=1)
    e.add_argument("--grid-size", type=float, default=0.01)
    e.add_argument("--mu", type=float, default=None)
    e.add_argument("--noise-std", type=float, default=None)
    e.add_argument("--eta", type=float, default=1e-5)
    e.set_defaults(func=_cmd_estimate)

    c = sub.add_parser("complexity", help="per-iteration solver time versus grid size")
    c.add_argument("--sensors", type=int, default=16)
    c.add_argument("--grid-points", type=int, nargs="+", default=[50, 100, 200, 400])
    c.add_argument("--trials", type=int, default=3)
    c.add_argument("--methods", nargs="+", default=["lasso", "neighbor_glasso", "taylor1_glasso", "taylor2_glasso"],
                   choices=METHODS)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=_cmd_complexity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
