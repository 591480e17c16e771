"""Monte Carlo sweeps over SNR or sensor count.

Every ``(sweep value, trial)`` pair draws from its own seed stream, derived
from the master seed as ``SeedSequence(master_seed, spawn_key=(value_index,
trial))``. All methods of one trial see the same data. Results are reduced in
trial order, so the output does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import functools
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..array_model import ArrayGeometry, SourceScene, snr_to_noise_std, synthesize_snapshot
from ..dictionary import build_dictionary, build_grid, neighbor_dictionary
from ..estimators import EstimatorConfig, estimate
from .config import ExperimentConfig
from .crb import crb_variances
from .metrics import format_db, pcd, rmse_db

WORKERS_ENV = "OFFGRID_DOA_WORKERS"
AGGREGATE_COLUMNS = ("method", "sweep_value", "rmse_db", "pcd", "n_fail", "crb_db")


@dataclass(frozen=True)
class MetricRow:
    method: str
    sweep_value: float
    rmse_db: float
    pcd: float
    n_fail: int
    crb_db: float
    mean_iterations: float
    mean_runtime_ms: float

    def csv_row(self) -> dict:
        return {"method": self.method, "sweep_value": _fmt_value(self.sweep_value),
                "rmse_db": format_db(self.rmse_db), "pcd": repr(self.pcd), "n_fail": self.n_fail,
                "crb_db": repr(self.crb_db)}


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list[MetricRow]
    raw: list[dict]
    paths: dict

    def row(self, method: str, sweep_value) -> MetricRow:
        for r in self.rows:
            if r.method == method and r.sweep_value == sweep_value:
                return r
        raise KeyError((method, sweep_value))


def raw_columns(K: int) -> list[str]:
    return (["trial", "method", "sweep_value"] + [f"u_hat_{k + 1}" for k in range(K)]
            + [f"p_hat_{k + 1}" for k in range(K)] + ["status", "iterations", "runtime_ms"])


def _fmt_value(v) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        workers = int(env) if env else 1
    return max(1, int(workers))


@functools.lru_cache(maxsize=64)
def _dictionaries(positions: tuple, grid_size: float):
    geometry = ArrayGeometry(np.array(positions))
    grid = build_grid(grid_size)
    return build_dictionary(geometry, grid, 2), neighbor_dictionary(geometry, grid)[:, grid.size:]


def trial_geometry(config: ExperimentConfig, value, rng) -> ArrayGeometry:
    sc = config.scenario
    M = int(value) if config.sweep.axis == "num_sensors" else sc.num_sensors
    seed = rng if config.resample_geometry else sc.selection_seed
    return ArrayGeometry.random_subarray(sc.total_sensors, M, seed, sc.spacing)


def run_trial(config: ExperimentConfig, value_index: int, trial: int):
    """One trial of every method; returns raw rows and the CRB variances (or None)."""
    value = config.sweep.values[value_index]
    ss = np.random.SeedSequence(config.master_seed, spawn_key=(value_index, trial))
    geo_ss, noise_ss = ss.spawn(2)
    geometry = trial_geometry(config, value, np.random.default_rng(geo_ss))
    snr = value if config.sweep.axis == "snr_db" else config.sweep.snr_db
    sigma = snr_to_noise_std(snr)
    scene = SourceScene(config.frequencies, config.amplitudes, sigma)
    snapshot = synthesize_snapshot(geometry, scene, np.random.default_rng(noise_ss))
    M = geometry.num_sensors
    mu = sigma * math.sqrt(M * math.log(M)) if config.mu_rule == "sigma_sqrt_m_ln_m" else config.mu
    dictionary, shifted = _dictionaries(tuple(geometry.positions), config.grid_size)
    K = config.num_sources

    rows = []
    for method in config.methods:
        est_cfg = EstimatorConfig(method=method, mu=mu, eta=config.eta, source_count=K,
                                  tolerance=config.tolerance, max_iterations=config.max_iterations)
        res = estimate(snapshot, dictionary, est_cfg, shifted=shifted)
        row = {"trial": trial, "method": method, "sweep_value": _fmt_value(value)}
        for k in range(K):
            row[f"u_hat_{k + 1}"] = repr(float(res.frequencies[k])) if res.ok else "nan"
        for k in range(K):
            row[f"p_hat_{k + 1}"] = repr(float(res.offsets[k])) if res.ok else "nan"
        row.update(status=res.status, iterations=res.iterations, runtime_ms=f"{1e3 * res.runtime:.3f}")
        rows.append(row)
    crb = crb_variances(geometry, scene) if sigma > 0 else None
    return rows, crb


def _run_job(args):
    return run_trial(*args)


def aggregate(config: ExperimentConfig, raw: list[dict], crbs: dict) -> list[MetricRow]:
    K = config.num_sources
    truth = np.array(config.frequencies)
    out = []
    for vi, value in enumerate(config.sweep.values):
        key = _fmt_value(value)
        var = crbs.get(vi, [])
        crb_db = (10.0 * math.log10(math.sqrt(float(np.mean([np.mean(v) for v in var]))))
                  if var and all(v is not None for v in var) else float("nan"))
        for method in config.methods:
            rows = [r for r in raw if r["method"] == method and r["sweep_value"] == key]
            est = np.array([[float(r[f"u_hat_{k + 1}"]) for k in range(K)] for r in rows])
            n_fail = sum(r["status"] != "ok" for r in rows)
            out.append(MetricRow(method, float(value), rmse_db(est, truth), pcd(est, truth, config.grid_size),
                                 n_fail, crb_db, float(np.mean([r["iterations"] for r in rows])),
                                 float(np.mean([float(r["runtime_ms"]) for r in rows]))))
    return out


def run_sweep(config: ExperimentConfig, out_dir=None, stem: str = "sweep",
              workers: int | None = None) -> SweepResult:
    """Run every method on every trial of every sweep value.

    When ``out_dir`` is given, writes ``<stem>_aggregate.csv``,
    ``<stem>_raw.csv`` and the gnuplot table ``<stem>.dat``.
    """
    jobs = [(config, vi, q) for vi in range(len(config.sweep.values)) for q in range(config.trials)]
    n = worker_count(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    else:
        results = [_run_job(j) for j in jobs]

    raw, crbs = [], {}
    for (_, vi, _), (rows, crb) in zip(jobs, results):
        raw.extend(rows)
        crbs.setdefault(vi, []).append(crb)
    rows = aggregate(config, raw, crbs)
    paths = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"aggregate": out / f"{stem}_aggregate.csv", "raw": out / f"{stem}_raw.csv",
                 "gnuplot": out / f"{stem}.dat"}
        paths["aggregate"].write_text(aggregate_csv(rows))
        paths["raw"].write_text(raw_csv(raw, config.num_sources))
        paths["gnuplot"].write_text(gnuplot_table(config, rows))
    return SweepResult(config, rows, raw, paths)


def aggregate_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=AGGREGATE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


def raw_csv(raw, K: int) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=raw_columns(K), lineterminator="\n")
    w.writeheader()
    w.writerows(raw)
    return buf.getvalue()


def gnuplot_table(config: ExperimentConfig, rows) -> str:
    """Whitespace-separated table, one line per sweep value, NaN for missing points.

    An RMSE of -inf (all trials exact) is also written as NaN.
    """
    cols = [config.sweep.axis]
    for m in config.methods:
        cols += [f"{m}_rmse_db", f"{m}_pcd"]
    cols.append("crb_db")
    lines = ["# " + " ".join(cols)]
    by_key = {(r.method, r.sweep_value): r for r in rows}

    def num(x):
        return "NaN" if not math.isfinite(x) else repr(float(x))

    for value in config.sweep.values:
        vals = [_fmt_value(value)]
        crb = float("nan")
        for m in config.methods:
            r = by_key[(m, float(value))]
            vals += [num(r.rmse_db), num(r.pcd)]
            crb = r.crb_db
        vals.append(num(crb))
        lines.append(" ".join(vals))
    return "\n".join(lines) + "\n"
