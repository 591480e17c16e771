"""Empirical per-iteration cost of the estimation programs as the grid grows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ComplexityRow:
    method: str
    grid_points: int
    per_iteration_time: float  # seconds, median over trials
    iterations: float  # median over trials
    num_variables: int
    status: str


def complexity_probe(M: int = 16, L=(50, 100, 200, 400), trials: int = 3,
                     method: str = "taylor2_glasso", snr_db: float = 30.0,
                     frequencies=(0.1815, 0.7942), seed: int = 0) -> list[ComplexityRow]:
    """Time one estimation program per grid size ``L``.

    The array is ``M`` sensors drawn from a ``M + 4`` element half-wavelength
    ULA, the grid size is ``2 / L``. Each trial redraws the noise; the
    reported time is, per grid size, the smallest over trials of the median
    per-iteration solver time (setup and program assembly excluded). One
    untimed solve per grid size warms caches before the timed trials.

    Returns
    -------
    list of ComplexityRow
        One row per entry of ``L``, in the given order.
    """
    from ..array_model import ArrayGeometry, SourceScene, snr_to_noise_std, synthesize_snapshot
    from ..dictionary import build_dictionary, build_grid, neighbor_dictionary
    from ..estimators import EstimatorConfig, build_program

    if trials < 1:
        raise ValueError("trials must be at least 1")
    ss = np.random.SeedSequence(seed)
    geo_seed, *trial_seeds = ss.spawn(trials + 1)
    geometry = ArrayGeometry.random_subarray(M + 4, M, np.random.default_rng(geo_seed))
    sigma = snr_to_noise_std(snr_db)
    scene = SourceScene(frequencies, None, sigma)
    mu = sigma * np.sqrt(M * np.log(M))
    snaps = [synthesize_snapshot(geometry, scene, np.random.default_rng(s)) for s in trial_seeds]

    from . import solve

    Ls = [int(v) for v in np.atleast_1d(L)]
    setups = []
    for Lval in Ls:
        grid = build_grid(2.0 / Lval)
        dictionary = build_dictionary(geometry, grid, 2)
        shifted = neighbor_dictionary(geometry, grid)[:, grid.size:] if method == "neighbor_glasso" else None
        eta = min(1e-5, 0.1 * (grid.grid_size / 2) ** 2)
        config = EstimatorConfig(method=method, mu=mu, eta=eta, source_count=len(frequencies))
        progs = [build_program(snap.observation, dictionary, config, shifted)[0] for snap in snaps]
        solve(progs[0], config.tolerance, config.max_iterations)  # warm-up
        setups.append((grid.size, config, progs))

    # rounds visit every grid size in turn, so slow drifts of the machine hit all sizes alike
    per_trial = [[] for _ in Ls]
    for t in range(trials):
        for k, (_, config, progs) in enumerate(setups):
            per_trial[k].append(solve(progs[t], config.tolerance, config.max_iterations))

    rows = []
    for (size, _, progs), results in zip(setups, per_trial):
        statuses = {r.status for r in results}
        status = statuses.pop() if len(statuses) == 1 else "mixed"
        # minimum over trials of the median iteration time: robust to background load
        t_iter = min(float(np.median(r.iteration_times)) for r in results if r.iteration_times)
        rows.append(ComplexityRow(method, size, t_iter, float(np.median([r.iterations for r in results])),
                                  progs[0].num_variables, status))
    return rows


def growth_exponent(rows) -> float:
    """Slope of the least-squares line through ``(log L, log time)``."""
    L = np.array([r.grid_points for r in rows], dtype=float)
    t = np.array([r.per_iteration_time for r in rows], dtype=float)
    return float(np.polyfit(np.log(L), np.log(t), 1)[0])
