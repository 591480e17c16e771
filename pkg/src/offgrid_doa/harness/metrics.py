"""RMSE and probability-of-correct-detection over Monte Carlo trials.

Estimates are passed as a ``Q x K`` array. A row of NaNs marks a failed
trial: it is left out of the RMSE and counts as a miss for the PCD.
Estimates and truth are paired after sorting both in ascending order.
"""

from __future__ import annotations

import math

import numpy as np

EXACT = "exact"  # CSV rendering of an RMSE of -inf dB (all estimates exact)


def _as_matrix(estimates, truth):
    truth = np.sort(np.atleast_1d(np.asarray(truth, dtype=float)))
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est.reshape(1, -1) if est.size == truth.size else est.reshape(-1, 1)
    if est.ndim != 2 or est.shape[1] != truth.size:
        raise ValueError(f"estimates of shape {est.shape} do not match {truth.size} true frequencies")
    return np.sort(est, axis=1), truth


def pairing_errors(estimates, truth) -> np.ndarray:
    """``Q x K`` absolute errors after sorted pairing (NaN rows stay NaN)."""
    est, truth = _as_matrix(estimates, truth)
    return np.abs(est - truth[None, :])


def successful(estimates) -> np.ndarray:
    est = np.asarray(estimates, dtype=float)
    est = est.reshape(est.shape[0], -1) if est.ndim == 2 else est.reshape(1, -1)
    return np.all(np.isfinite(est), axis=1)


def rmse_db(estimates, truth) -> float:
    """``10 log10(sqrt(mean squared error))`` over the successful trials.

    Returns ``-inf`` when every estimate is exact and NaN when no trial
    succeeded.
    """
    est, truth = _as_matrix(estimates, truth)
    if est.shape[0] == 0:
        raise ValueError("no trials given")
    ok = np.all(np.isfinite(est), axis=1)
    if not np.any(ok):
        return float("nan")
    mse = float(np.mean((est[ok] - truth[None, :]) ** 2))
    if mse == 0.0:
        return float("-inf")
    return 10.0 * math.log10(math.sqrt(mse))


def pcd(estimates, truth, grid_size: float) -> float:
    """Fraction of trials with ``max_k |u_hat_k - u_k| <= grid_size / 2``."""
    err = pairing_errors(estimates, truth)
    if err.shape[0] == 0:
        raise ValueError("no trials given")
    with np.errstate(invalid="ignore"):
        hit = np.all(np.isfinite(err), axis=1) & (np.nanmax(np.where(np.isfinite(err), err, np.inf), axis=1)
                                                   <= 0.5 * grid_size)
    return float(np.mean(hit))


def format_db(value: float) -> str:
    if value == float("-inf"):
        return EXACT
    return repr(float(value))


def parse_db(text: str) -> float:
    return float("-inf") if text == EXACT else float(text)
