"""Cramér-Rao reference for single-snapshot frequency estimation.

This is the deterministic-signal bound with the amplitudes known: the
observation ``y = A(u) s + n``, ``n ~ CN(0, sigma^2 I)``, has Fisher
information for ``u``

    F_ij = (2 / sigma^2) s_i s_j Re(a'(u_i)^H a'(u_j)).

It is a completion used as a benchmark column, not the only possible
variant (unknown amplitudes or a stochastic source model give larger bounds).
"""

from __future__ import annotations

import math

import numpy as np

from ..array_model import ArrayGeometry, SourceScene, steering_derivative


def fisher_information(geometry: ArrayGeometry, scene: SourceScene) -> np.ndarray:
    if not scene.noise_std > 0:
        raise ValueError("the bound needs a positive noise level")
    da = steering_derivative(geometry, scene.frequencies, 1)
    s = scene.amplitudes
    return (2.0 / scene.noise_std ** 2) * np.outer(s, s) * np.real(da.conj().T @ da)


def crb_variances(geometry: ArrayGeometry, scene: SourceScene) -> np.ndarray | None:
    """Diagonal of the inverse Fisher information, or None when it is singular."""
    F = fisher_information(geometry, scene)
    if np.linalg.cond(F) > 1e12:
        return None
    return np.diag(np.linalg.inv(F)).copy()


def crb_reference(geometry: ArrayGeometry, scene: SourceScene) -> float:
    """Bound on the RMSE in dB, ``10 log10(sqrt(mean_k CRB_k))``; NaN if unavailable."""
    var = crb_variances(geometry, scene)
    if var is None:
        return float("nan")
    return 10.0 * math.log10(math.sqrt(float(np.mean(var))))
