"""Linear array geometry, steering vectors and snapshot synthesis.

Sensor positions are held in units of wavelength, so the phase of sensor
``m`` for spatial frequency ``u`` is ``2*pi*positions[m]*u``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised for an invalid array geometry or source scene."""


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Linear array with sensor positions stored in wavelengths.

    Parameters
    ----------
    positions : array_like
        Sensor coordinates divided by the wavelength (``q / lambda``).
    wavelength : float
        Physical wavelength. Only kept so that physical positions can be
        recovered; the model itself depends on the ratio alone.
    """

    positions: np.ndarray
    wavelength: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).ravel()
        if pos.size < 2:
            raise GeometryError("an array needs at least two sensors")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("sensor positions must be finite")
        if np.unique(pos).size != pos.size:
            raise GeometryError("sensor positions must be pairwise distinct")
        if not (self.wavelength > 0 and np.isfinite(self.wavelength)):
            raise GeometryError("wavelength must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_physical(cls, positions, wavelength: float) -> "ArrayGeometry":
        """Build from positions in length units (the same units as ``wavelength``)."""
        if not wavelength > 0:
            raise GeometryError("wavelength must be positive")
        return cls(np.asarray(positions, dtype=float) / wavelength, wavelength)

    @classmethod
    def ula(cls, num_sensors: int, spacing: float = 0.5) -> "ArrayGeometry":
        """Uniform linear array with the first sensor at the origin."""
        return cls(spacing * np.arange(num_sensors))

    @classmethod
    def random_subarray(cls, total: int, selected: int, seed, spacing: float = 0.5) -> "ArrayGeometry":
        """Pick ``selected`` sensors uniformly without replacement from a ``total``-sensor ULA."""
        if not 2 <= selected <= total:
            raise GeometryError(f"cannot select {selected} of {total} sensors")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(total, size=selected, replace=False))
        return cls(spacing * idx)

    @property
    def num_sensors(self) -> int:
        return self.positions.size

    @property
    def physical_positions(self) -> np.ndarray:
        return self.positions * self.wavelength

    @property
    def phase_rates(self) -> np.ndarray:
        """``theta_m = 2*pi*q_m/lambda``, the derivative of each sensor's phase in ``u``."""
        return 2.0 * np.pi * self.positions

    def to_dict(self) -> dict:
        # half-wavelength units keep ULA positions integral
        return {"positions_half_wavelength": (2.0 * self.positions).tolist(),
                "wavelength": self.wavelength}

    @classmethod
    def from_dict(cls, data: dict) -> "ArrayGeometry":
        unknown = set(data) - {"positions_half_wavelength", "wavelength"}
        if unknown:
            raise GeometryError(f"unknown geometry keys: {sorted(unknown)}")
        return cls(0.5 * np.asarray(data["positions_half_wavelength"], dtype=float),
                   float(data.get("wavelength", 1.0)))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "ArrayGeometry":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class SourceScene:
    """Far-field sources: spatial frequencies ``u = sin(phi)``, amplitudes and noise level."""

    frequencies: np.ndarray
    amplitudes: np.ndarray = None
    noise_std: float = 0.0

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        if u.size < 1:
            raise GeometryError("a scene needs at least one source")
        if np.any(u < -1) or np.any(u >= 1) or not np.all(np.isfinite(u)):
            raise GeometryError("spatial frequencies must lie in [-1, 1)")
        s = np.ones_like(u) if self.amplitudes is None else np.atleast_1d(
            np.asarray(self.amplitudes, dtype=float))
        if s.shape != u.shape:
            raise GeometryError("one amplitude per source is required")
        if np.any(s <= 0):
            raise GeometryError("source amplitudes must be positive")
        if not self.noise_std >= 0:
            raise GeometryError("noise_std must be nonnegative")
        u.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "frequencies", u)
        object.__setattr__(self, "amplitudes", s)

    @property
    def num_sources(self) -> int:
        return self.frequencies.size


@dataclass(frozen=True, eq=False)
class Snapshot:
    """One array observation ``y``."""

    observation: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def size(self) -> int:
        return self.observation.size


def snr_to_noise_std(snr_db: float) -> float:
    """Noise standard deviation for unit-amplitude sources, ``SNR = -20 log10(sigma)``."""
    return float(10.0 ** (-snr_db / 20.0))


def steering_vector(geometry: ArrayGeometry, u) -> np.ndarray:
    """Array response ``exp(j*theta_m*u)``.

    A scalar ``u`` gives a length-M vector; an array of frequencies gives an
    ``M x len(u)`` steering matrix.
    """
    u = np.asarray(u, dtype=float)
    return np.exp(1j * np.multiply.outer(geometry.phase_rates, u))


def steering_derivative(geometry: ArrayGeometry, u, order: int) -> np.ndarray:
    """First or second derivative of the steering vector with respect to ``u``."""
    if order not in (1, 2):
        raise ValueError(f"unsupported derivative order {order!r}; expected 1 or 2")
    theta = geometry.phase_rates
    a = steering_vector(geometry, u)
    factor = (1j * theta) ** order
    if a.ndim == 2:
        factor = factor[:, None]
    return factor * a


def synthesize_snapshot(geometry: ArrayGeometry, scene: SourceScene, rng_seed) -> Snapshot:
    """Draw ``y = A(u) s + n`` with circular complex Gaussian noise of power ``noise_std**2``."""
    clean = steering_vector(geometry, scene.frequencies) @ scene.amplitudes
    noise = complex_noise(geometry.num_sensors, scene.noise_std, rng_seed)
    return Snapshot(clean + noise)


def synthesize_snapshots(geometry: ArrayGeometry, scene: SourceScene, num_snapshots: int, rng_seed,
                         random_phase: bool = True) -> list[Snapshot]:
    """Several snapshots of uncorrelated sources for the covariance-domain model.

    Each source keeps its amplitude and gets an independent uniform phase per
    snapshot, so the source covariance is ``diag(amplitudes**2)``.
    """
    rng = np.random.default_rng(rng_seed)
    A = steering_vector(geometry, scene.frequencies)
    out = []
    for _ in range(num_snapshots):
        s = scene.amplitudes.astype(complex)
        if random_phase:
            s = s * np.exp(2j * np.pi * rng.random(s.size))
        n = complex_noise(geometry.num_sensors, scene.noise_std, rng)
        out.append(Snapshot(A @ s + n))
    return out


def complex_noise(size: int, noise_std: float, rng_seed) -> np.ndarray:
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if noise_std == 0:
        return np.zeros(size, dtype=complex)
    scale = noise_std / np.sqrt(2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
