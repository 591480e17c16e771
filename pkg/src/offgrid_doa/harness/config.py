"""Experiment configuration, read from JSON.

Example::

    {
      "scenario": {"total_sensors": 20, "num_sensors": 16, "selection_seed": 1},
      "scene": {"frequencies": [0.1815, 0.7942]},
      "sweep": {"snr_db": [0, 10, 20, 30]},
      "trials": 1000,
      "grid_size": 0.01,
      "methods": ["lasso", "neighbor_glasso", "taylor1_glasso", "taylor2_glasso"],
      "mu_rule": "sigma_sqrt_m_ln_m",
      "eta": 1e-5,
      "master_seed": 0
    }

A sensor-count sweep reads ``"sweep": {"num_sensors": [4, 8, 12], "snr_db": 20}``.
Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from ..dictionary import build_grid
from ..estimators import DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE, METHODS

MU_RULES = ("sigma_sqrt_m_ln_m", "fixed")


class ConfigError(ValueError):
    pass


def _check_keys(data: dict, allowed, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class Scenario:
    total_sensors: int = 20
    num_sensors: int = 16
    selection_seed: int = 1
    spacing: float = 0.5
    # None: fixed selection for an SNR sweep, resampled per trial for a sensor sweep
    resample_geometry: bool | None = None


@dataclass(frozen=True)
class Sweep:
    axis: str
    values: tuple
    snr_db: float | None = None  # fixed SNR of a sensor-count sweep

    def to_json(self) -> dict:
        if self.axis == "snr_db":
            return {"snr_db": list(self.values)}
        return {"num_sensors": list(self.values), "snr_db": self.snr_db}


@dataclass(frozen=True)
class ExperimentConfig:
    sweep: Sweep
    scenario: Scenario = field(default_factory=Scenario)
    frequencies: tuple = (0.1815, 0.7942)
    amplitudes: tuple | None = None
    trials: int = 100
    grid_size: float = 0.01
    methods: tuple = METHODS
    mu_rule: str = "sigma_sqrt_m_ln_m"
    mu: float | None = None
    eta: float = 1e-5
    master_seed: int = 0
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.sweep.values:
            raise ConfigError("the sweep needs at least one value")
        if not all(math.isfinite(v) for v in self.sweep.values):
            raise ConfigError("sweep values must be finite")
        if self.sweep.axis == "num_sensors":
            if self.sweep.snr_db is None or not math.isfinite(self.sweep.snr_db):
                raise ConfigError("a sensor-count sweep needs a finite snr_db")
            for m in self.sweep.values:
                if int(m) != m or not 2 <= m <= self.scenario.total_sensors:
                    raise ConfigError(f"cannot select {m} of {self.scenario.total_sensors} sensors")
        elif not 2 <= self.scenario.num_sensors <= self.scenario.total_sensors:
            raise ConfigError("num_sensors must lie in [2, total_sensors]")
        try:
            build_grid(self.grid_size)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown or missing methods {bad}; expected a subset of {METHODS}")
        if self.mu_rule not in MU_RULES:
            raise ConfigError(f"unknown mu_rule {self.mu_rule!r}; expected one of {MU_RULES}")
        if self.mu_rule == "fixed" and not (self.mu is not None and self.mu > 0):
            raise ConfigError("mu_rule 'fixed' needs a positive mu")
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.amplitudes is not None and len(self.amplitudes) != len(self.frequencies):
            raise ConfigError("one amplitude per source is required")

    @property
    def resample_geometry(self) -> bool:
        r = self.scenario.resample_geometry
        return self.sweep.axis == "num_sensors" if r is None else bool(r)

    @property
    def num_sources(self) -> int:
        return len(self.frequencies)

    # -- JSON ---------------------------------------------------------------

    def to_json(self) -> dict:
        out = {
            "scenario": asdict(self.scenario),
            "scene": {"frequencies": list(self.frequencies)},
            "sweep": self.sweep.to_json(),
            "trials": self.trials, "grid_size": self.grid_size, "methods": list(self.methods),
            "mu_rule": self.mu_rule, "eta": self.eta, "master_seed": self.master_seed,
            "solver": {"tolerance": self.tolerance, "max_iterations": self.max_iterations},
        }
        if self.amplitudes is not None:
            out["scene"]["amplitudes"] = list(self.amplitudes)
        if self.mu is not None:
            out["mu"] = self.mu
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        _check_keys(data, ("scenario", "scene", "sweep", "trials", "grid_size", "methods", "mu_rule", "mu",
                           "eta", "master_seed", "solver"), "config")
        if "sweep" not in data:
            raise ConfigError("config needs a sweep")
        sw = data["sweep"]
        _check_keys(sw, ("snr_db", "num_sensors"), "sweep")
        if "num_sensors" in sw:
            snr = sw.get("snr_db")
            if isinstance(snr, list):
                raise ConfigError("a sensor-count sweep takes a single snr_db value")
            sweep = Sweep("num_sensors", tuple(int(v) for v in sw["num_sensors"]),
                          None if snr is None else float(snr))
        elif "snr_db" in sw:
            vals = sw["snr_db"]
            sweep = Sweep("snr_db", tuple(float(v) for v in (vals if isinstance(vals, list) else [vals])))
        else:
            raise ConfigError("sweep needs snr_db or num_sensors")

        sc = data.get("scenario", {})
        _check_keys(sc, Scenario.__dataclass_fields__, "scenario")
        scenario = Scenario(**sc)
        scene = data.get("scene", {})
        _check_keys(scene, ("frequencies", "amplitudes"), "scene")
        solver = data.get("solver", {})
        _check_keys(solver, ("tolerance", "max_iterations"), "solver")
        kwargs = {k: data[k] for k in ("trials", "grid_size", "mu_rule", "mu", "eta", "master_seed") if k in data}
        if "methods" in data:
            kwargs["methods"] = tuple(data["methods"])
        if "frequencies" in scene:
            kwargs["frequencies"] = tuple(float(u) for u in scene["frequencies"])
        if scene.get("amplitudes") is not None:
            kwargs["amplitudes"] = tuple(float(s) for s in scene["amplitudes"])
        kwargs.update(solver)
        return cls(sweep=sweep, scenario=scenario, **kwargs)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        return cls.from_json(json.loads(text))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig.from_json(data)
