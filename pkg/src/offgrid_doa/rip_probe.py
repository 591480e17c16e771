"""Monte Carlo probe of the block restricted isometry constant of a dictionary.

For a column-normalised dictionary ``Dn`` and a random unit-norm block-sparse
``c``, ``beta = |‖Dn c‖² - 1|``. The fraction of draws with ``beta < 1`` and
``beta < sqrt(2) - 1`` estimates how likely the dictionary is to behave as
a block isometry at that sparsity. Vectors are laid out like the
dictionaries, all first coefficients, then all second, and so on: block ``l``
owns entries ``l, L + l, 2L + l``.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .array_model import ArrayGeometry
from .dictionary import FrequencyGrid, build_dictionary, neighbor_dictionary, normalize_columns

GENERATORS = ("gaussian", "proportional")
AMPLITUDES = ("positive", "random_phase")
STRUCTURES = {"lasso": 1, "neighbor": 2, "taylor1": 2, "taylor2": 3}
DEFAULT_STRUCTURE = {1: "lasso", 2: "taylor1", 3: "taylor2"}
SQRT2M1 = np.sqrt(2.0) - 1.0
CHUNK = 250  # trials per independently seeded substream
CSV_COLUMNS = ("b", "generator", "two_K", "trials", "prob_lt_1", "prob_lt_sqrt2m1", "stderr_1", "stderr_s21")


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class BlockSparseSpec:
    """Shape of the random block-sparse vectors.

    Parameters
    ----------
    block_length : int
        Entries per block, 1 to 3.
    num_blocks : int
        Number of blocks ``L``.
    sparsity : int
        Number of active blocks.
    generator : {"gaussian", "proportional"}
        ``gaussian`` fills active blocks with standard complex normal entries,
        ``proportional`` with ``x1 * (1, p, p**2)``, ``x1 = |N(0, 1)|`` and
        ``p`` uniform on ``[-grid_size/2, grid_size/2]``.
    grid_size : float
        Only used by the proportional generator.
    amplitude : {"positive", "random_phase"}
        Law of ``x1`` for the proportional generator: ``|N(0, 1)|``, or the
        same magnitude times a uniform random phase.
    """

    block_length: int
    num_blocks: int
    sparsity: int
    generator: str = "gaussian"
    grid_size: float = 0.01
    amplitude: str = "positive"

    def __post_init__(self):
        if self.block_length not in (1, 2, 3):
            raise ValueError(f"block length must be 1, 2 or 3, got {self.block_length}")
        if not 1 <= self.sparsity <= self.num_blocks:
            raise ValueError(f"sparsity {self.sparsity} outside [1, {self.num_blocks}]")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.generator == "proportional" and self.block_length != 3:
            raise ValueError("the proportional generator needs block length 3")
        if self.amplitude not in AMPLITUDES:
            raise ValueError(f"unknown amplitude law {self.amplitude!r}")
        if not self.grid_size > 0:
            raise ValueError("grid size must be positive")


@dataclass
class RipEstimate:
    sparsity: int
    prob_lt_1: float
    prob_lt_sqrt2m1: float
    trials: int
    block_length: int = 3
    generator: str = "gaussian"
    beta_summary: dict = field(default_factory=dict)

    @property
    def stderr_1(self) -> float:
        return _stderr(self.prob_lt_1, self.trials)

    @property
    def stderr_s21(self) -> float:
        return _stderr(self.prob_lt_sqrt2m1, self.trials)

    def csv_row(self) -> dict:
        return {"b": self.block_length, "generator": self.generator, "two_K": self.sparsity,
                "trials": self.trials, "prob_lt_1": repr(self.prob_lt_1),
                "prob_lt_sqrt2m1": repr(self.prob_lt_sqrt2m1),
                "stderr_1": repr(self.stderr_1), "stderr_s21": repr(self.stderr_s21)}


def _stderr(p, n):
    return float(np.sqrt(p * (1.0 - p) / n))


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_block_sparse(spec: BlockSparseSpec, seed) -> np.ndarray:
    """Unit-norm vector of length ``b*L`` with exactly ``spec.sparsity`` nonzero blocks."""
    rng = _rng(seed)
    b, L, k = spec.block_length, spec.num_blocks, spec.sparsity
    active = rng.choice(L, size=k, replace=False)
    if spec.generator == "gaussian":
        vals = (rng.standard_normal((b, k)) + 1j * rng.standard_normal((b, k))) / np.sqrt(2.0)
    else:
        x1 = np.abs(rng.standard_normal(k))
        p = rng.uniform(-0.5 * spec.grid_size, 0.5 * spec.grid_size, size=k)
        vals = (x1 * np.vstack([np.ones(k), p, p * p])).astype(complex)
        if spec.amplitude == "random_phase":
            vals *= np.exp(2j * np.pi * rng.random(k))
    c = np.zeros((b, L), dtype=complex)
    c[:, active] = vals
    c = c.ravel()
    nrm = np.linalg.norm(c)
    if nrm == 0:  # every |N(0,1)| draw was exactly zero; practically unreachable
        return random_block_sparse(spec, rng)
    return c / nrm


def beta_sample(normalized_dictionary, c_bar) -> float:
    """``|‖Dn c‖² - 1|`` for a unit-norm ``c``."""
    c_bar = np.asarray(c_bar)
    nrm = np.linalg.norm(c_bar)
    if abs(nrm - 1.0) > 1e-10:
        raise ContractViolation(f"c_bar must have unit norm, got {nrm!r}")
    energy = np.linalg.norm(np.asarray(normalized_dictionary) @ c_bar) ** 2
    return float(abs(energy - 1.0))


def probe_dictionary(geometry: ArrayGeometry, grid: FrequencyGrid, structure: str) -> np.ndarray:
    """Column-normalised dictionary of one method's block structure."""
    if structure not in STRUCTURES:
        raise ValueError(f"unknown structure {structure!r}; expected one of {sorted(STRUCTURES)}")
    if structure == "neighbor":
        D = neighbor_dictionary(geometry, grid)
    else:
        D = build_dictionary(geometry, grid, STRUCTURES[structure] - 1).block
    return normalize_columns(D)[0]


def _chunk_betas(Dn, spec, seed, two_K, chunk, n):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(two_K, chunk)))
    return np.array([beta_sample(Dn, random_block_sparse(spec, rng)) for _ in range(n)])


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get("OFFGRID_DOA_WORKERS", "1") or 1)
    return max(1, workers)


def estimate_probabilities(geometry: ArrayGeometry, grid: FrequencyGrid, block_length: int,
                           sparsity_range, trials: int, generator: str = "gaussian", seed: int = 0,
                           structure: str | None = None, workers: int | None = None,
                           amplitude: str = "positive") -> list[RipEstimate]:
    """Empirical probabilities of ``beta < 1`` and ``beta < sqrt(2) - 1`` per sparsity.

    Trials are split into fixed chunks, each drawing from its own substream
    keyed by ``(seed, sparsity, chunk)``, so the result does not depend on the
    number of workers.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    structure = structure or DEFAULT_STRUCTURE[block_length]
    if STRUCTURES[structure] != block_length:
        raise ValueError(f"structure {structure!r} has block length {STRUCTURES[structure]}, not {block_length}")
    Dn = probe_dictionary(geometry, grid, structure)
    jobs = []
    for two_K in sparsity_range:
        spec = BlockSparseSpec(block_length, grid.size, int(two_K), generator, grid.grid_size, amplitude)
        for chunk, start in enumerate(range(0, trials, CHUNK)):
            jobs.append((Dn, spec, seed, int(two_K), chunk, min(CHUNK, trials - start)))
    n_workers = _workers(workers)
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            parts = list(pool.map(_chunk_betas, *zip(*jobs)))
    else:
        parts = [_chunk_betas(*job) for job in jobs]

    out, i = [], 0
    for two_K in sparsity_range:
        n_chunks = -(-trials // CHUNK)
        betas = np.concatenate(parts[i:i + n_chunks])
        i += n_chunks
        q = np.quantile(betas, [0.05, 0.5, 0.95])
        out.append(RipEstimate(int(two_K), float(np.mean(betas < 1.0)), float(np.mean(betas < SQRT2M1)),
                               trials, block_length, generator,
                               {"min": float(betas.min()), "q05": float(q[0]), "median": float(q[1]),
                                "q95": float(q[2]), "max": float(betas.max())}))
    return out


def write_csv(estimates, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for est in estimates:
            w.writerow(est.csv_row())
