"""Grid-based sparse DOA estimators solved as second-order cone programs.

Four methods share one program skeleton, the penalised group-LASSO

    minimize  1/2 ||y - D c||^2 + mu * sum_l ||c_l||_2

over nonnegative-amplitude block coefficients ``c_l``:

* ``lasso``            blocks of one coefficient on ``A(v)``,
* ``neighbor_glasso``  pairs on ``[A(v), A(v + delta/2)]``,
* ``taylor1_glasso``   pairs ``(x1, x2)`` on ``[A, A']`` with ``|x2| <= delta/2 x1``,
* ``taylor2_glasso``   triples ``(x1, x2, x3)`` on ``[A, A', A''/2]`` with the
  offset box constraints and the relaxed proportionality cone
  ``||(2 x2, x1 - x3)|| <= x1 + x3 + z``, ``0 <= z <= eta``.

The complex residual is split into real and imaginary parts, the squared
data term is bounded by an auxiliary ``w`` through the cone
``||(r, w - 1/2)|| <= w + 1/2`` and each block norm by its own ``t_l``.
Internally the Taylor coefficients are rescaled to ``x2 / (delta/2)`` and
``x3 / (delta/2)**2`` so that all variables have comparable magnitude.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .array_model import ArrayGeometry, Snapshot
from .conic import DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE, ConicProgram, SolverResult, solve
from .dictionary import DictionarySet, FrequencyGrid, _assemble

log = logging.getLogger(__name__)

METHODS = ("lasso", "neighbor_glasso", "taylor1_glasso", "taylor2_glasso")
BLOCK_LENGTH = {"lasso": 1, "neighbor_glasso": 2, "taylor1_glasso": 2, "taylor2_glasso": 3}


class EstimationFailure(RuntimeError):
    """Raised when fewer than K blocks are active in a solved block signal."""


@dataclass(frozen=True, eq=False)
class BlockSignal:
    """Solved Taylor block signal ``(x1, x2, x3)`` with proportionality slack ``z``."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    z: np.ndarray

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(self.x1 ** 2 + self.x2 ** 2 + self.x3 ** 2)

    def scaled(self, c: float) -> "BlockSignal":
        return BlockSignal(c * self.x1, c * self.x2, c * self.x3, self.z)

    def violation(self, grid_size: float, eta: float) -> float:
        """Largest violation of the offset box, slack and proportionality constraints."""
        h = 0.5 * grid_size
        x1, x2, x3, z = self.x1, self.x2, self.x3, self.z
        cone = np.hypot(2 * x2, x1 - x3) - (x1 + x3 + z)
        terms = [x2 - h * x1, -x2 - h * x1, -x3, x3 - h * h * x1, -x1, -z, z - eta, cone]
        return float(max(0.0, max(np.max(t) for t in terms)))


@dataclass(frozen=True)
class EstimatorConfig:
    method: str = "taylor2_glasso"
    mu: float = 1e-2
    eta: float = 1e-5
    source_count: int = 1
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    formulation: str = "penalized"      # or "constrained": min sum t s.t. ||r|| <= epsilon
    epsilon: float | None = None
    offset_rule: str = "ratio"          # or "signed_sqrt" (sign(x2) sqrt(x3/x1))
    min_separation: int = 2
    support_rel_threshold: float = 1e-4

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.source_count < 1:
            raise ValueError("source_count must be at least 1")
        if self.formulation not in ("penalized", "constrained"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.formulation == "constrained" and not (self.epsilon is not None and self.epsilon > 0):
            raise ValueError("the constrained formulation needs a positive epsilon")
        if self.offset_rule not in ("ratio", "signed_sqrt"):
            raise ValueError(f"unknown offset rule {self.offset_rule!r}")

    def check_eta(self, grid_size: float) -> None:
        if self.eta >= (0.5 * grid_size) ** 2:
            warnings.warn(f"eta={self.eta:g} is not small against (delta/2)^2={(0.5 * grid_size) ** 2:g}; "
                          "the slack dominates the proportionality constraint", stacklevel=3)


@dataclass
class EstimateResult:
    method: str
    status: str                         # "ok", "failed" or the solver status
    support: np.ndarray
    offsets: np.ndarray
    frequencies: np.ndarray
    coefficients: np.ndarray            # (block length, L)
    block: BlockSignal | np.ndarray | None
    solver: SolverResult | None
    runtime: float = 0.0
    message: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def iterations(self) -> int:
        return self.solver.iterations if self.solver is not None else 0

    def csv_row(self, K: int | None = None) -> dict:
        """Flat record: estimates, offsets, solver iterations and status."""
        K = self.frequencies.size if K is None else K
        row = {"method": self.method, "status": self.status, "iterations": self.iterations,
               "runtime_ms": 1e3 * self.runtime}
        for k in range(K):
            row[f"u_hat_{k + 1}"] = self.frequencies[k] if k < self.frequencies.size else float("nan")
        for k in range(K):
            row[f"p_hat_{k + 1}"] = self.offsets[k] if k < self.offsets.size else float("nan")
        return row


# -- peak picking / extraction ------------------------------------------------

def select_support(norms, K: int, min_separation: int = 2, rel_threshold: float = 1e-4) -> np.ndarray:
    """Indices of the K largest block norms, at least ``min_separation`` cells apart.

    Blocks below ``rel_threshold * max(norms)`` count as zero.
    """
    norms = np.asarray(norms, dtype=float)
    top = float(np.max(norms)) if norms.size else 0.0
    if not top > 0:
        raise EstimationFailure("all blocks are zero")
    active = np.flatnonzero(norms > rel_threshold * top)
    # stable sort keeps the lower index on exact ties
    order = active[np.argsort(-norms[active], kind="stable")]
    chosen: list[int] = []
    for l in order:
        if all(abs(int(l) - c) >= min_separation for c in chosen):
            chosen.append(int(l))
            if len(chosen) == K:
                return np.sort(np.array(chosen))
    raise EstimationFailure(f"only {len(chosen)} separated nonzero blocks for K={K}")


def extract_frequencies(block: BlockSignal, grid: FrequencyGrid, K: int, offset_rule: str = "ratio",
                        min_separation: int = 2, rel_threshold: float = 1e-4):
    """Support, offsets and frequencies from a solved Taylor block signal.

    The offset of block l is ``x2_l / x1_l`` clipped to ``[-delta/2, delta/2]``
    (zero when ``x1_l == 0``). ``offset_rule="signed_sqrt"`` uses
    ``sign(x2_l) * sqrt(x3_l / x1_l)`` instead.
    """
    support = select_support(block.norms, K, min_separation, rel_threshold)
    h = 0.5 * grid.grid_size
    x1 = block.x1[support]
    x2 = block.x2[support]
    safe = np.where(x1 > 0, x1, 1.0)
    if offset_rule == "ratio":
        p = x2 / safe
    elif offset_rule == "signed_sqrt":
        p = np.sign(x2) * np.sqrt(np.maximum(block.x3[support], 0.0) / safe)
    else:
        raise ValueError(f"unknown offset rule {offset_rule!r}")
    p = np.where(x1 > 0, np.clip(p, -h, h), 0.0)
    freqs = grid.points[support] + p
    order = np.argsort(freqs, kind="stable")
    return support[order], p[order], freqs[order]


# -- program assembly ---------------------------------------------------------

def _real_stack(y, D):
    yr = np.concatenate([y.real, y.imag])
    Dr = np.vstack([D.real, D.imag])
    return yr, Dr


@dataclass
class _Layout:
    """Variable layout of an assembled estimator program."""

    L: int
    b: int
    coef_scale: np.ndarray   # per block component, internal -> physical
    extra: dict              # name -> slice

    def coef_slice(self, j):
        return slice(j * self.L, (j + 1) * self.L)


def _group_lasso_program(y, columns: list[np.ndarray], coef_scale,
                         config: EstimatorConfig) -> tuple[ConicProgram, _Layout]:
    """Shared skeleton: block coefficients, block-norm epigraphs ``t``, data term ``w``.

    ``columns[j]`` is the ``M x L`` dictionary block for component j;
    ``coef_scale[j]`` multiplies the internal variable to give the physical one.
    """
    L = columns[0].shape[1]
    b = len(columns)
    coef_scale = np.asarray(coef_scale, dtype=float)
    n_coef = b * L
    idx = n_coef
    extra = {}
    if b > 1:
        extra["t"] = slice(idx, idx + L)
        idx += L
    penalized = config.formulation == "penalized"
    if penalized:
        extra["w"] = slice(idx, idx + 1)
        idx += 1
    n = idx

    c = np.zeros(n)
    if b > 1:
        c[extra["t"]] = 1.0 if not penalized else config.mu
    else:
        # nonnegative scalar blocks: the l1 norm is linear
        c[:L] = 1.0 if not penalized else config.mu
    if penalized:
        c[extra["w"]] = 1.0
    prog = ConicProgram(n, c)

    # data-fit cone
    D = np.hstack([col * s for col, s in zip(columns, coef_scale)])
    yr, Dr = _real_stack(np.asarray(y), D)
    rows = Dr.shape[0]
    if penalized:
        wi = extra["w"].start
        tail = np.zeros((rows + 1, n))
        tail[:rows, :n_coef] = -Dr
        tail[rows, wi] = 1.0
        tail_const = np.concatenate([yr, [-0.5]])
        head = np.zeros(n)
        head[wi] = 1.0
        prog.add_soc(head, 0.5, tail, tail_const, label="data_fit")
    else:
        tail = np.zeros((rows, n))
        tail[:, :n_coef] = -Dr
        prog.add_soc(np.zeros(n), config.epsilon, tail, yr, label="data_fit")

    # block norms ||(c_1l, ..., c_bl)|| <= t_l
    if b > 1:
        ti = extra["t"]
        eye = sp.identity(L, format="csr")
        head = sp.hstack([sp.csr_matrix((L, ti.start)), eye, sp.csr_matrix((L, n - ti.stop))], format="csr")
        # tail: for cone l, rows j=0..b-1 select coefficient j of block l (physical scaling)
        r = (np.arange(L)[:, None] * b + np.arange(b)[None, :]).ravel()
        cidx = (np.arange(b)[None, :] * L + np.arange(L)[:, None]).ravel()
        vals = np.tile(coef_scale, L)
        tail = sp.csr_matrix((vals, (r, cidx)), shape=(L * b, n))
        prog.add_soc_batch(head, 0.0, tail, 0.0, b + 1, label="block_norm")
    return prog, _Layout(L, b, coef_scale, extra)


def _selector(n, cols, coefs):
    """Sparse rows ``sum_j coefs[j] * x[cols[j] + l]`` for l = 0..L-1."""
    L = None
    data, ri, ci = [], [], []
    for start, coef in zip(cols, coefs):
        L = start.stop - start.start
        ri.append(np.arange(L))
        ci.append(np.arange(start.start, start.stop))
        data.append(np.full(L, float(coef)))
    return sp.csr_matrix((np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))), shape=(L, n))


def build_program(y, dictionary: DictionarySet, config: EstimatorConfig,
                  shifted: np.ndarray | None = None) -> tuple[ConicProgram, _Layout]:
    """Assemble the SOCP for ``config.method``.

    ``shifted`` is the half-shifted dictionary ``A(v + delta/2)``, required by
    the neighbour method only.
    """
    method = config.method
    L = dictionary.num_grid
    h = 0.5 * dictionary.grid.grid_size
    if method == "lasso":
        prog, lay = _group_lasso_program(y, [dictionary.base], [1.0], config)
        prog.set_nonneg(np.arange(L))
        return prog, lay
    if method == "neighbor_glasso":
        if shifted is None:
            raise ValueError("the neighbour method needs the half-shifted dictionary")
        prog, lay = _group_lasso_program(y, [dictionary.base, shifted], [1.0, 1.0], config)
        prog.set_nonneg(np.arange(2 * L))
        return prog, lay
    if method == "taylor1_glasso":
        if dictionary.first is None:
            raise ValueError("taylor1_glasso needs a dictionary with taylor_order >= 1")
        prog, lay = _group_lasso_program(y, [dictionary.base, dictionary.first], [1.0, h], config)
        n = prog.num_variables
        x1, x2 = lay.coef_slice(0), lay.coef_slice(1)
        # -h x1 <= x2 <= h x1 in internal units: -x1 <= x2' <= x1
        prog.add_linear(_selector(n, [x2, x1], [1.0, -1.0]), "<=", 0.0, label="offset_upper")
        prog.add_linear(_selector(n, [x2, x1], [-1.0, -1.0]), "<=", 0.0, label="offset_lower")
        prog.set_nonneg(np.arange(L))
        return prog, lay
    if method == "taylor2_glasso":
        if dictionary.second_halved is None:
            raise ValueError("taylor2_glasso needs a dictionary with taylor_order 2")
        config.check_eta(dictionary.grid.grid_size)
        prog, lay = _group_lasso_program(
            y, [dictionary.base, dictionary.first, dictionary.second_halved], [1.0, h, h * h], config)
        n = prog.num_variables
        x1, x2, x3 = lay.coef_slice(0), lay.coef_slice(1), lay.coef_slice(2)
        prog.add_linear(_selector(n, [x2, x1], [1.0, -1.0]), "<=", 0.0, label="offset_upper")
        prog.add_linear(_selector(n, [x2, x1], [-1.0, -1.0]), "<=", 0.0, label="offset_lower")
        prog.add_linear(_selector(n, [x3], [-1.0]), "<=", 0.0, label="x3_lower")
        prog.add_linear(_selector(n, [x3, x1], [1.0, -1.0]), "<=", 0.0, label="x3_upper")
        prog.set_nonneg(np.arange(L))
        # ||(2 x2, x1 - x3)|| <= x1 + x3 + z with 0 <= z <= eta. The cone only
        # loosens as z grows and z is not priced, so z = eta gives the same
        # feasible set in x without a free, degenerate variable.
        head = _selector(n, [x1, x3], [1.0, h * h])
        t2 = _selector(n, [x2], [2.0 * h])
        t3 = _selector(n, [x1, x3], [1.0, -h * h])
        tail = sp.vstack([t2, t3], format="csr")
        # interleave: cone l uses tail rows (l, L + l)
        order = np.ravel(np.column_stack([np.arange(L), L + np.arange(L)]))
        prog.add_soc_batch(head, config.eta, tail[order], 0.0, 3, label="proportionality")
        return prog, lay
    raise ValueError(f"unknown method {method!r}")


def minimal_slack(x1, x2, x3, eta: float) -> np.ndarray:
    """Smallest ``z`` in ``[0, eta]`` with ``||(2 x2, x1 - x3)|| <= x1 + x3 + z``."""
    need = np.hypot(2.0 * x2, x1 - x3) - x1 - x3
    return np.clip(need, 0.0, eta)


def _unpack(x, lay: _Layout) -> np.ndarray:
    coef = np.vstack([x[lay.coef_slice(j)] * lay.coef_scale[j] for j in range(lay.b)])
    return coef


# -- estimators ---------------------------------------------------------------

def _observation(snapshot) -> np.ndarray:
    return np.asarray(snapshot.observation if isinstance(snapshot, Snapshot) else snapshot)


def _failure(method, coef, block, res, runtime, message, meta=None):
    empty = np.zeros(0)
    status = "failed" if res is None or res.ok else res.status
    return EstimateResult(method, status, np.zeros(0, dtype=int), empty, empty, coef, block, res,
                          runtime, message, meta or {})


def _active_floor(y, dictionary: DictionarySet) -> float:
    """Block norms below this are numerically zero (interior-point residue)."""
    return 1e-6 * max(np.linalg.norm(y) / np.sqrt(dictionary.num_rows), 1e-12)


def estimate(snapshot, dictionary: DictionarySet, config: EstimatorConfig,
             geometry: ArrayGeometry | None = None, shifted: np.ndarray | None = None) -> EstimateResult:
    """Run ``config.method`` on one observation and extract K frequency estimates."""
    t0 = time.perf_counter()
    y = _observation(snapshot)
    if y.shape != (dictionary.num_rows,):
        raise ValueError(f"observation has shape {y.shape}, dictionary expects {dictionary.num_rows} rows")
    if config.method == "neighbor_glasso" and shifted is None:
        if geometry is None:
            raise ValueError("the neighbour method needs the geometry or the shifted dictionary")
        from .dictionary import neighbor_dictionary
        shifted = neighbor_dictionary(geometry, dictionary.grid)[:, dictionary.num_grid:]
    prog, lay = build_program(y, dictionary, config, shifted)
    res = solve(prog, config.tolerance, config.max_iterations)
    coef = _unpack(res.primal, lay)
    grid = dictionary.grid
    L = grid.size
    meta = {"min_separation": config.min_separation, "offset_rule": config.offset_rule,
            "formulation": config.formulation}

    if config.method in ("taylor1_glasso", "taylor2_glasso"):
        x3 = coef[2] if lay.b == 3 else np.zeros(L)
        z = (minimal_slack(coef[0], coef[1], x3, config.eta) if lay.b == 3 else np.zeros(L))
        block = BlockSignal(coef[0], coef[1], x3, z)
    elif config.method == "lasso":
        block = coef[0]
    else:
        block = coef
    norms = np.sqrt(np.sum(coef ** 2, axis=0))

    if not res.ok:
        return _failure(config.method, coef, block, res, time.perf_counter() - t0,
                        f"solver: {res.status} {res.message}", meta)
    if norms.max() <= _active_floor(y, dictionary):
        return _failure(config.method, coef, block, res, time.perf_counter() - t0, "empty support", meta)
    K = config.source_count
    try:
        if isinstance(block, BlockSignal):
            support, offsets, freqs = extract_frequencies(block, grid, K, config.offset_rule,
                                                          config.min_separation, config.support_rel_threshold)
        else:
            support = select_support(norms, K, config.min_separation, config.support_rel_threshold)
            if config.method == "lasso":
                offsets = np.zeros(K)
            else:
                c1, c2 = coef[0, support], coef[1, support]
                tot = c1 + c2
                offsets = np.where(tot > 0, 0.5 * grid.grid_size * c2 / np.where(tot > 0, tot, 1.0), 0.0)
            freqs = grid.points[support] + offsets
            order = np.argsort(freqs, kind="stable")
            support, offsets, freqs = support[order], offsets[order], freqs[order]
    except EstimationFailure as exc:
        return _failure(config.method, coef, block, res, time.perf_counter() - t0, str(exc), meta)
    return EstimateResult(config.method, "ok", support, offsets, freqs, coef, block, res,
                          time.perf_counter() - t0, "", meta)


def _checked(config: EstimatorConfig, method: str) -> EstimatorConfig:
    return config if config.method == method else replace(config, method=method)


def solve_taylor2(snapshot, dictionary: DictionarySet, config: EstimatorConfig) -> EstimateResult:
    return estimate(snapshot, dictionary, _checked(config, "taylor2_glasso"))


def solve_taylor1(snapshot, dictionary: DictionarySet, config: EstimatorConfig) -> EstimateResult:
    return estimate(snapshot, dictionary, _checked(config, "taylor1_glasso"))


def solve_lasso(snapshot, dictionary: DictionarySet, config: EstimatorConfig) -> EstimateResult:
    return estimate(snapshot, dictionary, _checked(config, "lasso"))


def solve_neighbor(snapshot, dictionary: DictionarySet, config: EstimatorConfig,
                   geometry: ArrayGeometry | None = None, shifted: np.ndarray | None = None) -> EstimateResult:
    return estimate(snapshot, dictionary, _checked(config, "neighbor_glasso"), geometry, shifted)


def group_lasso_objective(y, dictionary: DictionarySet, block: BlockSignal, mu: float) -> float:
    """``g(x1, x2, x3)``: half squared residual plus ``mu`` times the mixed l2,1 norm."""
    cols = [dictionary.base, dictionary.first, dictionary.second_halved]
    comps = [block.x1, block.x2, block.x3]
    r = np.asarray(y) - sum(C @ x for C, x in zip(cols, comps) if C is not None)
    return float(0.5 * np.vdot(r, r).real + mu * np.sum(block.norms))


# -- covariance domain ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """``vec(R_hat) - sigma^2 vec(I)`` and the Khatri-Rao dictionary rule."""

    observation: np.ndarray
    covariance: np.ndarray
    num_snapshots: int
    noise_variance: float

    def dictionary(self, geometry: ArrayGeometry, grid: FrequencyGrid, taylor_order: int = 2) -> DictionarySet:
        return covariance_dictionary(geometry, grid, taylor_order)


def _khatri_rao(X, Y):
    """Column-wise ``kron(X[:, l], Y[:, l])``."""
    M = X.shape[0]
    return (X[:, None, :] * Y[None, :, :]).reshape(M * Y.shape[0], X.shape[1])


def covariance_dictionary(geometry: ArrayGeometry, grid: FrequencyGrid, taylor_order: int = 2) -> DictionarySet:
    """Dictionary over ``conj(a(v)) kron a(v)`` and its derivatives by the product rule."""
    from .array_model import steering_derivative, steering_vector
    a = steering_vector(geometry, grid.points)
    base = _khatri_rao(a.conj(), a)
    first = second = None
    if taylor_order >= 1:
        a1 = steering_derivative(geometry, grid.points, 1)
        first = _khatri_rao(a1.conj(), a) + _khatri_rao(a.conj(), a1)
    if taylor_order >= 2:
        a2 = steering_derivative(geometry, grid.points, 2)
        second = 0.5 * (_khatri_rao(a2.conj(), a) + 2.0 * _khatri_rao(a1.conj(), a1)
                        + _khatri_rao(a.conj(), a2))
    return _assemble(base, first, second, grid, taylor_order)


def build_covariance_model(snapshots, noise_variance: float = 0.0) -> CovarianceModel:
    """Sample covariance of T >= 2 snapshots, vectorised column-major, noise floor removed."""
    Y = np.column_stack([_observation(s) for s in snapshots]) if len(snapshots) else np.zeros((0, 0))
    T = Y.shape[1]
    if T < 2:
        raise ValueError("the covariance model needs at least two snapshots; "
                         "use the single-snapshot estimators for one")
    R = (Y @ Y.conj().T) / T
    M = R.shape[0]
    obs = R.reshape(-1, order="F") - noise_variance * np.eye(M).reshape(-1, order="F")
    return CovarianceModel(obs, R, T, float(noise_variance))
