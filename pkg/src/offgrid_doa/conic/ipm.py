"""Primal-dual interior-point method for second-order cone programs.

Infeasible-start path following with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step, applied to

    minimize c'x  s.t.  G x + s = h,  A x = b,  s in K

with K a product of a nonnegative orthant and second-order cones. Every
Newton system is reduced to the dense normal equations ``G' W^-2 G`` (plus
``A' A`` when equalities are present) and solved by Cholesky.

Cones of the same dimension are processed together as ``(count, dim)``
arrays. A cone group whose rows of G are mostly nonzero (the data-fit cone
of the estimators) is kept dense. Cones that touch only a few variables (the
orthant rows and the per-grid-point cones) contribute small dense blocks that
are scattered into the normal matrix; anything else stays in scipy.sparse.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .program import ConicProgram, StandardForm

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITERATIONS = "max_iterations"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 200

STEP = 0.99
DENSE_FRACTION = 0.25
REFINE_TOL = 1e-14  # relative residual below which refinement of a Newton step stops
MAX_REFINE = 20
PATIENCE = 2       # refinement steps without a 20% gain before giving up
COMPACT_WIDTH = 8  # cones touching at most this many variables enter the normal matrix as small dense blocks


@dataclass
class SolverResult:
    status: str
    primal: np.ndarray
    objective_value: float
    kkt_residuals: tuple[float, float, float]
    iterations: int
    message: str = ""
    dual_eq: np.ndarray = None
    dual_cone: np.ndarray = None
    slack: np.ndarray = None
    setup_time: float = 0.0
    iteration_times: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def solve_time(self) -> float:
        return self.setup_time + float(sum(self.iteration_times))

    @property
    def time_per_iteration(self) -> float:
        return float(np.mean(self.iteration_times)) if self.iteration_times else float("nan")


class _Cones:
    """Index bookkeeping and Jordan-algebra operations for R+^l x Q^... x Q^...

    The SOC operations work on a flat view (one head entry per cone plus the
    tail entries tagged with their cone id), so their cost does not depend on
    how many cone groups the program has.
    """

    def __init__(self, num_linear: int, groups):
        self.l = num_linear
        self.groups = []  # (start, count, dim)
        start = num_linear
        heads, tails, owner = [], [], []
        q = 0
        for count, dim in groups:
            self.groups.append((start, count, dim))
            idx = start + dim * np.arange(count)
            heads.append(idx)
            tails.append((idx[:, None] + np.arange(1, dim)[None, :]).ravel())
            owner.append(np.repeat(q + np.arange(count), dim - 1))
            start += count * dim
            q += count
        self.m = start
        self.q = q
        self.degree = num_linear + q
        cat = (lambda parts: np.concatenate(parts)) if groups else (lambda parts: np.zeros(0, dtype=int))
        self.head = cat(heads)
        self.tail = cat(tails)
        self.owner = cat(owner)

    def blocks(self, v):
        for start, count, dim in self.groups:
            yield v[start:start + count * dim].reshape(count, dim)

    def _tsum(self, w):
        return np.bincount(self.owner, weights=w, minlength=self.q)

    def _det(self, v):
        """``x0^2 - ||x1||^2`` per cone, factored to limit cancellation near the boundary."""
        t = np.sqrt(self._tsum(v[self.tail] ** 2))
        x0 = v[self.head]
        return (x0 - t) * (x0 + t)

    def identity(self):
        e = np.zeros(self.m)
        e[:self.l] = 1.0
        e[self.head] = 1.0
        return e

    def product(self, u, v):
        """Jordan product ``u o v``."""
        out = u * v
        h, t, o = self.head, self.tail, self.owner
        if self.q:
            u0, v0 = u[h], v[h]
            out[h] = u0 * v0 + self._tsum(u[t] * v[t])
            out[t] = u0[o] * v[t] + v0[o] * u[t]
        return out

    def divide(self, lam, r):
        """Solve ``lam o x = r`` for x."""
        out = r.copy()
        out[:self.l] /= lam[:self.l]
        h, t, o = self.head, self.tail, self.owner
        if self.q:
            l0 = lam[h]
            x0 = (l0 * r[h] - self._tsum(lam[t] * r[t])) / self._det(lam)
            out[h] = x0
            out[t] = (r[t] - x0[o] * lam[t]) / l0[o]
        return out

    def infeasibility(self, v) -> float:
        """``max`` over cones of the amount by which v lies outside K (<= 0 inside)."""
        worst = -np.inf
        if self.l:
            worst = float(np.max(-v[:self.l]))
        if self.q:
            worst = max(worst, float(np.max(np.sqrt(self._tsum(v[self.tail] ** 2)) - v[self.head])))
        return worst

    def max_step(self, x, d) -> float:
        """Largest ``a >= 0`` with ``x + a d`` in K, for x in the interior."""
        alpha = np.inf
        if self.l:
            dl = d[:self.l]
            neg = dl < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-x[:self.l][neg] / dl[neg])))
        if self.q:
            h, t, o = self.head, self.tail, self.owner
            nrm = np.sqrt(self._det(x))
            x0, d0 = x[h] / nrm, d[h] / nrm
            x1, d1 = x[t] / nrm[o], d[t] / nrm[o]
            # map x to e with the quadratic representation of x^(-1/2), then step from e
            rho0 = x0 * d0 - self._tsum(x1 * d1)
            factor = (rho0 + d0) / (x0 + 1.0)
            rho1 = d1 - factor[o] * x1
            denom = np.sqrt(self._tsum(rho1 ** 2)) - rho0
            pos = denom > 0
            if np.any(pos):
                alpha = min(alpha, float(np.min(1.0 / denom[pos])))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^-1 s = lambda``."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        self.d = np.sqrt(s[:cones.l] / z[:cones.l])  # W = diag(d) on the orthant
        self.beta, self.v = [], []
        sdet_all, zdet_all = cones._det(s), cones._det(z)
        if np.any(sdet_all <= 0) or np.any(zdet_all <= 0):
            raise FloatingPointError("iterate left the cone interior")
        first = 0
        for sb, zb, (_, count, _) in zip(cones.blocks(s), cones.blocks(z), cones.groups):
            sn = np.sqrt(sdet_all[first:first + count])
            zn = np.sqrt(zdet_all[first:first + count])
            first += count
            sbar = sb / sn[:, None]
            zbar = zb / zn[:, None]
            gamma = np.sqrt(0.5 * (1.0 + np.einsum("ij,ij->i", sbar, zbar)))
            wbar = sbar.copy()
            wbar[:, 0] += zbar[:, 0]
            wbar[:, 1:] -= zbar[:, 1:]
            wbar /= 2.0 * gamma[:, None]
            # Jordan square root of the scaling point
            v = wbar.copy()
            v[:, 0] += 1.0
            v /= np.sqrt(2.0 * (wbar[:, 0] + 1.0))[:, None]
            self.beta.append(np.sqrt(sn / zn))
            self.v.append(v)

    def blocks_of(self, inverse: bool):
        """Per-group ``(count, dim, dim)`` arrays of ``W`` or ``W^-1`` for the SOC blocks."""
        out = []
        for beta, v in zip(self.beta, self.v):
            dim = v.shape[1]
            u = v.copy()
            if inverse:
                u[:, 1:] *= -1.0
            blk = 2.0 * u[:, :, None] * u[:, None, :]
            blk[:, 0, 0] -= 1.0
            idx = np.arange(1, dim)
            blk[:, idx, idx] += 1.0
            out.append(blk / beta[:, None, None] if inverse else blk * beta[:, None, None])
        return out

    def inverse_blocks(self):
        return self._inv_blocks

    def build(self, W, Winv):
        """Fill sparse block-diagonal ``W`` and ``W^-1`` (preallocated on the block pattern)."""
        self._inv_blocks = self.blocks_of(True)
        fwd = self.blocks_of(False)
        W.data = np.concatenate([self.d] + [b.ravel() for b in fwd])
        Winv.data = np.concatenate([1.0 / self.d] + [b.ravel() for b in self._inv_blocks])
        self.W, self.Winv = W, Winv
        return self

    def apply(self, x, inverse=False):
        """``W x`` (or ``W^-1 x``); x may be a vector or have trailing columns."""
        return (self.Winv if inverse else self.W) @ x


def _block_pattern(l, groups) -> sp.csr_matrix:
    """Zero CSR matrix with the pattern of a block-diagonal matrix: l scalars, then dense blocks.

    The solver overwrites ``data`` each iteration instead of rebuilding the matrix.
    """
    cols = [np.arange(l)]
    counts = [np.ones(l, dtype=np.int64)]
    offset = l
    for count, dim in groups:
        base = offset + dim * np.arange(count)
        cc = base[:, None, None] + np.zeros((1, dim, 1), dtype=np.int64) + np.arange(dim)[None, None, :]
        cols.append(cc.ravel())
        counts.append(np.full(count * dim, dim, dtype=np.int64))
        offset += count * dim
    indptr = np.concatenate([[0], np.cumsum(np.concatenate(counts))])
    indices = np.concatenate(cols).astype(np.int32)
    return sp.csr_matrix((np.zeros(indices.size), indices, indptr.astype(np.int32)), shape=(offset, offset))


def _compact(rows, count: int, dim: int, n: int):
    """Rows of ``count`` cones of size ``dim`` as ``(count, dim, k)`` values over ``(count, k)`` columns.

    Returns None when some cone touches more than ``COMPACT_WIDTH`` variables.
    Padding slots point at column 0 with zero values.
    """
    coo = rows.tocoo()
    cone = coo.row // dim
    keys = np.unique(cone.astype(np.int64) * n + coo.col)
    key_cone = keys // n
    first = np.searchsorted(key_cone, np.arange(count))
    slot = np.arange(keys.size) - first[key_cone]
    k = int(slot.max()) + 1 if keys.size else 0
    if k > COMPACT_WIDTH:
        return None
    cols = np.zeros((count, max(k, 1)), dtype=np.int64)
    cols[key_cone, slot] = keys % n
    vals = np.zeros((count, dim, max(k, 1)))
    pos = slot[np.searchsorted(keys, cone.astype(np.int64) * n + coo.col)]
    np.add.at(vals, (cone, coo.row % dim, pos), coo.data)
    return vals, cols


class _Problem:
    """Standard-form data with the row split used to assemble ``G' W^-2 G``."""

    def __init__(self, sf: StandardForm):
        self.c = sf.c
        self.G = sf.G.tocsr()
        self.GT = self.G.T.tocsr()
        self.h = sf.h
        self.A = sf.A.tocsr()
        self.AT = self.A.T.tocsr()
        self.b = sf.b
        self.n = sf.c.size
        self.p = sf.A.shape[0]
        self.cones = _Cones(sf.num_linear, sf.soc_groups)
        if self.G.shape[0] != self.cones.m:
            raise ValueError("row count of G does not match the cone dimensions")
        n = self.n

        # groups whose rows are dense get BLAS treatment, groups of narrow cones are handled as
        # batches of small dense blocks, the rest goes through scipy.sparse
        self.dense_groups = []
        self.compact_groups = []  # (gi or None for the orthant, (count, dim, k) values, (count, k) columns)
        self.sparse_groups = []
        linear = _compact(self.G[:self.cones.l], self.cones.l, 1, n)
        self.linear_sparse = linear is None
        if linear is not None:
            self.compact_groups.append((None,) + linear)
        for gi, (start, count, dim) in enumerate(self.cones.groups):
            rows = self.G[start:start + count * dim]
            if n > 0 and rows.nnz > DENSE_FRACTION * rows.shape[0] * n and count * dim <= 4 * n:
                self.dense_groups.append((gi, rows.toarray().reshape(count, dim, n)))
                continue
            compact = _compact(rows, count, dim, n)
            if compact is None:
                self.sparse_groups.append(gi)
            else:
                self.compact_groups.append((gi,) + compact)
        # one scatter for all compact blocks: entry j of the stacked block values lands on K.flat[targets[where[j]]]
        flat = [(cols[:, :, None] * n + cols[:, None, :]).ravel() for _, _, cols in self.compact_groups]
        self.compact_targets, self.compact_where = (np.unique(np.concatenate(flat), return_inverse=True)
                                                    if flat else (np.zeros(0, dtype=int), np.zeros(0, dtype=int)))
        sparse_rows = [np.arange(self.cones.l)] if self.linear_sparse else []
        for gi in self.sparse_groups:
            start, count, dim = self.cones.groups[gi]
            sparse_rows.append(np.arange(start, start + count * dim))
        rows = np.concatenate(sparse_rows) if sparse_rows else np.zeros(0, dtype=int)
        self.sparse_G = self.G[rows]
        self._sparse_rows = rows
        self.full_pattern = _block_pattern(self.cones.l, [(c, d) for _, c, d in self.cones.groups])
        self.full_pattern_inv = self.full_pattern.copy()
        self.sparse_pattern = _block_pattern(
            self.cones.l if self.linear_sparse else 0, [self.cones.groups[gi][1:] for gi in self.sparse_groups])

    def scaling(self, s, z) -> "_Scaling":
        W = _Scaling(self.cones, s, z).build(self.full_pattern, self.full_pattern_inv)
        W.lam = W.W @ z
        return W

    def normal_matrix(self, W: _Scaling) -> np.ndarray:
        """Dense ``G' W^-2 G``; only the lower triangle is guaranteed to be filled."""
        inv_blocks = W.inverse_blocks()
        if self.sparse_G.shape[0]:
            data = ([1.0 / W.d] if self.linear_sparse else []) + [inv_blocks[gi].ravel() for gi in self.sparse_groups]
            Winv = self.sparse_pattern
            Winv.data = np.concatenate(data)
            Gs = Winv @ self.sparse_G
            K = (Gs.T @ Gs).toarray()
        else:
            K = np.zeros((self.n, self.n))
        if self.compact_groups:
            parts = []
            for gi, vals, _ in self.compact_groups:
                if gi is None:
                    H = vals / W.d[:, None, None]
                else:
                    H = np.matmul(inv_blocks[gi], vals)
                parts.append(np.matmul(H.transpose(0, 2, 1), H).ravel())
            sums = np.bincount(self.compact_where, weights=np.concatenate(parts),
                               minlength=self.compact_targets.size)
            K.flat[self.compact_targets] += sums
        for gi, Gd in self.dense_groups:
            # (count, dim, n) -> scaled rows
            Ghat = np.matmul(inv_blocks[gi], Gd).reshape(-1, self.n)
            K += la.blas.dsyrk(1.0, Ghat, trans=1, lower=1)
        return K


class _Cholesky:
    """Cholesky factor of ``D M D`` with ``D = diag(M)^-1/2``.

    The symmetric diagonal scaling matters near the optimum, where the rows of
    ``W^-1 G`` differ by many orders of magnitude and the unscaled factor loses
    most of its accuracy.
    """

    def __init__(self, M):
        n = M.shape[0]
        diag = np.einsum("ii->i", M).copy()
        top = float(np.max(diag)) if n else 1.0
        self.d = 1.0 / np.sqrt(np.maximum(diag, 1e-30 * max(top, 1e-300)))
        Ms = M * self.d[:, None]
        Ms *= self.d[None, :]
        self.reg = 0.0
        for attempt in range(6):
            trial = Ms
            if self.reg:
                trial = Ms.copy()
                np.einsum("ii->i", trial)[:] += self.reg
            try:
                F = la.cho_factor(trial, lower=True, check_finite=False, overwrite_a=False)
                if np.all(np.isfinite(np.einsum("ii->i", F[0]))):
                    self.F = F
                    return
            except la.LinAlgError:
                pass
            self.reg = 1e-14 * (100.0 ** attempt)
        raise la.LinAlgError("normal matrix is not positive definite even after regularisation")

    def solve(self, r):
        d = self.d if r.ndim == 1 else self.d[:, None]
        return d * la.cho_solve(self.F, d * r, check_finite=False)


def _factor(K, A=None) -> _Cholesky:
    """Factor the (possibly equality-augmented) normal matrix with escalating regularisation."""
    M = K if A is None or A.shape[0] == 0 else K + (A.T @ A).toarray()
    return _Cholesky(M)


class _KKTSolver:
    """Solves the reduced system ``[K A'; A 0][dx; dy] = [r1; r2]``."""

    def __init__(self, K, A, AT):
        self.K = K
        self.A = A
        self.AT = AT
        self.F = _factor(K, A)
        self.reg = self.F.reg
        self.p = A.shape[0]
        if self.p:
            X = self.F.solve(AT.toarray())
            S = np.asarray(A @ X)
            self.S = la.cho_factor(S + 1e-14 * max(1.0, np.abs(S).max()) * np.eye(self.p), lower=True)

    def _solve_once(self, r1, r2):
        if not self.p:
            return self.F.solve(r1), np.zeros(0)
        # (K + A'A) dx + A' dy = r1 + A' r2, A dx = r2
        t = r1 + self.AT @ r2
        u = self.F.solve(t)
        dy = la.cho_solve(self.S, self.A @ u - r2)
        dx = self.F.solve(t - self.AT @ dy)
        return dx, dy

    def solve(self, r1, r2, refine: int = 2):
        # refinement multiplies by K, so it needs the full matrix, not just the lower triangle
        dx, dy = self._solve_once(r1, r2)
        for _ in range(refine):
            e1 = r1 - (self.K @ dx + (self.AT @ dy if self.p else 0.0))
            e2 = r2 - (self.A @ dx if self.p else 0.0)
            ex, ey = self._solve_once(e1, e2 if self.p else np.zeros(0))
            dx = dx + ex
            dy = dy + ey
        return dx, dy


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _newton(prob: _Problem, W: _Scaling, kkt: _KKTSolver, bx, by, bz, bs, refine: int = MAX_REFINE,
            target=None):
    """Solve the linearised KKT system.

    A'dy + G'dz = bx,  A dx = by,  G dx + ds = bz,  lambda o (W dz + W^-1 ds) = bs

    followed by iterative refinement on the full (unreduced) system. Near the
    optimum the scaling is badly conditioned and a few refinement steps are
    needed; refinement stops once the residual is negligible or stagnates.

    ``target`` optionally gives absolute accuracies ``(x, y, z, u)`` that are
    good enough for the caller; a step meeting all four is not refined.
    """
    u = prob.cones.divide(W.lam, bs)
    step = _newton_scaled(prob, W, kkt, bx, by, bz, u)
    scale = max(_inf_norm(bx), _inf_norm(by), _inf_norm(bz), _inf_norm(u), 1e-300)
    best, best_err = step, np.inf
    idle = 0
    for k in range(refine + 1):
        dx, dy, dz, ds = step
        ex = bx - prob.GT @ dz - (prob.AT @ dy if prob.p else 0.0)
        ey = by - (prob.A @ dx if prob.p else np.zeros(0))
        ez = bz - prob.G @ dx - ds
        eu = u - W.apply(dz) - W.apply(ds, inverse=True)
        errs = (_inf_norm(ex), _inf_norm(ey), _inf_norm(ez), _inf_norm(eu))
        err = max(errs)
        if target is not None and all(e <= t for e, t in zip(errs, target)):
            return step
        # near the optimum refinement converges slowly and not monotonically, so only a run of
        # steps without a clear gain ends it
        idle = idle + 1 if err > 0.8 * best_err else 0
        if err < best_err:
            best, best_err = step, err
        if best_err <= REFINE_TOL * scale or idle > PATIENCE or k == refine:
            break
        cx, cy, cz, cs = _newton_scaled(prob, W, kkt, ex, ey, ez, eu)
        step = (dx + cx, dy + cy, dz + cz, ds + cs)
    return best


def _newton_scaled(prob, W, kkt, bx, by, bz, u):
    """Same system with the last equation already divided by lambda: ``W dz + W^-1 ds = u``."""
    t = u - W.apply(bz, inverse=True)
    r1 = bx - prob.GT @ W.apply(t, inverse=True)
    dx, dy = kkt.solve(r1, by, refine=0)
    Gdx = prob.G @ dx
    dz = W.apply(W.apply(Gdx, inverse=True) + t, inverse=True)
    ds = bz - Gdx
    return dx, dy, dz, ds


def _initial_point(prob: _Problem):
    cones = prob.cones
    K0 = (prob.GT @ prob.G).toarray()
    kkt = _KKTSolver(K0, prob.A, prob.AT)
    # primal: least-norm s with G x + s = h, A x = b
    x, _ = kkt.solve(prob.GT @ prob.h, prob.b)
    s = prob.h - prob.G @ x
    # dual: least-norm z with G'z + A'y + c = 0
    xd, y = kkt.solve(-prob.c, np.zeros(prob.p))
    z = prob.G @ xd
    e = cones.identity()
    for vec in (s, z):
        t = cones.infeasibility(vec)
        if t >= -1e-8 * max(np.linalg.norm(vec), 1.0):
            vec += (1.0 + t) * e
    return x, y, s, z


def _cone_violation(prob: _Problem, x, Gx=None, Ax=None) -> float:
    Gx = prob.G @ x if Gx is None else Gx
    viol = max(prob.cones.infeasibility(prob.h - Gx), 0.0) if prob.cones.m else 0.0
    if prob.p:
        Ax = prob.A @ x if Ax is None else Ax
        viol = max(viol, float(np.max(np.abs(Ax - prob.b))))
    return viol


def solve(program: ConicProgram | StandardForm, tolerance: float = DEFAULT_TOLERANCE,
          max_iterations: int = DEFAULT_MAX_ITERATIONS) -> SolverResult:
    """Solve a second-order cone program.

    On ``status == "optimal"`` every constraint of the program holds to within
    ``tolerance`` at ``primal``, the scaled dual residual is below
    ``tolerance`` and the complementarity gap is at most
    ``tolerance * max(1, |objective_value|)``.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    t_setup = time.perf_counter()
    sf = program.standard_form() if isinstance(program, ConicProgram) else program
    prob = _Problem(sf)
    cones = prob.cones
    c_scale = max(1.0, float(np.max(np.abs(prob.c)))) if prob.n else 1.0

    def result(status, x, y, s, z, it, res, msg=""):
        obj = float(prob.c @ x)
        return SolverResult(status, x, obj, res, it, msg, y, z, s, setup_time, times)

    times = []
    try:
        x, y, s, z = _initial_point(prob)
    except la.LinAlgError as exc:
        setup_time = time.perf_counter() - t_setup
        nan = float("nan")
        return SolverResult(NUMERICAL_FAILURE, np.zeros(prob.n), nan, (nan, nan, nan), 0,
                            f"initial point: {exc}", setup_time=setup_time)
    setup_time = time.perf_counter() - t_setup

    e = cones.identity()
    res = (np.inf, np.inf, np.inf)
    for it in range(max_iterations + 1):
        t0 = time.perf_counter()
        dual_lin = prob.AT @ y + prob.GT @ z
        Ax, Gx = prob.A @ x, prob.G @ x
        rx = dual_lin + prob.c
        ry = Ax - prob.b
        rz = Gx + s - prob.h
        gap = float(s @ z)
        pcost = float(prob.c @ x)
        pres = _cone_violation(prob, x, Gx, Ax)
        dres = float(np.max(np.abs(rx))) / c_scale if prob.n else 0.0
        rgap = gap / max(1.0, abs(pcost))
        res = (pres, dres, rgap)
        log.debug("it %d pcost %.9e pres %.2e dres %.2e gap %.2e", it, pcost, pres, dres, rgap)
        if pres <= tolerance and dres <= tolerance and rgap <= tolerance:
            return result(OPTIMAL, x, y, s, z, it, res)

        # certificates, normalised so they are checked relative to their own size
        hz = float(prob.h @ z + prob.b @ y)
        if hz < 0 and float(np.max(np.abs(dual_lin), initial=0.0)) <= tolerance * -hz:
            return result(INFEASIBLE, x, y, s, z, it, res, "primal infeasibility certificate found")
        if pcost < 0:
            dinf = max(float(np.max(np.abs(Gx + s), initial=0.0)),
                       float(np.max(np.abs(Ax), initial=0.0)))
            if dinf <= tolerance * -pcost and pcost < -1.0 / tolerance:
                return result(INFEASIBLE, x, y, s, z, it, res, "dual infeasible (unbounded objective)")
        if it == max_iterations:
            break
        if max(np.max(np.abs(x), initial=0.0), np.max(np.abs(z), initial=0.0)) > 1e13:
            return result(INFEASIBLE, x, y, s, z, it, res, "iterates diverged")

        try:
            W = prob.scaling(s, z)
            kkt = _KKTSolver(prob.normal_matrix(W), prob.A, prob.AT)
        except (la.LinAlgError, FloatingPointError) as exc:
            return result(NUMERICAL_FAILURE, x, y, s, z, it, res, f"iteration {it}: {exc}")
        lam = W.lam
        mu = gap / cones.degree
        # step errors far below what the stopping test can see are not worth refining away
        slack = 1e-3 * tolerance
        lam_max = max(_inf_norm(lam), 1e-300)
        target = (slack * c_scale, slack, slack,
                  slack * min(max(1.0, abs(pcost)) / cones.degree, mu) / lam_max)

        # predictor
        dxa, dya, dza, dsa = _newton(prob, W, kkt, -rx, -ry, -rz, -cones.product(lam, lam), target=target)
        alpha = min(cones.max_step(s, dsa), cones.max_step(z, dza), 1.0)
        rho = float((s + alpha * dsa) @ (z + alpha * dza)) / gap if gap > 0 else 0.0
        sigma = min(max(rho, 0.0), 1.0) ** 3

        # corrector
        ds_t = W.apply(dsa, inverse=True)
        dz_t = W.apply(dza)
        bs = -cones.product(lam, lam) - cones.product(ds_t, dz_t) + sigma * mu * e
        dx, dy, dz, ds = _newton(prob, W, kkt, -rx, -ry, -rz, bs, target=target)
        alpha = min(1.0, STEP * min(cones.max_step(s, ds), cones.max_step(z, dz)))
        if not np.isfinite(alpha) or alpha < 1e-12:
            times.append(time.perf_counter() - t0)
            return result(NUMERICAL_FAILURE, x, y, s, z, it, res, f"step length collapsed at iteration {it}")
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        z = z + alpha * dz
        times.append(time.perf_counter() - t0)

    return result(MAX_ITERATIONS, x, y, s, z, max_iterations, res, "iteration limit reached")
