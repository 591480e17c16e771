"""Independent reference computations used by the tests.

Nothing here goes through the package's program assembly: tiny conic
programs are described by raw arrays and searched by brute force, and the
estimation programs are written out directly in cvxpy.
"""

from dataclasses import dataclass

import numpy as np

from offgrid_doa.conic import ConicProgram


@dataclass
class TinyProgram:
    """``min c'x`` over the box ``[lo, hi]^n`` with cones ``||T x + t|| <= g'x + g0`` and rows ``a'x <= b``."""

    c: np.ndarray
    lo: float
    hi: float
    cones: list   # (T, t, g, g0)
    rows: list    # (a, b)
    interior: np.ndarray | None = None  # a strictly feasible point, when known

    @property
    def n(self):
        return self.c.size

    def program(self, box_as_rows: bool = False) -> ConicProgram:
        prog = ConicProgram(self.n, self.c)
        for T, t, g, g0 in self.cones:
            prog.add_soc(g, g0, T, t)
        for a, b in self.rows:
            prog.add_linear(a[None, :], "<=", b)
        if box_as_rows:
            eye = np.eye(self.n)
            prog.add_linear(eye, "<=", self.hi)
            prog.add_linear(-eye, "<=", -self.lo)
        else:
            prog.add_box(np.arange(self.n), self.lo, self.hi)
        return prog

    def feasible(self, X) -> np.ndarray:
        """Exact feasibility of the rows of ``X`` (no tolerance)."""
        ok = np.all((X >= self.lo) & (X <= self.hi), axis=1)
        for T, t, g, g0 in self.cones:
            ok &= np.linalg.norm(X @ T.T + t, axis=1) <= X @ g + g0
        for a, b in self.rows:
            ok &= X @ a <= b
        return ok

    def violation(self, x) -> float:
        v = [np.max(self.lo - x), np.max(x - self.hi)]
        for T, t, g, g0 in self.cones:
            v.append(np.linalg.norm(T @ x + t) - (g @ x + g0))
        for a, b in self.rows:
            v.append(a @ x - b)
        return max(0.0, float(max(v)))


def random_tiny_program(rng, max_vars: int = 3, max_cones: int = 2) -> TinyProgram:
    """A feasible random program with a strictly interior point."""
    n = int(rng.integers(1, max_vars + 1))
    x0 = rng.uniform(-1, 1, n)
    cones = []
    for _ in range(int(rng.integers(1, max_cones + 1))):
        d = int(rng.integers(1, 4))
        T = rng.standard_normal((d, n))
        t = rng.standard_normal(d)
        g = 0.5 * rng.standard_normal(n)
        g0 = np.linalg.norm(T @ x0 + t) - g @ x0 + rng.uniform(0.2, 1.0)
        cones.append((T, t, g, g0))
    rows = []
    for _ in range(int(rng.integers(0, 3))):
        a = rng.standard_normal(n)
        rows.append((a, float(a @ x0 + rng.uniform(0.1, 1.0))))
    return TinyProgram(rng.standard_normal(n), -2.0, 2.0, cones, rows, x0)


def _line_intervals(prob: TinyProgram, X0, d):
    """Exact feasible interval ``[lo, hi]`` of ``s`` on each line ``x0 + s d`` (rows of ``X0``)."""
    N = X0.shape[0]
    lo, hi = np.full(N, -np.inf), np.full(N, np.inf)

    def half_line(a, b):
        # a + b s >= 0 with scalar b
        nonlocal lo, hi
        if b > 0:
            lo = np.maximum(lo, -a / b)
        elif b < 0:
            hi = np.minimum(hi, -a / b)
        else:
            hi = np.where(a < 0, -np.inf, hi)

    for i in range(prob.n):
        half_line(X0[:, i] - prob.lo, d[i])
        half_line(prob.hi - X0[:, i], -d[i])
    for a, b in prob.rows:
        half_line(b - X0 @ a, -(a @ d))
    for T, t, g, g0 in prob.cones:
        p, q = X0 @ T.T + t, T @ d
        alpha, beta = X0 @ g + g0, g @ d
        half_line(alpha, beta)
        # ||p + s q||^2 <= (alpha + s beta)^2  <=>  A s^2 + 2 B s + C <= 0
        A = q @ q - beta * beta
        B = p @ q - alpha * beta
        C = np.einsum("ij,ij->i", p, p) - alpha * alpha
        disc = B * B - A * C
        root = np.sqrt(np.maximum(disc, 0.0))
        w = -(B + np.copysign(root, B))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.sort(np.stack([w / A, C / w]), axis=0)
        if A > 0:
            empty = disc < 0
            lo = np.where(empty, np.inf, np.maximum(lo, r[0]))
            hi = np.where(empty, -np.inf, np.minimum(hi, r[1]))
        elif A < 0:
            # the quadratic holds outside the roots; the cone keeps the branch where alpha + s beta >= 0
            cut = disc >= 0
            if beta > 0:
                lo = np.where(cut, np.maximum(lo, r[1]), lo)
            else:
                hi = np.where(cut, np.minimum(hi, r[0]), hi)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                bound = -C / (2 * B)
            lo = np.where(B < 0, np.maximum(lo, bound), lo)
            hi = np.where(B > 0, np.minimum(hi, bound), hi)
    return lo, hi


def _bracket_min(f, lo, hi, points: int = 21, width: float = 1e-13, first: int = 201):
    """Minimise convex ``f`` (vectorised over a batch of brackets) by repeated grid refinement.

    ``lo`` and ``hi`` are arrays of bracket ends; ``f`` maps a (batch, points)
    array of abscissae to values. For a convex function the minimiser stays
    between the neighbours of the best grid point, so each pass shrinks the
    bracket by a factor ``2 / (points - 1)`` without losing it. The first pass
    is denser so that narrow feasible ranges are not stepped over.

    Returns the best values and their abscissae.
    """
    lo, hi = np.array(lo, float), np.array(hi, float)
    best = np.full(lo.shape, np.inf)
    arg = 0.5 * (lo + hi)
    n = first
    while True:
        U = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, n)
        V = f(U)
        j = np.argmin(V, axis=1)
        rows = np.arange(lo.size)
        better = V[rows, j] < best
        best = np.where(better, V[rows, j], best)
        arg = np.where(better, U[rows, j], arg)
        if np.all(hi - lo < width):
            return best, arg
        lo, hi = U[rows, np.maximum(j - 1, 0)], U[rows, np.minimum(j + 1, n - 1)]
        n = points


def _search(prob: TinyProgram, e, points: int):
    """Lowest objective over lines parallel to the unit vector ``e``; returns (value, point)."""
    n = prob.n
    # orthonormal basis of the complement of the line direction
    Q = np.linalg.svd(e[None, :])[2][1:].T
    reach = np.sqrt(n) * max(abs(prob.lo), abs(prob.hi))
    ce = float(prob.c @ e)

    def ends(W):
        X0 = W @ Q.T
        lo, hi = _line_intervals(prob, X0, e)
        return X0, (hi if ce < 0 else lo), lo <= hi

    def lowest(W):
        X0, s, ok = ends(W)
        return np.where(ok, X0 @ prob.c + ce * s, np.inf)

    if n == 1:
        W = np.zeros((1, 0))
        value = float(lowest(W)[0])
    elif n == 2:
        f = lambda U: lowest(U.reshape(-1, 1)).reshape(U.shape)
        value, w = _bracket_min(f, [-reach], [reach], points)
        value, W = float(value[0]), w.reshape(1, 1)
    else:
        def inner(U):
            # U holds first coordinates; minimise over the second for each of them
            w1 = U.ravel()

            def g(V):
                W = np.stack([np.repeat(w1, V.shape[1]), V.ravel()], axis=1)
                return lowest(W).reshape(V.shape)

            value, w2 = _bracket_min(g, np.full(w1.size, -reach), np.full(w1.size, reach), points)
            inner.last = dict(zip(w1.tolist(), w2.tolist()))
            return value.reshape(U.shape)

        value, w1 = _bracket_min(inner, [-reach], [reach], points)
        value = float(value[0])
        inner(w1.reshape(1, 1))
        W = np.array([[w1[0], inner.last[w1[0]]]])
    if not np.isfinite(value):
        return np.inf, None
    # the reported value comes from the search; the point is only an estimate of where it is attained
    # (re-evaluating a line that grazes the boundary can flip its feasibility by rounding)
    X0, s, _ = ends(W)
    return value, (X0[0] + s[0] * e if np.isfinite(s[0]) else None)


def grid_search_optimum(prob: TinyProgram, points: int = 21) -> float:
    """Optimal value by exhaustive search over the feasible region.

    Along each line of a parallel family the feasible set is an interval whose
    ends are computed exactly, and the lowest objective on the line is a
    convex function of the line's offset; that function is minimised by nested
    grid refinement. The first family follows the objective direction. When
    the optimum is a vertex, lines near it barely touch the feasible set and
    the refinement can lose them, so a second family runs from a known
    interior point through the first estimate: the line through the optimum
    then crosses the interior and its neighbours stay wide. Every reported
    value is attained at a feasible point, so the smaller of the two is kept.
    """
    c = prob.c / np.linalg.norm(prob.c)
    value, x = _search(prob, -c, points)
    if prob.interior is not None and x is not None:
        e = x - prob.interior
        if np.linalg.norm(e) > 0:
            value = min(value, _search(prob, e / np.linalg.norm(e), points)[0])
    return value


# -- estimation programs in cvxpy -----------------------------------------------------

def _stack(y, *mats):
    yr = np.concatenate([y.real, y.imag])
    return yr, [np.vstack([m.real, m.imag]) for m in mats]


def _solve_cvxpy(problem):
    """Solve with CLARABEL; near-degenerate noiseless programs may need more regularisation or CVXOPT."""
    import cvxpy as cp

    attempts = [dict(solver="CLARABEL"), dict(solver="CLARABEL", static_regularization_constant=1e-7),
                dict(solver="CVXOPT")]
    for kw in attempts:
        try:
            problem.solve(**kw)
        except cp.error.SolverError:
            continue
        if problem.status == cp.OPTIMAL:
            return
    raise RuntimeError("no reference solver reached an optimal status")


def cvxpy_estimate(method, y, dictionary, mu, eta=1e-5, shifted=None):
    """Solve an estimation program from its mathematical statement; returns (coef, objective)."""
    import cvxpy as cp

    L = dictionary.num_grid
    h = 0.5 * dictionary.grid.grid_size
    if method == "lasso":
        yr, (A,) = _stack(y, dictionary.base)
        x = cp.Variable(L, nonneg=True)
        obj = 0.5 * cp.sum_squares(yr - A @ x) + mu * cp.sum(x)
        _solve_cvxpy(cp.Problem(cp.Minimize(obj)))
        return x.value[None, :], obj.value
    if method == "neighbor_glasso":
        yr, (A, B) = _stack(y, dictionary.base, shifted)
        x1, x2 = cp.Variable(L, nonneg=True), cp.Variable(L, nonneg=True)
        obj = 0.5 * cp.sum_squares(yr - A @ x1 - B @ x2) + mu * cp.sum(cp.norm(cp.vstack([x1, x2]), 2, axis=0))
        _solve_cvxpy(cp.Problem(cp.Minimize(obj)))
        return np.vstack([x1.value, x2.value]), obj.value
    if method == "taylor1_glasso":
        yr, (A, A1) = _stack(y, dictionary.base, dictionary.first)
        x1, x2 = cp.Variable(L), cp.Variable(L)
        # work with p = x2 / h so both variables have the same magnitude
        obj = 0.5 * cp.sum_squares(yr - A @ x1 - h * A1 @ x2) + mu * cp.sum(
            cp.norm(cp.vstack([x1, h * x2]), 2, axis=0))
        cons = [x2 <= x1, -x2 <= x1, x1 >= 0]
        _solve_cvxpy(cp.Problem(cp.Minimize(obj), cons))
        return np.vstack([x1.value, h * x2.value]), obj.value
    if method == "taylor2_glasso":
        yr, (A, A1, A2) = _stack(y, dictionary.base, dictionary.first, dictionary.second_halved)
        x1, x2, x3, z = cp.Variable(L), cp.Variable(L), cp.Variable(L), cp.Variable(L)
        X2, X3 = h * x2, h * h * x3
        obj = 0.5 * cp.sum_squares(yr - A @ x1 - A1 @ X2 - A2 @ X3) + mu * cp.sum(
            cp.norm(cp.vstack([x1, X2, X3]), 2, axis=0))
        cons = [x1 >= 0, x2 <= x1, -x2 <= x1, x3 >= 0, x3 <= x1, z >= 0, z <= eta,
                cp.norm(cp.vstack([2 * X2, x1 - X3]), 2, axis=0) <= x1 + X3 + z]
        _solve_cvxpy(cp.Problem(cp.Minimize(obj), cons))
        return np.vstack([x1.value, h * x2.value, h * h * x3.value]), obj.value
    raise ValueError(method)
