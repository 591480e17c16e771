"""Second-order cone programs in modelling form and their lowering to standard form.

A :class:`ConicProgram` collects, over ``n`` real variables ``x``:

* a linear objective ``c @ x``,
* linear rows ``row @ x <= bound`` or ``row @ x == bound``,
* second-order cones ``||T @ x + t|| <= g @ x + g0``,
* nonnegativity of selected variables and per-variable boxes.

Rows are added in batches (dense or scipy.sparse matrices) because the
estimators create thousands of structurally identical constraints.
:meth:`ConicProgram.standard_form` lowers everything to

    minimize c'x  s.t.  G x + s = h,  A x = b,  s in R+^l x Q^q1 x ... x Q^qN

which is what :func:`offgrid_doa.conic.solve` consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

FORMAT_VERSION = 1


class ProgramError(ValueError):
    pass


def _as_rows(rows, n) -> sp.csr_matrix:
    if sp.issparse(rows):
        m = sp.csr_matrix(rows, dtype=float)
    else:
        m = sp.csr_matrix(np.atleast_2d(np.asarray(rows, dtype=float)))
    if m.shape[1] != n:
        raise ProgramError(f"constraint rows have {m.shape[1]} columns, program has {n} variables")
    return m


@dataclass
class SocBatch:
    """``count`` cones of dimension ``dim``: ``||tail_k x + tail_const_k|| <= head_k x + head_const_k``.

    ``tail`` stacks the ``dim - 1`` rows of cone 0, then cone 1, and so on.
    """

    head: sp.csr_matrix
    head_const: np.ndarray
    tail: sp.csr_matrix
    tail_const: np.ndarray
    dim: int
    label: str = ""

    @property
    def count(self) -> int:
        return self.head.shape[0]

    def stacked(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Cone-ordered affine map ``(F, f)`` with ``F x + f`` the cone vectors concatenated."""
        N, d = self.count, self.dim
        F = sp.vstack([self.head, self.tail], format="csr")
        f = np.concatenate([self.head_const, self.tail_const])
        # head rows come first in F; interleave so each cone is contiguous
        order = np.empty(N * d, dtype=int)
        order[0::d] = np.arange(N)
        tail_idx = N + np.arange(N * (d - 1)).reshape(N, d - 1)
        order.reshape(N, d)[:, 1:] = tail_idx
        return F[order], f[order]


@dataclass
class StandardForm:
    c: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    num_linear: int
    soc_groups: list[tuple[int, int]]  # (count, dim) in row order after the linear rows

    @property
    def num_variables(self) -> int:
        return self.c.size


@dataclass
class ConicProgram:
    num_variables: int
    objective: np.ndarray = None
    linear: list = field(default_factory=list)
    socs: list[SocBatch] = field(default_factory=list)
    nonneg_indices: set = field(default_factory=set)
    box_constraints: list = field(default_factory=list)

    def __post_init__(self):
        if self.num_variables < 1:
            raise ProgramError("a program needs at least one variable")
        if self.objective is None:
            self.objective = np.zeros(self.num_variables)
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.num_variables,):
            raise ProgramError("objective length must equal the number of variables")

    # -- building ---------------------------------------------------------

    def add_linear(self, rows, relation: str, bounds, label: str = "") -> None:
        """Add ``rows @ x <= bounds`` (``relation='<='``) or ``rows @ x == bounds`` (``'='``)."""
        if relation not in ("<=", "="):
            raise ProgramError(f"unknown relation {relation!r}")
        R = _as_rows(rows, self.num_variables)
        bnd = np.broadcast_to(np.asarray(bounds, dtype=float), (R.shape[0],)).copy()
        self.linear.append((R, relation, bnd, label))

    def add_soc(self, head, head_const, tail, tail_const=None, label: str = "") -> None:
        """Add one cone ``||tail @ x + tail_const|| <= head @ x + head_const``."""
        tail = _as_rows(tail, self.num_variables)
        tc = np.zeros(tail.shape[0]) if tail_const is None else np.asarray(tail_const, dtype=float)
        self.add_soc_batch(_as_rows(head, self.num_variables), np.atleast_1d(head_const), tail, tc,
                           tail.shape[0] + 1, label)

    def add_soc_batch(self, head, head_const, tail, tail_const, dim: int, label: str = "") -> None:
        H = _as_rows(head, self.num_variables)
        T = _as_rows(tail, self.num_variables)
        N = H.shape[0]
        if dim < 2:
            raise ProgramError("cone tails must be nonempty")
        if T.shape[0] != N * (dim - 1):
            raise ProgramError(f"expected {N * (dim - 1)} tail rows for {N} cones of dimension {dim}")
        hc = np.broadcast_to(np.asarray(head_const, dtype=float), (N,)).copy()
        tc = np.broadcast_to(np.asarray(tail_const, dtype=float), (T.shape[0],)).copy()
        self.socs.append(SocBatch(H, hc, T, tc, dim, label))

    def set_nonneg(self, indices) -> None:
        idx = np.atleast_1d(np.asarray(indices, dtype=int))
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_variables):
            raise ProgramError("nonnegativity index out of range")
        self.nonneg_indices.update(int(i) for i in idx)

    def add_box(self, index, lower, upper) -> None:
        idx = np.atleast_1d(np.asarray(index, dtype=int))
        lo = np.broadcast_to(np.asarray(lower, dtype=float), idx.shape)
        hi = np.broadcast_to(np.asarray(upper, dtype=float), idx.shape)
        if np.any(lo > hi):
            raise ProgramError("box constraint with lower > upper")
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_variables):
            raise ProgramError("box index out of range")
        self.box_constraints.extend(zip(idx.tolist(), lo.tolist(), hi.tolist()))

    # -- inspection -------------------------------------------------------

    @property
    def num_cones(self) -> int:
        return sum(b.count for b in self.socs)

    def objective_value(self, x) -> float:
        return float(self.objective @ x)

    def constraint_violation(self, x) -> float:
        """Largest violation of any constraint at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for R, rel, bnd, _ in self.linear:
            r = R @ x - bnd
            v = np.abs(r) if rel == "=" else np.maximum(r, 0.0)
            if v.size:
                worst = max(worst, float(v.max()))
        for batch in self.socs:
            head = batch.head @ x + batch.head_const
            tail = (batch.tail @ x + batch.tail_const).reshape(batch.count, batch.dim - 1)
            v = np.linalg.norm(tail, axis=1) - head
            if v.size:
                worst = max(worst, float(v.max()))
        if self.nonneg_indices:
            idx = np.fromiter(self.nonneg_indices, dtype=int)
            worst = max(worst, float(np.max(-x[idx])))
        for i, lo, hi in self.box_constraints:
            worst = max(worst, lo - x[i], x[i] - hi)
        return max(worst, 0.0)

    # -- lowering ---------------------------------------------------------

    def standard_form(self) -> StandardForm:
        n = self.num_variables
        G_lin, h_lin, A_rows, b_rows = [], [], [], []
        for R, rel, bnd, _ in self.linear:
            if rel == "=":
                A_rows.append(R)
                b_rows.append(bnd)
            else:
                G_lin.append(R)
                h_lin.append(bnd)
        if self.nonneg_indices:
            idx = np.array(sorted(self.nonneg_indices))
            G_lin.append(sp.csr_matrix((-np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, n)))
            h_lin.append(np.zeros(idx.size))
        if self.box_constraints:
            idx = np.array([bx[0] for bx in self.box_constraints])
            lo = np.array([bx[1] for bx in self.box_constraints])
            hi = np.array([bx[2] for bx in self.box_constraints])
            k = idx.size
            G_lin.append(sp.csr_matrix((np.ones(k), (np.arange(k), idx)), shape=(k, n)))
            h_lin.append(hi)
            G_lin.append(sp.csr_matrix((-np.ones(k), (np.arange(k), idx)), shape=(k, n)))
            h_lin.append(-lo)
        num_linear = sum(g.shape[0] for g in G_lin)

        G_soc, h_soc, groups = [], [], []
        for batch in self.socs:
            F, f = batch.stacked()
            # s = F x + f in Q  <=>  G = -F, h = f
            G_soc.append(-F)
            h_soc.append(f)
            groups.append((batch.count, batch.dim))

        blocks = G_lin + G_soc
        G = sp.vstack(blocks, format="csr") if blocks else sp.csr_matrix((0, n))
        h = np.concatenate(h_lin + h_soc) if blocks else np.zeros(0)
        A = sp.vstack(A_rows, format="csr") if A_rows else sp.csr_matrix((0, n))
        b = np.concatenate(b_rows) if b_rows else np.zeros(0)
        return StandardForm(self.objective.copy(), G, h, A, b, num_linear, groups)

    # -- debug dump -------------------------------------------------------

    def dump(self, path) -> None:
        """Write a self-describing JSON-lines dump: header, objective, then one constraint per record."""

        def row(R):
            R = R.tocoo()
            return {"cols": R.col.tolist(), "vals": R.data.tolist()}

        with open(path, "w") as fh:
            fh.write(json.dumps({"format": "offgrid-doa-conic", "version": FORMAT_VERSION,
                                 "num_variables": self.num_variables}) + "\n")
            fh.write(json.dumps({"kind": "objective", **row(sp.csr_matrix(self.objective))}) + "\n")
            for R, rel, bnd, label in self.linear:
                for i in range(R.shape[0]):
                    fh.write(json.dumps({"kind": "linear", "relation": rel, "bound": bnd[i],
                                         "label": label, **row(R[i])}) + "\n")
            for batch in self.socs:
                d = batch.dim - 1
                for k in range(batch.count):
                    tail = batch.tail[k * d:(k + 1) * d].tocoo()
                    fh.write(json.dumps({
                        "kind": "soc", "label": batch.label,
                        "head": row(batch.head[k]), "head_const": batch.head_const[k],
                        "tail": {"rows": tail.row.tolist(), "cols": tail.col.tolist(),
                                 "vals": tail.data.tolist(), "dim": d},
                        "tail_const": batch.tail_const[k * d:(k + 1) * d].tolist(),
                    }) + "\n")
            for i in sorted(self.nonneg_indices):
                fh.write(json.dumps({"kind": "nonneg", "index": i}) + "\n")
            for i, lo, hi in self.box_constraints:
                fh.write(json.dumps({"kind": "box", "index": i, "lower": lo, "upper": hi}) + "\n")

    @classmethod
    def load(cls, path) -> "ConicProgram":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("format") != "offgrid-doa-conic" or header.get("version") != FORMAT_VERSION:
                raise ProgramError(f"unsupported dump header {header}")
            n = header["num_variables"]

            def dense(rec):
                v = np.zeros(n)
                np.add.at(v, rec["cols"], rec["vals"])
                return v

            prog = None
            for line in fh:
                rec = json.loads(line)
                kind = rec["kind"]
                if kind == "objective":
                    prog = cls(n, dense(rec))
                elif kind == "linear":
                    prog.add_linear(dense(rec), rec["relation"], rec["bound"], rec["label"])
                elif kind == "soc":
                    t = rec["tail"]
                    T = sp.csr_matrix((t["vals"], (t["rows"], t["cols"])), shape=(t["dim"], n))
                    prog.add_soc(dense(rec["head"]), rec["head_const"], T, rec["tail_const"], rec["label"])
                elif kind == "nonneg":
                    prog.set_nonneg(rec["index"])
                elif kind == "box":
                    prog.add_box(rec["index"], rec["lower"], rec["upper"])
                else:
                    raise ProgramError(f"unknown record kind {kind!r}")
        return prog
