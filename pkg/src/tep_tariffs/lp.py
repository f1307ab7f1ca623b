"""Linear programming: model container, builder and solvers.

Every model is a maximization::

    max  c @ x + offset
    s.t. A[i] @ x  (<= | = | >=)  b[i]
         lb <= x <= ub

Row duals follow the sensitivity convention ``y[i] = d obj / d b[i]``, so
``y >= 0`` on ``<=`` rows, ``y <= 0`` on ``>=`` rows and free on equalities.
Reduced costs are ``r = c - A.T @ y``.

Two engines are available.  ``"simplex"`` is a dense bounded-variable
revised simplex written here (Dantzig pricing with a Bland fallback after
a run of degenerate pivots).  ``"highs"`` hands the model to the HiGHS
solver shipped with scipy and is meant for models too large for a dense
Python engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import tolerances as tol

LE, EQ, GE = "<", "=", ">"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

#: models with rows * columns above this go to HiGHS under method="auto"
AUTO_DENSE_LIMIT = 400_000


class LpError(RuntimeError):
    pass


class SingularBasisError(LpError):
    pass


class IterationLimitError(LpError):
    pass


def label_name(label: Hashable) -> str:
    """Identifier used for a label in LP files and CSV exports."""
    if isinstance(label, tuple):
        return "_".join(str(p) for p in label)
    return str(label)


@dataclass(frozen=True)
class LpModel:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    var_labels: tuple = ()
    row_labels: tuple = ()
    offset: float = 0.0

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "LpModel":
        return LpModel(self.c, self.A, self.sense, self.b, lb, ub,
                       self.var_labels, self.row_labels, self.offset)

    def with_objective(self, c: np.ndarray, offset: float = 0.0) -> "LpModel":
        return LpModel(np.asarray(c, dtype=float), self.A, self.sense, self.b,
                       self.lb, self.ub, self.var_labels, self.row_labels, offset)

    def var_index(self) -> dict:
        return {lab: j for j, lab in enumerate(self.var_labels)}

    def row_index(self) -> dict:
        return {lab: i for i, lab in enumerate(self.row_labels)}


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    objective: float = math.nan
    iterations: int = 0
    method: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class LpBuilder:
    """Incremental construction of an :class:`LpModel`.

    Variables and rows are addressed by integer index; labels are kept for
    reporting and LP-file export.
    """

    def __init__(self) -> None:
        self._c: list[float] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._vlabels: list = []
        self._binary: list[int] = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self._sense: list[str] = []
        self._rhs: list[float] = []
        self._rlabels: list = []
        self.offset = 0.0

    @property
    def n_vars(self) -> int:
        return len(self._c)

    @property
    def n_rows(self) -> int:
        return len(self._rhs)

    def add_var(self, label, lb: float = 0.0, ub: float = math.inf,
                obj: float = 0.0, binary: bool = False) -> int:
        j = len(self._c)
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
            self._binary.append(j)
        self._c.append(float(obj))
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._vlabels.append(label)
        return j

    def add_obj(self, j: int, coef: float) -> None:
        self._c[j] += float(coef)

    def add_row(self, cols: Sequence[int], vals: Sequence[float], sense: str,
                rhs: float, label=None) -> int:
        i = len(self._rhs)
        for j, v in zip(cols, vals):
            if v != 0.0:
                self._rows.append(i)
                self._cols.append(j)
                self._vals.append(float(v))
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._rlabels.append(label if label is not None else ("row", i))
        return i

    @property
    def binaries(self) -> tuple[int, ...]:
        return tuple(self._binary)

    def build(self) -> LpModel:
        m, n = len(self._rhs), len(self._c)
        A = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(m, n))
        A.sum_duplicates()
        return LpModel(
            c=np.array(self._c, dtype=float), A=A,
            sense=np.array(self._sense, dtype="<U1"),
            b=np.array(self._rhs, dtype=float),
            lb=np.array(self._lb, dtype=float), ub=np.array(self._ub, dtype=float),
            var_labels=tuple(self._vlabels), row_labels=tuple(self._rlabels),
            offset=self.offset)


# --------------------------------------------------------------------------
# dense bounded-variable revised simplex


class _Simplex:
    def __init__(self, model: LpModel, max_iter: Optional[int]):
        A = model.A.toarray()
        m, n = A.shape
        self.m, self.n = m, n
        sense = model.sense
        slb = np.where(sense == GE, -np.inf, 0.0)
        sub = np.where(sense == LE, np.inf, 0.0)
        lb = model.lb.astype(float)
        ub = model.ub.astype(float)
        if np.any(lb > ub + tol.PRIMAL_TOL):
            self.trivially_infeasible = True
            return
        self.trivially_infeasible = False

        # nonbasic start: nearest finite bound, free variables at zero
        x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        resid = model.b - A @ x0
        clipped = np.clip(resid, slb, sub)
        art_rows = np.flatnonzero(np.abs(resid - clipped) > tol.PRIMAL_TOL * (1 + np.abs(model.b)))
        k = len(art_rows)
        sigma = np.sign(resid[art_rows] - clipped[art_rows])
        art = np.zeros((m, k))
        art[art_rows, np.arange(k)] = sigma

        self.M = np.hstack([A, np.eye(m), art])
        self.lower = np.concatenate([lb, slb, np.zeros(k)])
        self.upper = np.concatenate([ub, sub, np.full(k, np.inf)])
        self.b = model.b.astype(float)
        self.x = np.concatenate([x0, clipped, np.abs(resid[art_rows] - clipped[art_rows])])
        basis = np.arange(n, n + m)
        basis[art_rows] = n + m + np.arange(k)
        self.basis = basis
        self.is_basic = np.zeros(n + m + k, dtype=bool)
        self.is_basic[basis] = True
        diag = np.ones(m)
        diag[art_rows] = sigma
        self.Binv = np.diag(1.0 / diag)
        self.n_art = k
        self.iterations = 0
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n + k) + 1000
        self.scale = 1.0 + max(np.max(np.abs(self.b), initial=0.0),
                               np.max(np.abs(x0), initial=0.0))

    def refactor(self) -> None:
        B = self.M[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SingularBasisError(
                f"singular basis after {self.iterations} iterations") from exc
        if not np.all(np.isfinite(self.Binv)):
            raise SingularBasisError(f"non-finite basis inverse after {self.iterations} iterations")
        nonbasic = ~self.is_basic
        rhs = self.b - self.M[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs

    def run(self, cost: np.ndarray) -> str:
        m = self.m
        lower, upper = self.lower, self.upper
        fixed = (upper - lower) <= tol.PRIMAL_TOL
        degenerate = 0
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                raise IterationLimitError(f"simplex exceeded {self.max_iter} iterations")
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.M
            d[self.is_basic] = 0.0
            d[fixed] = 0.0
            x = self.x
            at_lower = x <= lower + tol.PRIMAL_TOL
            at_upper = x >= upper - tol.PRIMAL_TOL
            dscale = tol.OPT_TOL * (1.0 + np.abs(cost))
            up = (d > dscale) & ~at_upper
            down = (d < -dscale) & ~at_lower
            eligible = (up | down) & ~self.is_basic
            if not eligible.any():
                return OPTIMAL
            bland = degenerate > tol.BLAND_AFTER
            if bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                q = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            direction = 1.0 if up[q] else -1.0

            alpha = self.Binv @ self.M[:, q]
            delta = direction * alpha
            xb = x[self.basis]
            lb_b = lower[self.basis]
            ub_b = upper[self.basis]
            ratios = np.full(m, np.inf)
            dec = delta > tol.PIVOT_TOL
            inc = delta < -tol.PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lb_b[dec]) / delta[dec]
                ratios[inc] = (ub_b[inc] - xb[inc]) / (-delta[inc])
            ratios = np.where(np.isnan(ratios), np.inf, np.maximum(ratios, 0.0))
            t_ratio = ratios.min() if m else np.inf
            if direction > 0:
                t_self = upper[q] - x[q]
            else:
                t_self = x[q] - lower[q]

            if not np.isfinite(t_ratio) and not np.isfinite(t_self):
                return UNBOUNDED

            self.iterations += 1
            if t_self <= t_ratio:
                step = t_self
                x[q] += direction * step
                x[self.basis] = xb - step * delta
                degenerate = degenerate + 1 if step <= tol.PRIMAL_TOL else 0
                continue

            step = t_ratio
            near = ratios <= t_ratio + tol.PRIMAL_TOL * (1.0 + t_ratio)
            cand = np.flatnonzero(near)
            if bland:
                r = int(cand[np.argmin(self.basis[cand])])
            else:
                r = int(cand[np.argmax(np.abs(delta[cand]))])
            leaving = self.basis[r]
            x[q] += direction * step
            x[self.basis] = xb - step * delta
            x[leaving] = lower[leaving] if delta[r] > 0 else upper[leaving]
            self.is_basic[leaving] = False
            self.is_basic[q] = True
            self.basis[r] = q

            piv = alpha[r]
            row = self.Binv[r] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[r] = row
            degenerate = degenerate + 1 if step <= tol.PRIMAL_TOL else 0
            since_refactor += 1
            if since_refactor >= tol.REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0


def _solve_simplex(model: LpModel, max_iter: Optional[int] = None) -> LpSolution:
    s = _Simplex(model, max_iter)
    if s.trivially_infeasible:
        return LpSolution(INFEASIBLE, method="simplex")
    n, m, k = s.n, s.m, s.n_art
    if k:
        phase1 = np.zeros(n + m + k)
        phase1[n + m:] = -1.0
        status = s.run(phase1)
        s.refactor()
        infeas = s.x[n + m:].sum()
        if status != OPTIMAL or infeas > tol.FEAS_TOL * s.scale:
            return LpSolution(INFEASIBLE, iterations=s.iterations, method="simplex")
        s.upper[n + m:] = 0.0
        s.x[n + m:] = np.clip(s.x[n + m:], 0.0, 0.0)
        s.refactor()
    cost = np.concatenate([model.c, np.zeros(m + k)])
    status = s.run(cost)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=s.iterations, method="simplex")
    s.refactor()
    x = s.x[:n].copy()
    y = cost[s.basis] @ s.Binv
    r = model.c - model.A.T @ y
    return LpSolution(OPTIMAL, x=x, y=y, r=r, objective=model.objective(x),
                      iterations=s.iterations, method="simplex")


# --------------------------------------------------------------------------
# HiGHS backend


def _split_rows(model: LpModel):
    le = model.sense == LE
    ge = model.sense == GE
    eq = model.sense == EQ
    A = model.A
    A_ub = sp.vstack([A[le], -A[ge]]).tocsr()
    b_ub = np.concatenate([model.b[le], -model.b[ge]])
    return le, ge, eq, A_ub, b_ub


def _solve_highs(model: LpModel) -> LpSolution:
    from scipy.optimize import linprog

    le, ge, eq, A_ub, b_ub = _split_rows(model)
    A_eq = model.A[eq]
    bounds = np.column_stack([
        np.where(np.isfinite(model.lb), model.lb, -np.inf),
        np.where(np.isfinite(model.ub), model.ub, np.inf)])
    args = dict(A_ub=A_ub if A_ub.shape[0] else None,
                b_ub=b_ub if A_ub.shape[0] else None,
                A_eq=A_eq if A_eq.shape[0] else None,
                b_eq=model.b[eq] if A_eq.shape[0] else None,
                bounds=bounds)
    # HiGHS occasionally ends with an unknown model status on degenerate
    # models; retry without presolve, first dual simplex then interior point
    for method, options in (("highs", {}), ("highs-ds", {"presolve": False}),
                            ("highs-ipm", {"presolve": False})):
        res = linprog(-model.c, method=method, options=options, **args)
        if res.status in (0, 2, 3):
            break
    if res.status == 2:
        return LpSolution(INFEASIBLE, method="highs")
    if res.status == 3:
        return LpSolution(UNBOUNDED, method="highs")
    if res.status != 0:
        raise LpError(f"HiGHS failed: {res.message}")
    y = np.zeros(model.n_rows)
    n_le = int(le.sum())
    if A_ub.shape[0]:
        mu = res.ineqlin.marginals
        y[le] = -mu[:n_le]
        y[ge] = mu[n_le:]
    if A_eq.shape[0]:
        y[eq] = -res.eqlin.marginals
    x = np.asarray(res.x, dtype=float)
    r = model.c - model.A.T @ y
    return LpSolution(OPTIMAL, x=x, y=y, r=r, objective=model.objective(x),
                      iterations=int(getattr(res, "nit", 0)), method="highs")


def solve_lp(model: LpModel, method: str = "auto",
             max_iter: Optional[int] = None) -> LpSolution:
    """Solve an LP and return primal values, row duals and reduced costs.

    Parameters
    ----------
    model : LpModel
    method : {"auto", "simplex", "highs"}
        ``"auto"`` uses the in-house simplex for models up to
        ``AUTO_DENSE_LIMIT`` matrix entries and HiGHS above that.
    max_iter : int, optional
        Iteration cap for the simplex engine.

    Raises
    ------
    SingularBasisError, IterationLimitError
        From the simplex engine.
    """
    if method == "auto":
        size = model.n_rows * (model.n_vars + model.n_rows)
        method = "simplex" if size <= AUTO_DENSE_LIMIT else "highs"
    if method == "simplex":
        return _solve_simplex(model, max_iter)
    if method == "highs":
        return _solve_highs(model)
    raise ValueError(f"unknown LP method {method!r}")


# --------------------------------------------------------------------------
# verification


class DualityCheck(NamedTuple):
    gap: float
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float

    def passed(self, scale: float = 1.0) -> bool:
        s = tol.DUALITY_GAP_TOL * (1.0 + abs(self.primal_objective)) * scale
        return (self.gap <= s and self.primal_residual <= tol.FEAS_TOL * (1 + scale) * 10
                and self.dual_residual <= tol.FEAS_TOL * (1 + scale) * 10)


def row_activity(model: LpModel, x: np.ndarray) -> np.ndarray:
    return model.A @ x


def primal_residual(model: LpModel, x: np.ndarray) -> float:
    """Largest violation of any row or bound at ``x``."""
    ax = model.A @ x
    viol = np.zeros(model.n_rows)
    le = model.sense == LE
    ge = model.sense == GE
    eq = model.sense == EQ
    viol[le] = np.maximum(ax[le] - model.b[le], 0.0)
    viol[ge] = np.maximum(model.b[ge] - ax[ge], 0.0)
    viol[eq] = np.abs(ax[eq] - model.b[eq])
    bnd = np.maximum(np.maximum(model.lb - x, 0.0), np.maximum(x - model.ub, 0.0))
    return float(max(viol.max(initial=0.0), bnd.max(initial=0.0)))


def dual_objective(model: LpModel, y: np.ndarray) -> tuple[float, float]:
    """Lagrangian dual value at ``y`` and the dual infeasibility of ``y``.

    The bound terms use ``max(r*lb, r*ub)`` per column, which is exactly the
    dual objective of the bounded LP when ``y`` is dual feasible.
    """
    r = model.c - model.A.T @ y
    viol = 0.0
    le = model.sense == LE
    ge = model.sense == GE
    if le.any():
        viol = max(viol, float(np.maximum(-y[le], 0.0).max()))
    if ge.any():
        viol = max(viol, float(np.maximum(y[ge], 0.0).max()))
    total = float(model.b @ y) + model.offset
    pos = r > 0
    neg = r < 0
    if np.any(pos & ~np.isfinite(model.ub)):
        viol = max(viol, float(r[pos & ~np.isfinite(model.ub)].max()))
    if np.any(neg & ~np.isfinite(model.lb)):
        viol = max(viol, float(-r[neg & ~np.isfinite(model.lb)].min()))
    ub = np.where(np.isfinite(model.ub), model.ub, 0.0)
    lb = np.where(np.isfinite(model.lb), model.lb, 0.0)
    total += float(np.sum(np.where(pos, r * ub, 0.0)) + np.sum(np.where(neg, r * lb, 0.0)))
    return total, viol


def check_strong_duality(model: LpModel, sol: LpSolution) -> DualityCheck:
    """Primal-dual objective gap of an optimal solution, with residuals.

    Raises
    ------
    LpError
        If the solution is not optimal.
    """
    if not sol.optimal:
        raise LpError(f"strong duality needs an optimal solution, got {sol.status}")
    primal = model.objective(sol.x)
    dual, dual_viol = dual_objective(model, sol.y)
    return DualityCheck(abs(primal - dual), primal, dual,
                        primal_residual(model, sol.x), dual_viol)


def complementarity_residual(model: LpModel, sol: LpSolution) -> float:
    """Largest dual*slack product over rows and reduced-cost*bound-distance over columns."""
    ax = model.A @ sol.x
    slack = np.where(model.sense == LE, model.b - ax,
                     np.where(model.sense == GE, ax - model.b, 0.0))
    rows = np.abs(sol.y * slack)
    r = model.c - model.A.T @ sol.y
    dist_lo = np.where(np.isfinite(model.lb), sol.x - model.lb, np.inf)
    dist_up = np.where(np.isfinite(model.ub), model.ub - sol.x, np.inf)
    with np.errstate(invalid="ignore"):
        cols = np.where(r < 0, -r * dist_lo, np.where(r > 0, r * dist_up, 0.0))
    cols = np.where(np.isnan(cols), 0.0, cols)
    return float(max(rows.max(initial=0.0), cols.max(initial=0.0)))


# --------------------------------------------------------------------------
# LP file format


def _fmt(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _expr(cols, vals, names) -> str:
    parts = []
    for j, v in zip(cols, vals):
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(v))} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def dump_lp(model: LpModel, binaries: Sequence[int] = (), name: str = "model") -> str:
    """Render a model in the CPLEX LP text format.

    Variable and row names are :func:`label_name` of the labels, written
    verbatim, and coefficients use ``repr`` so values survive a round trip.
    """
    names = [label_name(lab) for lab in model.var_labels] or [f"x{j}" for j in range(model.n_vars)]
    rnames = [label_name(lab) for lab in model.row_labels] or [f"r{i}" for i in range(model.n_rows)]
    out = [f"\\ {name}", "Maximize"]
    nz = np.flatnonzero(model.c)
    obj = _expr(nz, model.c[nz], names)
    if model.offset:
        obj += f" + {_fmt(model.offset)} __offset"
    out.append(f" obj: {obj}")
    out.append("Subject To")
    A = model.A.tocsr()
    ops = {LE: "<=", GE: ">=", EQ: "="}
    for i in range(model.n_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        expr = _expr(A.indices[lo:hi], A.data[lo:hi], names)
        out.append(f" {rnames[i]}: {expr} {ops[model.sense[i]]} {_fmt(model.b[i])}")
    out.append("Bounds")
    if model.offset:
        out.append(" __offset = 1")
    binset = set(binaries)
    for j in range(model.n_vars):
        if j in binset:
            continue
        lo, hi = model.lb[j], model.ub[j]
        if lo == -math.inf and hi == math.inf:
            out.append(f" {names[j]} free")
        elif lo == hi:
            out.append(f" {names[j]} = {_fmt(lo)}")
        else:
            out.append(f" {_fmt(lo)} <= {names[j]} <= {_fmt(hi)}")
    if binset:
        out.append("Binaries")
        out.extend(f" {names[j]}" for j in sorted(binset))
    out.append("End")
    return "\n".join(out) + "\n"
