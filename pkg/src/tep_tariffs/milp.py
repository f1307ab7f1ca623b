"""Mixed 0-1 linear programs: branch and bound plus an enumeration oracle.

The branch and bound explores nodes best bound first and, among nodes with
equal bound, the deepest one first, which gives a depth-first dive without
a separate heuristic.  It branches on the most fractional binary (lowest
index on ties).  Each node relaxation is solved with :func:`lp.solve_lp`.

``method="highs"`` delegates the whole tree search to the HiGHS MILP solver
shipped with scipy; it is used for models too large for a dense LP engine.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tolerances as tol
from .lp import (GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, LpModel, LpSolution,
                 solve_lp)

NODE_LIMIT = "node_limit"


class NodeLimitError(RuntimeError):
    """Raised when the node budget runs out; carries the incumbent, if any."""

    def __init__(self, message: str, incumbent: Optional["MilpSolution"] = None):
        super().__init__(message)
        self.incumbent = incumbent


@dataclass(frozen=True)
class MilpModel:
    lp: LpModel
    binaries: tuple[int, ...]

    @property
    def n_binaries(self) -> int:
        return len(self.binaries)


@dataclass
class MilpSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = -math.inf
    best_bound: float = math.inf
    nodes: int = 0
    method: str = ""
    bound_history: list[float] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def gap_abs(self) -> float:
        return max(self.best_bound - self.objective, 0.0)

    @property
    def gap_rel(self) -> float:
        return self.gap_abs / max(abs(self.objective), 1e-10)


def _with_fixed(model: LpModel, fix: dict[int, float]) -> LpModel:
    lb = model.lb.copy()
    ub = model.ub.copy()
    for j, v in fix.items():
        lb[j] = ub[j] = v
    return model.with_bounds(lb, ub)


def polish(model: MilpModel, x: np.ndarray, lp_method: str = "auto") -> LpSolution:
    """Round the binaries of ``x`` and re-solve the continuous part."""
    fix = {j: float(round(x[j])) for j in model.binaries}
    return solve_lp(_with_fixed(model.lp, fix), method=lp_method)


def _prune_tol(incumbent: float, gap_abs: float, gap_rel: float) -> float:
    return max(gap_abs, gap_rel * abs(incumbent), tol.DUALITY_GAP_TOL * (1.0 + abs(incumbent)))


def _branch_and_bound(model: MilpModel, gap_abs: float, gap_rel: float,
                      node_limit: int, lp_method: str,
                      on_incumbent: Optional[Callable[[np.ndarray], None]] = None) -> MilpSolution:
    lp = model.lp
    lb0 = lp.lb.copy()
    ub0 = lp.ub.copy()
    bins = np.asarray(model.binaries, dtype=int)
    lb0[bins] = np.maximum(lb0[bins], 0.0)
    ub0[bins] = np.minimum(ub0[bins], 1.0)

    best_x: Optional[np.ndarray] = None
    best = -math.inf
    history: list[float] = []
    counter = itertools.count()
    # heap entries: (-bound, -depth, seq, fixings)
    heap: list = [(-math.inf, 0, next(counter), ())]
    nodes = 0
    root_bound = math.inf

    def open_bound() -> float:
        if not heap:
            return best
        return max(best, -heap[0][0])

    while heap:
        neg_bound, neg_depth, _, fixings = heapq.heappop(heap)
        if -neg_bound <= best + _prune_tol(best, gap_abs, gap_rel) and best_x is not None:
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (neg_bound, neg_depth, next(counter), fixings))
            inc = None
            if best_x is not None:
                inc = MilpSolution(NODE_LIMIT, best_x, best, open_bound(), nodes,
                                   "bnb", history)
            raise NodeLimitError(f"node limit {node_limit} reached", inc)
        nodes += 1
        lb = lb0.copy()
        ub = ub0.copy()
        for j, v in fixings:
            lb[j] = ub[j] = v
        sol = solve_lp(lp.with_bounds(lb, ub), method=lp_method)
        if sol.status == UNBOUNDED:
            if nodes == 1:
                return MilpSolution(UNBOUNDED, nodes=nodes, method="bnb")
            continue
        if not sol.optimal:
            history.append(min(open_bound(), root_bound))
            continue
        bound = min(sol.objective, -neg_bound)
        if nodes == 1:
            root_bound = bound
        if best_x is not None and bound <= best + _prune_tol(best, gap_abs, gap_rel):
            history.append(min(open_bound(), root_bound))
            continue
        xb = sol.x[bins]
        frac = np.abs(xb - np.round(xb))
        if frac.max(initial=0.0) <= tol.INT_TOL:
            polished = polish(model, sol.x, lp_method)
            if polished.status == UNBOUNDED:
                return MilpSolution(UNBOUNDED, nodes=nodes, method="bnb")
            if polished.optimal and polished.objective > best:
                best = polished.objective
                best_x = polished.x
                if on_incumbent is not None:
                    on_incumbent(best_x)
        else:
            k = int(np.argmax(np.round(-np.abs(xb - 0.5), 12)))
            j = int(bins[k])
            first = float(round(xb[k]))
            depth = -neg_depth + 1
            for v in (first, 1.0 - first):
                heapq.heappush(heap, (-bound, -depth, next(counter), fixings + ((j, v),)))
        history.append(min(open_bound(), root_bound))

    if best_x is None:
        return MilpSolution(INFEASIBLE, nodes=nodes, method="bnb", bound_history=history)
    final_bound = best if not heap else open_bound()
    history.append(final_bound)
    return MilpSolution(OPTIMAL, best_x, best, final_bound, nodes, "bnb", history)


def _highs_milp(model: MilpModel, gap_rel: float, node_limit: int,
                time_limit: Optional[float], lp_method: str) -> MilpSolution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    lp = model.lp
    lo = np.where(lp.sense == LE, -np.inf, lp.b)
    hi = np.where(lp.sense == GE, np.inf, lp.b)
    integrality = np.zeros(lp.n_vars)
    integrality[list(model.binaries)] = 1
    options = {"mip_rel_gap": gap_rel, "node_limit": node_limit, "presolve": True}
    if time_limit is not None:
        options["time_limit"] = time_limit
    args = dict(constraints=LinearConstraint(lp.A, lo, hi), integrality=integrality,
                bounds=Bounds(lp.lb, lp.ub))
    res = milp(-lp.c, options=options, **args)
    if res.status in (2, 4) and res.x is None:
        # presolve has been seen to declare small feasible models infeasible;
        # confirm any infeasible or ambiguous verdict without it
        res = milp(-lp.c, options={**options, "presolve": False}, **args)
    if res.status == 4 and res.x is None:
        # still ambiguous: a feasibility run separates the two cases
        feas = milp(np.zeros(lp.n_vars), options={**options, "presolve": False}, **args)
        nodes = int(getattr(feas, "mip_node_count", 0) or 0)
        status = INFEASIBLE if feas.x is None else UNBOUNDED
        return MilpSolution(status, nodes=nodes, method="highs")
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return MilpSolution(INFEASIBLE, nodes=nodes, method="highs")
    if res.status == 3:
        return MilpSolution(UNBOUNDED, nodes=nodes, method="highs")
    if res.x is None:
        raise NodeLimitError(f"HiGHS stopped without a solution: {res.message}")
    polished = polish(model, res.x, lp_method)
    if polished.status == UNBOUNDED:
        return MilpSolution(UNBOUNDED, nodes=nodes, method="highs")
    if not polished.optimal:
        raise RuntimeError("HiGHS returned a point whose continuous part is infeasible")
    dual_bound = getattr(res, "mip_dual_bound", None)
    bound = -dual_bound + lp.offset if dual_bound is not None else polished.objective
    bound = max(bound, polished.objective)
    sol = MilpSolution(OPTIMAL, polished.x, polished.objective, bound, nodes, "highs",
                       [bound])
    if res.status != 0:
        raise NodeLimitError(f"HiGHS stopped early: {res.message}",
                             MilpSolution(NODE_LIMIT, sol.x, sol.objective, bound,
                                          nodes, "highs", [bound]))
    return sol


def solve_milp(model: MilpModel, gap_abs: float = 0.0, gap_rel: float = 0.0,
               node_limit: int = 200_000, method: str = "bnb",
               lp_method: str = "auto", time_limit: Optional[float] = None,
               on_incumbent: Optional[Callable[[np.ndarray], None]] = None) -> MilpSolution:
    """Maximize a mixed 0-1 program.

    Parameters
    ----------
    model : MilpModel
    gap_abs, gap_rel : float
        Requested optimality gaps; zero means proven optimal up to a
        ``1e-6`` numeric tolerance.
    node_limit : int
        Node budget; exceeding it raises :class:`NodeLimitError`.
    method : {"bnb", "highs"}
    lp_method : str
        Engine for node relaxations and for the final polish.
    time_limit : float, optional
        Seconds, HiGHS only.
    on_incumbent : callable, optional
        Called with every new incumbent of the in-house search; HiGHS
        reports only its final point.

    Returns
    -------
    MilpSolution
        Binaries in ``x`` are exactly 0 or 1; continuous values come from an
        LP re-solve with the binaries fixed.
    """
    if method == "bnb":
        return _branch_and_bound(model, gap_abs, gap_rel, node_limit, lp_method, on_incumbent)
    if method == "highs":
        sol = _highs_milp(model, gap_rel, node_limit, time_limit, lp_method)
        if on_incumbent is not None and sol.x is not None:
            on_incumbent(sol.x)
        return sol
    raise ValueError(f"unknown MILP method {method!r}")


def enumerate_oracle(model: MilpModel, lp_method: str = "auto",
                     max_binaries: int = 24) -> MilpSolution:
    """Solve by trying every 0-1 assignment; ties go to the first found.

    Assignments are visited in lexicographic order of the binaries.
    """
    k = model.n_binaries
    if k > max_binaries:
        raise ValueError(f"{k} binaries exceed the enumeration limit {max_binaries}")
    best = -math.inf
    best_x = None
    count = 0
    for bits in itertools.product((0.0, 1.0), repeat=k):
        count += 1
        sol = solve_lp(_with_fixed(model.lp, dict(zip(model.binaries, bits))),
                       method=lp_method)
        if sol.status == UNBOUNDED:
            return MilpSolution(UNBOUNDED, nodes=count, method="enumerate")
        if sol.optimal and sol.objective > best + tol.DUALITY_GAP_TOL * (1 + abs(best) if best > -math.inf else 1):
            best, best_x = sol.objective, sol.x
    if best_x is None:
        return MilpSolution(INFEASIBLE, nodes=count, method="enumerate")
    return MilpSolution(OPTIMAL, best_x, best, best, count, "enumerate", [best])
