"""Market clearing at a fixed plan, with prices, congestion rent and checks.

For a fixed plan each period is an independent LP::

    max  sum_k pD_k d_k - sum_p pG_p g_p
    s.t. 0 <= d <= dmax,  0 <= g <= gmax                     [phiD, phiG]
         sum_{k at n} d - sum_{p at n} g + sum_m a[m, n] f_m = 0   [pi_n]
         sum_m psi[l, m] f_m = 0                             [gamma_l]
         f_m <= cap_m,  -f_m <= cap_m                         [mu_max, mu_min]

where ``pD = pD_tilde - T_n`` and ``pG = pG_tilde + T_n`` carry the nodal
network charge ``T_n = sum_m u_m tau_m delta[m, n]``.  The periods are
solved one at a time and the results stacked.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .lp import (EQ, LE, LpBuilder, LpModel, LpSolution, check_strong_duality,
                 solve_lp)
from .model import Instance, PlanDecision
from .network import build_incidence, build_loop_basis


class ClearingError(RuntimeError):
    pass


def node_charges(instance: Instance, plan: PlanDecision) -> np.ndarray:
    """Per-node network charge ``T_n = sum_m u_m tau_m delta[m, n]``."""
    net = instance.network
    u_tau = np.array([tau if b else 0.0 for b, tau in zip(plan.build, plan.tariff)])
    return u_tau @ net.allocation_matrix() if net.n_lines else np.zeros(net.n_nodes)


def apply_tariff_shift(instance: Instance, plan: PlanDecision) -> tuple[np.ndarray, np.ndarray]:
    """Effective bid prices once network charges are folded in.

    Returns
    -------
    p_d, p_g : ndarray
        Aligned with ``instance.demand_bids`` and ``instance.supply_bids``.
        Demand bids drop by the nodal charge, supply offers rise by it.
    """
    charge = node_charges(instance, plan)
    p_d = np.array([b.price - charge[b.node] for b in instance.demand_bids])
    p_g = np.array([b.price + charge[b.node] for b in instance.supply_bids])
    return p_d, p_g


@dataclass(frozen=True)
class BidLayout:
    """Index bookkeeping shared by clearing and planning models."""

    demand_node: np.ndarray
    demand_period: np.ndarray
    demand_qmax: np.ndarray
    demand_price: np.ndarray
    supply_node: np.ndarray
    supply_period: np.ndarray
    supply_qmax: np.ndarray
    supply_price: np.ndarray
    demand_ids: tuple[int, ...]
    supply_ids: tuple[int, ...]

    @classmethod
    def of(cls, instance: Instance) -> "BidLayout":
        dem, sup = instance.demand_bids, instance.supply_bids

        def arr(bids, attr, dtype=float):
            return np.array([getattr(b, attr) for b in bids], dtype=dtype)

        return cls(arr(dem, "node", int), arr(dem, "period", int), arr(dem, "qmax"),
                   arr(dem, "price"), arr(sup, "node", int), arr(sup, "period", int),
                   arr(sup, "qmax"), arr(sup, "price"),
                   tuple(b.id for b in dem), tuple(b.id for b in sup))

    def demand_in(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.demand_period == t)

    def supply_in(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.supply_period == t)


@dataclass
class ClearingOutcome:
    """Primal and dual solution of the clearing, all periods stacked.

    Bid-level arrays follow ``instance.demand_bids`` / ``instance.supply_bids``
    order; network arrays are ``(periods, lines|nodes|loops)``.
    """

    d: np.ndarray
    g: np.ndarray
    f: np.ndarray
    pi: np.ndarray
    gamma: np.ndarray
    mu_max: np.ndarray
    mu_min: np.ndarray
    phi_d: np.ndarray
    phi_g: np.ndarray
    p_d: np.ndarray
    p_g: np.ndarray
    capacity: np.ndarray
    period_objective: np.ndarray
    weights: np.ndarray
    duality_gap: float = 0.0
    source: str = "clearing"

    @property
    def objective(self) -> float:
        """Weighted lower-level objective at the shifted prices."""
        return float(self.weights @ self.period_objective)

    def copy(self) -> "ClearingOutcome":
        kw = {k: (v.copy() if isinstance(v, np.ndarray) else v)
              for k, v in self.__dict__.items()}
        return ClearingOutcome(**kw)


def _period_lp(instance: Instance, plan: PlanDecision, t: int, layout: BidLayout,
               p_d: np.ndarray, p_g: np.ndarray, a: np.ndarray, psi: np.ndarray,
               cap: np.ndarray) -> tuple[LpModel, dict]:
    net = instance.network
    b = LpBuilder()
    dk = layout.demand_in(t)
    gk = layout.supply_in(t)
    dv = [b.add_var(("d", t, layout.demand_ids[k]), 0.0, layout.demand_qmax[k], p_d[k]) for k in dk]
    gv = [b.add_var(("g", t, layout.supply_ids[k]), 0.0, layout.supply_qmax[k], -p_g[k]) for k in gk]
    fv = [b.add_var(("f", t, m), -np.inf, np.inf) for m in range(net.n_lines)]
    rows_bal = []
    for n in range(net.n_nodes):
        cols, vals = [], []
        for j, k in zip(dv, dk):
            if layout.demand_node[k] == n:
                cols.append(j)
                vals.append(1.0)
        for j, k in zip(gv, gk):
            if layout.supply_node[k] == n:
                cols.append(j)
                vals.append(-1.0)
        for m in np.flatnonzero(a[:, n]):
            cols.append(fv[m])
            vals.append(a[m, n])
        rows_bal.append(b.add_row(cols, vals, EQ, 0.0, ("balance", t, n)))
    rows_kvl = []
    for ell in range(psi.shape[0]):
        nz = np.flatnonzero(psi[ell])
        rows_kvl.append(b.add_row([fv[m] for m in nz], psi[ell, nz], EQ, 0.0, ("kvl", t, ell)))
    rows_max = [b.add_row([fv[m]], [1.0], LE, cap[m], ("fmax", t, m)) for m in range(net.n_lines)]
    rows_min = [b.add_row([fv[m]], [-1.0], LE, cap[m], ("fmin", t, m)) for m in range(net.n_lines)]
    index = dict(dk=dk, gk=gk, dv=np.array(dv, int), gv=np.array(gv, int), fv=np.array(fv, int),
                 bal=np.array(rows_bal, int), kvl=np.array(rows_kvl, int),
                 fmax=np.array(rows_max, int), fmin=np.array(rows_min, int))
    return b.build(), index


def _setup(instance: Instance, plan: PlanDecision):
    problems = plan.check(instance.network)
    if problems:
        raise ValueError("; ".join(problems))
    layout = BidLayout.of(instance)
    p_d, p_g = apply_tariff_shift(instance, plan)
    a = build_incidence(instance.network)
    psi = build_loop_basis(instance.network)
    cap = plan.capacity(instance.network)
    return layout, p_d, p_g, a, psi, cap


def build_clearing_lp(instance: Instance, plan: PlanDecision) -> LpModel:
    """All periods in one block-diagonal LP, labelled by (symbol, t, index).

    The objective is weighted by the period weights.  :func:`clear_market`
    solves the blocks separately; this joint model exists for inspection
    and LP-file export.
    """
    import scipy.sparse as sp

    layout, p_d, p_g, a, psi, cap = _setup(instance, plan)
    blocks = []
    for per in instance.periods:
        model, _ = _period_lp(instance, plan, per.id, layout, p_d, p_g, a, psi, cap)
        blocks.append((per.weight, model))
    A = sp.block_diag([m.A for _, m in blocks], format="csr")
    return LpModel(
        c=np.concatenate([w * m.c for w, m in blocks]), A=A,
        sense=np.concatenate([m.sense for _, m in blocks]),
        b=np.concatenate([m.b for _, m in blocks]),
        lb=np.concatenate([m.lb for _, m in blocks]),
        ub=np.concatenate([m.ub for _, m in blocks]),
        var_labels=sum((m.var_labels for _, m in blocks), ()),
        row_labels=sum((m.row_labels for _, m in blocks), ()))


def clear_market(instance: Instance, plan: PlanDecision, method: str = "auto") -> ClearingOutcome:
    """Clear every period at the given plan and collect primal and dual values.

    Raises
    ------
    ClearingError
        If a period LP is not optimal or misses strong duality.
    """
    layout, p_d, p_g, a, psi, cap = _setup(instance, plan)
    T = instance.n_periods
    net = instance.network
    nd, ng = len(layout.demand_ids), len(layout.supply_ids)
    out = ClearingOutcome(
        d=np.zeros(nd), g=np.zeros(ng), f=np.zeros((T, net.n_lines)),
        pi=np.zeros((T, net.n_nodes)), gamma=np.zeros((T, psi.shape[0])),
        mu_max=np.zeros((T, net.n_lines)), mu_min=np.zeros((T, net.n_lines)),
        phi_d=np.zeros(nd), phi_g=np.zeros(ng), p_d=p_d, p_g=p_g, capacity=cap,
        period_objective=np.zeros(T), weights=instance.weights)
    worst_gap = 0.0
    for t in range(T):
        model, ix = _period_lp(instance, plan, t, layout, p_d, p_g, a, psi, cap)
        sol = solve_lp(model, method=method)
        if not sol.optimal:
            raise ClearingError(f"period {t} clearing is {sol.status}")
        check = check_strong_duality(model, sol)
        if check.gap > tol.DUALITY_GAP_TOL * (1.0 + abs(check.primal_objective)):
            raise ClearingError(f"period {t}: duality gap {check.gap:.3g}")
        worst_gap = max(worst_gap, check.gap)
        _scatter(out, t, sol, ix)
    out.duality_gap = worst_gap
    return out


def _scatter(out: ClearingOutcome, t: int, sol: LpSolution, ix: dict) -> None:
    x, y, r = sol.x, sol.y, sol.r
    out.d[ix["dk"]] = np.clip(x[ix["dv"]], 0.0, None)
    out.g[ix["gk"]] = np.clip(x[ix["gv"]], 0.0, None)
    out.f[t] = x[ix["fv"]]
    out.pi[t] = y[ix["bal"]]
    out.gamma[t] = y[ix["kvl"]]
    out.mu_max[t] = np.maximum(y[ix["fmax"]], 0.0)
    out.mu_min[t] = np.maximum(y[ix["fmin"]], 0.0)
    # bound duals are the positive part of the reduced cost
    out.phi_d[ix["dk"]] = np.maximum(r[ix["dv"]], 0.0)
    out.phi_g[ix["gk"]] = np.maximum(r[ix["gv"]], 0.0)
    out.period_objective[t] = sol.objective


# --------------------------------------------------------------------------
# money flows


def congestion_rent_direct(outcome: ClearingOutcome, instance: Instance) -> float:
    """Weighted sum over periods and lines of (pi_to - pi_from) * f."""
    a = build_incidence(instance.network)
    per_period = -np.einsum("tn,mn,tm->t", outcome.pi, a, outcome.f)
    return float(outcome.weights @ per_period)


def congestion_rent_recast(outcome: ClearingOutcome, plan: PlanDecision,
                           instance: Instance) -> float:
    """Weighted sum of capacity * (mu_max + mu_min), free of flow terms."""
    cap = plan.capacity(instance.network)
    per_period = (outcome.mu_max + outcome.mu_min) @ cap
    return float(outcome.weights @ per_period)


def nodal_volume(outcome: ClearingOutcome, instance: Instance) -> np.ndarray:
    """Cleared demand plus cleared supply, per (period, node)."""
    layout = BidLayout.of(instance)
    vol = np.zeros((instance.n_periods, instance.network.n_nodes))
    np.add.at(vol, (layout.demand_period, layout.demand_node), outcome.d)
    np.add.at(vol, (layout.supply_period, layout.supply_node), outcome.g)
    return vol


def tariff_payments(outcome: ClearingOutcome, plan: PlanDecision, instance: Instance) -> float:
    """Network charges paid by consumers and producers, weighted over periods."""
    charge = node_charges(instance, plan)
    return float(outcome.weights @ (nodal_volume(outcome, instance) @ charge))


def gross_welfare(outcome: ClearingOutcome, instance: Instance) -> float:
    """Weighted ``sum pD_tilde d - sum pG_tilde g`` at the bid prices before charges."""
    layout = BidLayout.of(instance)
    w = outcome.weights
    return float(np.sum(w[layout.demand_period] * layout.demand_price * outcome.d)
                 - np.sum(w[layout.supply_period] * layout.supply_price * outcome.g))


# --------------------------------------------------------------------------
# verification


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def __str__(self) -> str:
        flag = "ok  " if self.passed else "FAIL"
        return f"{flag} {self.name:<22} residual={self.residual:.3e} tol={self.tolerance:.1e}"


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self) -> str:
        return "\n".join(str(c) for c in self.checks)


def verify_outcome(outcome: ClearingOutcome, plan: PlanDecision, instance: Instance,
                   rel_tol: float = tol.CHECK_TOL) -> VerificationReport:
    """Recompute every optimality identity of an outcome from scratch.

    Checks primal feasibility (balance, loops, bounds), dual feasibility,
    per-period strong duality, complementarity of flow limits and bid
    bounds, and the equality of the two congestion-rent expressions.
    Each residual is compared with ``rel_tol`` times a scale for its units.
    """
    net = instance.network
    layout = BidLayout.of(instance)
    a = build_incidence(net)
    psi = build_loop_basis(net)
    cap = plan.capacity(net)
    p_d, p_g = apply_tariff_shift(instance, plan)
    T = instance.n_periods
    d, g, f = outcome.d, outcome.g, outcome.f
    pi, gam = outcome.pi, outcome.gamma
    mx, mn = outcome.mu_max, outcome.mu_min

    qscale = 1.0 + max(np.max(layout.demand_qmax, initial=0.0),
                       np.max(layout.supply_qmax, initial=0.0), np.max(cap, initial=0.0))
    pscale = 1.0 + max(np.max(np.abs(p_d), initial=0.0), np.max(np.abs(p_g), initial=0.0))

    inj = np.zeros((T, net.n_nodes))
    np.add.at(inj, (layout.demand_period, layout.demand_node), d)
    np.add.at(inj, (layout.supply_period, layout.supply_node), -g)
    balance = inj + f @ a
    kvl = f @ psi.T if psi.shape[0] else np.zeros((T, 0))
    bounds = max(
        np.max(np.maximum(-d, 0.0), initial=0.0), np.max(np.maximum(d - layout.demand_qmax, 0.0), initial=0.0),
        np.max(np.maximum(-g, 0.0), initial=0.0), np.max(np.maximum(g - layout.supply_qmax, 0.0), initial=0.0),
        np.max(np.maximum(np.abs(f) - cap, 0.0), initial=0.0))

    dual_d = p_d - outcome.phi_d - pi[layout.demand_period, layout.demand_node]
    dual_g = -p_g - outcome.phi_g + pi[layout.supply_period, layout.supply_node]
    dual_f = pi @ a.T + (gam @ psi if psi.shape[0] else 0.0) + mx - mn
    sign = max(np.max(np.maximum(-outcome.phi_d, 0.0), initial=0.0),
               np.max(np.maximum(-outcome.phi_g, 0.0), initial=0.0),
               np.max(np.maximum(-mx, 0.0), initial=0.0), np.max(np.maximum(-mn, 0.0), initial=0.0))
    dual_feas = max(np.max(np.maximum(dual_d, 0.0), initial=0.0),
                    np.max(np.maximum(dual_g, 0.0), initial=0.0),
                    np.max(np.abs(dual_f), initial=0.0), sign)

    primal_t = np.zeros(T)
    dual_t = (mx + mn) @ cap
    np.add.at(primal_t, layout.demand_period, p_d * d)
    np.add.at(primal_t, layout.supply_period, -p_g * g)
    np.add.at(dual_t, layout.demand_period, layout.demand_qmax * outcome.phi_d)
    np.add.at(dual_t, layout.supply_period, layout.supply_qmax * outcome.phi_g)
    gap = np.max(np.abs(primal_t - dual_t), initial=0.0)

    comp = max(
        np.max(np.abs(mx * (cap - f)), initial=0.0), np.max(np.abs(mn * (cap + f)), initial=0.0),
        np.max(np.abs(outcome.phi_d * (layout.demand_qmax - d)), initial=0.0),
        np.max(np.abs(outcome.phi_g * (layout.supply_qmax - g)), initial=0.0))

    cr_d = congestion_rent_direct(outcome, instance)
    cr_r = congestion_rent_recast(outcome, plan, instance)
    loop_term = np.abs(np.einsum("tl,tl->t", gam, kvl)).max(initial=0.0) if psi.shape[0] else 0.0

    q_tol = rel_tol * qscale
    rep = VerificationReport([
        CheckResult("nodal balance", float(np.max(np.abs(balance), initial=0.0)), q_tol),
        CheckResult("loop law", float(np.max(np.abs(kvl), initial=0.0)), q_tol * 10),
        CheckResult("primal bounds", float(bounds), q_tol),
        CheckResult("dual feasibility", float(dual_feas), rel_tol * pscale),
        CheckResult("strong duality", float(gap),
                    rel_tol * (1.0 + float(np.max(np.abs(primal_t), initial=0.0)))),
        CheckResult("complementarity", float(comp), rel_tol * pscale * qscale),
        CheckResult("loop rent term", float(loop_term), rel_tol * pscale * qscale),
        CheckResult("rent identity", abs(cr_d - cr_r), rel_tol * (1.0 + abs(cr_d))),
    ])
    return rep


# --------------------------------------------------------------------------
# export


def _g9(v: float) -> str:
    return f"{v:.9g}"


def outcome_rows(outcome: ClearingOutcome, instance: Instance) -> list[tuple]:
    """Flatten an outcome into (t, symbol, index, value) records."""
    layout = BidLayout.of(instance)
    rows: list[tuple] = []
    for k, bid in enumerate(layout.demand_ids):
        t = int(layout.demand_period[k])
        rows.append((t, "d", bid, outcome.d[k]))
        rows.append((t, "phi_d", bid, outcome.phi_d[k]))
        rows.append((t, "p_d", bid, outcome.p_d[k]))
    for k, bid in enumerate(layout.supply_ids):
        t = int(layout.supply_period[k])
        rows.append((t, "g", bid, outcome.g[k]))
        rows.append((t, "phi_g", bid, outcome.phi_g[k]))
        rows.append((t, "p_g", bid, outcome.p_g[k]))
    for t in range(instance.n_periods):
        for sym, arr in (("f", outcome.f), ("pi", outcome.pi), ("gamma", outcome.gamma),
                         ("mu_max", outcome.mu_max), ("mu_min", outcome.mu_min)):
            rows.extend((t, sym, i, v) for i, v in enumerate(arr[t]))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def outcome_to_csv(outcome: ClearingOutcome, instance: Instance) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "symbol", "index", "value"])
    for t, sym, i, v in outcome_rows(outcome, instance):
        w.writerow([t, sym, i, _g9(float(v))])
    return buf.getvalue()
