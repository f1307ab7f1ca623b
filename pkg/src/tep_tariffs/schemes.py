"""Planning schemes: CS, CSR, CSR-L and the ex-ante tariff scheme TS.

All four are compiled into one mixed 0-1 program by :class:`PlanningModel`.

* CS chooses continuous capacities ``F_m`` in ``[0, f_cap * u_m]`` and keeps
  only the primal clearing constraints; welfare maximization makes the
  embedded clearing optimal on its own.
* CSR-L picks one lumpy capacity per built line and adds revenue adequacy.
  Because congestion rent depends on clearing prices, the clearing is
  embedded through primal feasibility, dual feasibility and strong
  duality, and the rent is written as ``sum cap * (mu_max + mu_min)`` so
  that the only nonlinear terms are binary-times-dual products.
* TS adds one tariff level per built line.  Tariffs enter the dual rows
  linearly and the money they raise is ``tau * delta * (d + g)``, again a
  binary-times-continuous product.
* CSR is CSR-L on a fine capacity grid.

Binary-times-continuous products are replaced by exact big-M encodings
(:func:`linearize_product`).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tolerances as tol
from .clearing import (BidLayout, ClearingOutcome, VerificationReport, apply_tariff_shift,
                       clear_market, congestion_rent_direct, gross_welfare,
                       node_charges, tariff_payments, verify_outcome)
from .lp import EQ, GE, LE, LpBuilder, solve_lp, AUTO_DENSE_LIMIT
from .milp import MilpModel, MilpSolution, solve_milp
from .model import Instance, PlanDecision
from .network import build_incidence, build_loop_basis

CS, CSR, CSRL, TS = "CS", "CSR", "CSR-L", "TS"

# big-M relaxations are weak; past this many binaries the in-house tree
# search is far slower than HiGHS
BNB_BINARY_LIMIT = 24
# big-M widening on looped networks: factor per round and number of rounds
MU_ESCALATION_FACTOR = 10.0
MU_ESCALATIONS = 3


class PlanningError(RuntimeError):
    pass


class PostSolveError(PlanningError):
    """The plan chosen by the MILP does not survive an independent re-check."""


class BigMError(PostSolveError):
    pass


# --------------------------------------------------------------------------
# tariff grids


@dataclass(frozen=True)
class TariffGrid:
    """Admissible tariff levels per candidate line, in money per MWh."""

    levels: dict

    def __post_init__(self):
        for m, lv in self.levels.items():
            lv = tuple(float(v) for v in lv)
            if not lv:
                raise ValueError(f"empty tariff grid for line {m}")
            if any(not math.isfinite(v) or v < 0 for v in lv):
                raise ValueError(f"tariff levels for line {m} must be finite and >= 0")
            if any(b <= a for a, b in zip(lv, lv[1:])):
                raise ValueError(f"tariff levels for line {m} must be increasing")

    @classmethod
    def uniform(cls, instance: Instance, step: float, tau_max: float) -> "TariffGrid":
        """Levels ``0, step, 2 step, ..., tau_max`` on every candidate line."""
        if step <= 0 or tau_max < 0:
            raise ValueError("tariff step must be > 0 and tau_max >= 0")
        n = int(math.floor(tau_max / step + 1e-9))
        lv = tuple(round(k * step, 12) for k in range(n + 1))
        return cls({m: lv for m in instance.network.candidate_lines})

    @classmethod
    def zero(cls, instance: Instance) -> "TariffGrid":
        return cls({m: (0.0,) for m in instance.network.candidate_lines})

    @classmethod
    def from_instance(cls, instance: Instance) -> "TariffGrid":
        if not instance.tariff_grids:
            raise ValueError("instance carries no tariff grids")
        return cls({m: tuple(v) for m, v in instance.tariff_grids.items()})

    def __getitem__(self, m: int) -> tuple:
        return tuple(float(v) for v in self.levels[m])

    @property
    def max_level(self) -> float:
        return max((max(v) for v in self.levels.values()), default=0.0)

    @property
    def resolution(self) -> float:
        steps = [b - a for lv in self.levels.values() for a, b in zip(lv, lv[1:])]
        return max(steps, default=0.0)


# --------------------------------------------------------------------------
# linearization


@dataclass(frozen=True)
class AuxEncoding:
    """Auxiliary ``y = b * x`` with its bounding rows."""

    binary: int
    continuous: int
    aux: int
    rows: tuple[int, ...]
    bound: float
    nonnegative: bool

    def residual(self, x: np.ndarray) -> float:
        return abs(x[self.aux] - round(x[self.binary]) * x[self.continuous])


def linearize_product(builder: LpBuilder, b: int, x: int, bound: float, label,
                      nonnegative: bool = True) -> AuxEncoding:
    """Add ``y = b * x`` for binary ``b`` and ``|x| <= bound``.

    Emits ``-M b <= y <= M b`` and ``-M (1 - b) <= x - y <= M (1 - b)``;
    when ``x >= 0`` the two lower bounds become 0.

    Raises
    ------
    ValueError
        If ``bound`` is not positive.
    """
    if not bound > 0:
        raise ValueError(f"big-M bound must be positive, got {bound}")
    M = float(bound)
    lo = 0.0 if nonnegative else -M
    y = builder.add_var(label, lo, M)
    rows = [builder.add_row([y, b], [1.0, -M], LE, 0.0, ("aux_ub",) + tuple(label[1:]))]
    if nonnegative:
        rows.append(builder.add_row([x, y], [1.0, -1.0], GE, 0.0, ("aux_gap_lb",) + tuple(label[1:])))
    else:
        rows.append(builder.add_row([y, b], [-1.0, -M], LE, 0.0, ("aux_lb",) + tuple(label[1:])))
        rows.append(builder.add_row([y, x, b], [1.0, -1.0, M], LE, M, ("aux_gap_lb",) + tuple(label[1:])))
    rows.append(builder.add_row([x, y, b], [1.0, -1.0, M], LE, M, ("aux_gap_ub",) + tuple(label[1:])))
    return AuxEncoding(b, x, y, tuple(rows), M, nonnegative)


# --------------------------------------------------------------------------
# planning model


def candidates_on_loops(instance: Instance) -> bool:
    """True when some candidate line lies on a loop of the network."""
    psi = build_loop_basis(instance.network)
    cand = list(instance.network.candidate_lines)
    return bool(psi.shape[0] and cand and np.any(psi[:, cand]))


def default_mu_bound(instance: Instance, grid: Optional[TariffGrid]) -> float:
    """Big-M for flow-limit duals: largest bid price plus largest nodal charge, plus 1.

    The nodal charge sums the top tariff of every line weighted by its
    allocation factor, which reduces to the top tariff for a single line.
    """
    pmax = max((abs(b.price) for b in instance.bids), default=0.0)
    charge = 0.0
    if grid is not None:
        delta = np.abs(instance.network.allocation_matrix())
        top = np.zeros(instance.network.n_lines)
        for m, lv in grid.levels.items():
            top[m] = max(lv)
        charge = float(np.max(top @ delta, initial=0.0))
    return pmax + charge + 1.0


class PlanningModel:
    """Mixed 0-1 model of one planning scheme, with index bookkeeping.

    Parameters
    ----------
    instance : Instance
    capacity : {"continuous", "lumpy"}
    tariff_grid : TariffGrid, optional
        Adds tariff binaries (TS).
    duals : bool
        Embed lower-level optimality through duals and strong duality.
    revenue : bool
        Add the revenue adequacy row (requires ``duals``).
    f_cap : dict, optional
        Continuous capacity cap per line (CS); defaults to the line's
        largest lumpy value.
    mu_bound : float, optional
        Big-M for flow-limit duals; see :func:`default_mu_bound`.
    strengthen : bool
        Add aggregate rows tying each group of products to its continuous
        factor.  They are implied by integrality and only tighten the
        relaxation.
    """

    def __init__(self, instance: Instance, capacity: str = "lumpy",
                 tariff_grid: Optional[TariffGrid] = None, duals: bool = True,
                 revenue: bool = True, f_cap: Optional[dict] = None,
                 mu_bound: Optional[float] = None, strengthen: bool = True):
        if revenue and not duals:
            raise ValueError("revenue adequacy needs the dual embedding")
        self.instance = instance
        self.capacity_mode = capacity
        self.grid = tariff_grid
        self.duals = duals
        self.revenue = revenue
        self.strengthen = strengthen
        net = instance.network
        self.cand = net.candidate_lines
        if tariff_grid is not None:
            for m in self.cand:
                if m not in tariff_grid.levels:
                    raise ValueError(f"no tariff grid for candidate line {m}")
        self.mu_bound = mu_bound if mu_bound is not None else default_mu_bound(instance, tariff_grid)
        self.layout = BidLayout.of(instance)
        self.a = build_incidence(net)
        self.psi = build_loop_basis(net)
        self.delta = net.allocation_matrix()
        self.f_cap = {m: (f_cap or {}).get(m, max(net.lines[m].lumpy_set)) for m in self.cand}
        self.aux: list[AuxEncoding] = []
        # linearization residual at each incumbent of the last solve
        self.incumbent_residuals: list[float] = []
        self._build()

    # ---- construction -------------------------------------------------

    def _build(self) -> None:
        inst, net, lay = self.instance, self.instance.network, self.layout
        b = LpBuilder()
        T = inst.n_periods
        w = inst.weights
        self.u, self.F, self.bF, self.btau = {}, {}, {}, {}
        for m in self.cand:
            ln = net.lines[m]
            self.u[m] = b.add_var(("u", m), binary=True, obj=-ln.k_fix)
            if self.capacity_mode == "continuous":
                self.F[m] = b.add_var(("F", m), 0.0, self.f_cap[m], obj=-ln.k_var)
                b.add_row([self.F[m], self.u[m]], [1.0, -self.f_cap[m]], LE, 0.0, ("F_link", m))
            else:
                self.bF[m] = [b.add_var(("bF", m, j), binary=True, obj=-ln.k_var * v)
                              for j, v in enumerate(ln.lumpy_set)]
                b.add_row(self.bF[m] + [self.u[m]], [1.0] * len(self.bF[m]) + [-1.0], EQ, 0.0,
                          ("bF_sum", m))
            if self.grid is not None:
                self.btau[m] = [b.add_var(("btau", m, i), binary=True)
                                for i in range(len(self.grid[m]))]
                b.add_row(self.btau[m] + [self.u[m]], [1.0] * len(self.btau[m]) + [-1.0], EQ, 0.0,
                          ("btau_sum", m))

        # nodal charge as a linear expression in tariff binaries
        charge_terms: list[list[tuple[int, float]]] = [[] for _ in range(net.n_nodes)]
        if self.grid is not None:
            for m in self.cand:
                for i, tau in enumerate(self.grid[m]):
                    for n in range(net.n_nodes):
                        c = tau * self.delta[m, n]
                        if c != 0.0:
                            charge_terms[n].append((self.btau[m][i], c))
        self.charge_terms = charge_terms

        nd, ng = len(lay.demand_ids), len(lay.supply_ids)
        self.d = np.zeros(nd, int)
        self.g = np.zeros(ng, int)
        for k in range(nd):
            t = lay.demand_period[k]
            self.d[k] = b.add_var(("d", t, lay.demand_ids[k]), 0.0, lay.demand_qmax[k],
                                  w[t] * lay.demand_price[k])
        for k in range(ng):
            t = lay.supply_period[k]
            self.g[k] = b.add_var(("g", t, lay.supply_ids[k]), 0.0, lay.supply_qmax[k],
                                  -w[t] * lay.supply_price[k])
        M, N, L = net.n_lines, net.n_nodes, self.psi.shape[0]
        self.f = np.array([[b.add_var(("f", t, m), -np.inf, np.inf) for m in range(M)]
                           for t in range(T)], dtype=int).reshape(T, M)

        # primal rows
        for t in range(T):
            dk, gk = lay.demand_in(t), lay.supply_in(t)
            for n in range(N):
                cols = [self.d[k] for k in dk if lay.demand_node[k] == n]
                vals = [1.0] * len(cols)
                gc = [self.g[k] for k in gk if lay.supply_node[k] == n]
                cols += gc
                vals += [-1.0] * len(gc)
                for m in np.flatnonzero(self.a[:, n]):
                    cols.append(self.f[t, m])
                    vals.append(self.a[m, n])
                b.add_row(cols, vals, EQ, 0.0, ("balance", t, n))
            for ell in range(L):
                nz = np.flatnonzero(self.psi[ell])
                b.add_row(self.f[t, nz], self.psi[ell, nz], EQ, 0.0, ("kvl", t, ell))
            for m in range(M):
                ccols, cvals = self._cap_terms(m)
                f0 = net.lines[m].f0
                b.add_row([self.f[t, m]] + ccols, [1.0] + [-v for v in cvals], LE, f0, ("fmax", t, m))
                b.add_row([self.f[t, m]] + ccols, [-1.0] + [-v for v in cvals], LE, f0, ("fmin", t, m))

        if self.duals:
            self._build_duals(b)
        self.builder = b
        lp = b.build()
        self.model = MilpModel(lp, b.binaries)

    def _cap_terms(self, m: int) -> tuple[list[int], list[float]]:
        if m not in self.u:
            return [], []
        if self.capacity_mode == "continuous":
            return [self.F[m]], [1.0]
        ln = self.instance.network.lines[m]
        return list(self.bF[m]), list(ln.lumpy_set)

    def _build_duals(self, b: LpBuilder) -> None:
        inst, net, lay = self.instance, self.instance.network, self.layout
        T, M, N, L = inst.n_periods, net.n_lines, net.n_nodes, self.psi.shape[0]
        w = inst.weights
        self.pi = np.array([[b.add_var(("pi", t, n), -np.inf, np.inf) for n in range(N)]
                            for t in range(T)], dtype=int).reshape(T, N)
        self.gamma = np.array([[b.add_var(("gamma", t, l), -np.inf, np.inf) for l in range(L)]
                               for t in range(T)], dtype=int).reshape(T, L)
        self.mu_max = np.array([[b.add_var(("mu_max", t, m)) for m in range(M)]
                                for t in range(T)], dtype=int).reshape(T, M)
        self.mu_min = np.array([[b.add_var(("mu_min", t, m)) for m in range(M)]
                                for t in range(T)], dtype=int).reshape(T, M)
        self.phi_d = np.array([b.add_var(("phi_d", lay.demand_period[k], lay.demand_ids[k]))
                               for k in range(len(lay.demand_ids))], dtype=int)
        self.phi_g = np.array([b.add_var(("phi_g", lay.supply_period[k], lay.supply_ids[k]))
                               for k in range(len(lay.supply_ids))], dtype=int)

        # dual feasibility with tariff-shifted prices
        for k in range(len(lay.demand_ids)):
            t, n = lay.demand_period[k], lay.demand_node[k]
            cols = [self.phi_d[k], self.pi[t, n]] + [j for j, _ in self.charge_terms[n]]
            vals = [1.0, 1.0] + [c for _, c in self.charge_terms[n]]
            b.add_row(cols, vals, GE, lay.demand_price[k], ("dual_d", t, lay.demand_ids[k]))
        for k in range(len(lay.supply_ids)):
            t, n = lay.supply_period[k], lay.supply_node[k]
            cols = [self.phi_g[k], self.pi[t, n]] + [j for j, _ in self.charge_terms[n]]
            vals = [1.0, -1.0] + [c for _, c in self.charge_terms[n]]
            b.add_row(cols, vals, GE, -lay.supply_price[k], ("dual_g", t, lay.supply_ids[k]))
        for t in range(T):
            for m in range(M):
                cols, vals = [], []
                for n in np.flatnonzero(self.a[m]):
                    cols.append(self.pi[t, n])
                    vals.append(self.a[m, n])
                for ell in np.flatnonzero(self.psi[:, m]):
                    cols.append(self.gamma[t, ell])
                    vals.append(self.psi[ell, m])
                cols += [self.mu_max[t, m], self.mu_min[t, m]]
                vals += [1.0, -1.0]
                b.add_row(cols, vals, EQ, 0.0, ("dual_f", t, m))

        # products: lumpy choice x flow-limit duals
        sd_cols: list[int] = []
        sd_vals: list[float] = []
        rev_cols: list[int] = []
        rev_vals: list[float] = []
        Mmu = self.mu_bound
        groups: dict = {}
        for t in range(T):
            for m in range(M):
                f0 = net.lines[m].f0
                for mu in (self.mu_max[t, m], self.mu_min[t, m]):
                    if f0:
                        sd_cols.append(mu)
                        sd_vals.append(-f0)
                        rev_cols.append(mu)
                        rev_vals.append(w[t] * f0)
                if m in self.bF:
                    for j, cap in enumerate(net.lines[m].lumpy_set):
                        for name, mu in (("y_bF_mu_max", self.mu_max[t, m]),
                                         ("y_bF_mu_min", self.mu_min[t, m])):
                            enc = linearize_product(b, self.bF[m][j], mu, Mmu, (name, t, m, j))
                            self.aux.append(enc)
                            groups.setdefault((name, t, m), (mu, Mmu, [self.u[m]], []))[3].append(enc.aux)
                            sd_cols.append(enc.aux)
                            sd_vals.append(-cap)
                            rev_cols.append(enc.aux)
                            rev_vals.append(w[t] * cap)

        # products: tariff choice x nodal volume.  Charges are per MWh at a
        # node, so one product per (line, level, node, period) suffices.
        if self.btau:
            vol = np.full((T, N), -1, dtype=int)
            vcap = np.zeros((T, N))
            for t in range(T):
                for n in range(N):
                    dk = [k for k in lay.demand_in(t) if lay.demand_node[k] == n]
                    gk = [k for k in lay.supply_in(t) if lay.supply_node[k] == n]
                    vmax = float(lay.demand_qmax[dk].sum() + lay.supply_qmax[gk].sum())
                    if vmax <= 0.0:
                        continue
                    vol[t, n] = b.add_var(("volume", t, n), 0.0, vmax)
                    vcap[t, n] = vmax
                    b.add_row([vol[t, n]] + [self.d[k] for k in dk] + [self.g[k] for k in gk],
                              [1.0] + [-1.0] * (len(dk) + len(gk)), EQ, 0.0, ("volume", t, n))
            self.volume = vol
        for m in self.btau:
            for i, tau in enumerate(self.grid[m]):
                if tau == 0.0:
                    continue
                for t in range(T):
                    for n in range(N):
                        c = tau * self.delta[m, n]
                        if c == 0.0 or vol[t, n] < 0:
                            continue
                        vmax = vcap[t, n]
                        enc = linearize_product(b, self.btau[m][i], vol[t, n], vmax,
                                                ("y_btau_volume", t, m, i, n))
                        self.aux.append(enc)
                        # zero levels carry no product, so only nonzero levels switch the group on
                        on = [self.btau[m][h] for h, lv in enumerate(self.grid[m]) if lv != 0.0]
                        groups.setdefault(("y_btau_volume", t, m, n),
                                          (vol[t, n], vmax, on, []))[3].append(enc.aux)
                        # shifted-price objective loses c * y; charges raise w_t * c * y
                        sd_cols.append(enc.aux)
                        sd_vals.append(-c)
                        rev_cols.append(enc.aux)
                        rev_vals.append(w[t] * c)

        if self.strengthen:
            # at most one binary of a group is on: its products sum to x when
            # one is on and to 0 otherwise
            for key, (xv, bound, on, ys) in groups.items():
                if len(ys) < 2 and key[0].startswith("y_bF"):
                    continue
                b.add_row(ys + [xv], [1.0] * len(ys) + [-1.0], LE, 0.0, ("agg_ub",) + key)
                b.add_row([xv] + ys + on, [1.0] + [-1.0] * len(ys) + [bound] * len(on), LE, bound,
                          ("agg_lb",) + key)

        # strong duality, summed over periods
        for k in range(len(lay.demand_ids)):
            sd_cols += [self.d[k], self.phi_d[k]]
            sd_vals += [lay.demand_price[k], -lay.demand_qmax[k]]
        for k in range(len(lay.supply_ids)):
            sd_cols += [self.g[k], self.phi_g[k]]
            sd_vals += [-lay.supply_price[k], -lay.supply_qmax[k]]
        b.add_row(sd_cols, sd_vals, EQ, 0.0, ("strong_duality",))

        if self.revenue:
            for m in self.cand:
                ln = net.lines[m]
                rev_cols.append(self.u[m])
                rev_vals.append(-ln.k_fix)
                for j, cap in enumerate(ln.lumpy_set):
                    rev_cols.append(self.bF[m][j])
                    rev_vals.append(-ln.k_var * cap)
            self.revenue_row = b.add_row(rev_cols, rev_vals, GE, 0.0, ("revenue_adequacy",))

    # ---- reading solutions -------------------------------------------

    def plan_from(self, x: np.ndarray) -> PlanDecision:
        net = self.instance.network
        build, added, tariff, lidx, tidx = [], [], [], [], []
        for m in range(net.n_lines):
            if m in self.u and round(x[self.u[m]]) == 1:
                build.append(True)
                if self.capacity_mode == "continuous":
                    added.append(float(np.round(max(x[self.F[m]], 0.0), 9)))
                    lidx.append(None)
                else:
                    j = int(np.argmax(x[self.bF[m]]))
                    added.append(float(net.lines[m].lumpy_set[j]))
                    lidx.append(j)
                if m in self.btau:
                    i = int(np.argmax(x[self.btau[m]]))
                    tariff.append(self.grid[m][i])
                    tidx.append(i)
                else:
                    tariff.append(0.0)
                    tidx.append(0 if self.grid is not None else None)
            else:
                build.append(False)
                added.append(0.0)
                tariff.append(0.0)
                lidx.append(None)
                tidx.append(None)
        return PlanDecision(tuple(build), tuple(added), tuple(tariff), tuple(lidx), tuple(tidx))

    def outcome_from(self, x: np.ndarray, plan: PlanDecision) -> ClearingOutcome:
        """Primal and dual values of the embedded clearing."""
        if not self.duals:
            raise ValueError("model carries no duals")
        inst = self.instance
        p_d, p_g = apply_tariff_shift(inst, plan)
        lay = self.layout
        d, g = x[self.d], x[self.g]
        obj = np.zeros(inst.n_periods)
        np.add.at(obj, lay.demand_period, p_d * d)
        np.add.at(obj, lay.supply_period, -p_g * g)
        return ClearingOutcome(
            d=d.copy(), g=g.copy(), f=x[self.f], pi=x[self.pi], gamma=x[self.gamma],
            mu_max=x[self.mu_max], mu_min=x[self.mu_min], phi_d=x[self.phi_d],
            phi_g=x[self.phi_g], p_d=p_d, p_g=p_g, capacity=plan.capacity(inst.network),
            period_objective=obj, weights=inst.weights, source="milp")

    def aux_residual(self, x: np.ndarray) -> float:
        return max((e.residual(x) for e in self.aux), default=0.0)

    def max_mu(self, x: np.ndarray) -> float:
        """Largest flow-limit dual on a candidate line, the only ones under big-M."""
        if not self.duals or not self.bF:
            return 0.0
        cols = sorted(self.bF)
        return float(max(np.max(x[self.mu_max[:, cols]], initial=0.0),
                         np.max(x[self.mu_min[:, cols]], initial=0.0)))


# --------------------------------------------------------------------------
# fixed-plan evaluation (independent of big-M and product encodings)


@dataclass
class PlanEvaluation:
    feasible: bool
    gross_welfare: float = -math.inf
    outcome: Optional[ClearingOutcome] = None


def investment_cost(instance: Instance, plan: PlanDecision) -> float:
    net = instance.network
    return float(sum(ln.k_fix + ln.k_var * add
                     for ln, built, add in zip(net.lines, plan.build, plan.added) if built))


def evaluate_plan(instance: Instance, plan: PlanDecision, revenue: bool = True,
                  method: str = "highs") -> PlanEvaluation:
    """Best welfare over all clearing optima at a fixed plan.

    Solves one LP over primal and dual clearing variables with strong
    duality per period, so every feasible point is an optimal primal-dual
    pair of the clearing; the objective picks the pair with the highest
    welfare at pre-charge bid prices.  With ``revenue`` the pair must also
    pay for the plan out of congestion rent and charges.
    """
    net = instance.network
    lay = BidLayout.of(instance)
    a = build_incidence(net)
    psi = build_loop_basis(net)
    cap = plan.capacity(net)
    p_d, p_g = apply_tariff_shift(instance, plan)
    charge = node_charges(instance, plan)
    T, M, N, L = instance.n_periods, net.n_lines, net.n_nodes, psi.shape[0]
    w = instance.weights
    b = LpBuilder()
    d = np.array([b.add_var(("d", k), 0.0, lay.demand_qmax[k], w[lay.demand_period[k]] * lay.demand_price[k])
                  for k in range(len(lay.demand_ids))], dtype=int)
    g = np.array([b.add_var(("g", k), 0.0, lay.supply_qmax[k], -w[lay.supply_period[k]] * lay.supply_price[k])
                  for k in range(len(lay.supply_ids))], dtype=int)
    f = np.array([[b.add_var(("f", t, m), -np.inf, np.inf) for m in range(M)] for t in range(T)], int).reshape(T, M)
    pi = np.array([[b.add_var(("pi", t, n), -np.inf, np.inf) for n in range(N)] for t in range(T)], int).reshape(T, N)
    gam = np.array([[b.add_var(("gamma", t, l), -np.inf, np.inf) for l in range(L)] for t in range(T)], int).reshape(T, L)
    mx = np.array([[b.add_var(("mu_max", t, m)) for m in range(M)] for t in range(T)], int).reshape(T, M)
    mn = np.array([[b.add_var(("mu_min", t, m)) for m in range(M)] for t in range(T)], int).reshape(T, M)
    phd = np.array([b.add_var(("phi_d", k)) for k in range(len(lay.demand_ids))], dtype=int)
    phg = np.array([b.add_var(("phi_g", k)) for k in range(len(lay.supply_ids))], dtype=int)
    rev_cols, rev_vals = [], []
    for t in range(T):
        dk, gk = lay.demand_in(t), lay.supply_in(t)
        for n in range(N):
            cols = [d[k] for k in dk if lay.demand_node[k] == n] + [g[k] for k in gk if lay.supply_node[k] == n]
            vals = [1.0] * sum(lay.demand_node[dk] == n) + [-1.0] * sum(lay.supply_node[gk] == n)
            for m in np.flatnonzero(a[:, n]):
                cols.append(f[t, m])
                vals.append(a[m, n])
            b.add_row(cols, vals, EQ, 0.0)
        for ell in range(L):
            nz = np.flatnonzero(psi[ell])
            b.add_row(f[t, nz], psi[ell, nz], EQ, 0.0)
        for m in range(M):
            b.add_row([f[t, m]], [1.0], LE, cap[m])
            b.add_row([f[t, m]], [-1.0], LE, cap[m])
            cols = [pi[t, n] for n in np.flatnonzero(a[m])] + [gam[t, l] for l in np.flatnonzero(psi[:, m])]
            vals = [a[m, n] for n in np.flatnonzero(a[m])] + [psi[l, m] for l in np.flatnonzero(psi[:, m])]
            b.add_row(cols + [mx[t, m], mn[t, m]], vals + [1.0, -1.0], EQ, 0.0)
        sd_cols = [d[k] for k in dk] + [g[k] for k in gk] + [phd[k] for k in dk] + [phg[k] for k in gk]
        sd_vals = list(p_d[dk]) + list(-p_g[gk]) + list(-lay.demand_qmax[dk]) + list(-lay.supply_qmax[gk])
        for m in range(M):
            if cap[m]:
                sd_cols += [mx[t, m], mn[t, m]]
                sd_vals += [-cap[m], -cap[m]]
                rev_cols += [mx[t, m], mn[t, m]]
                rev_vals += [w[t] * cap[m], w[t] * cap[m]]
        b.add_row(sd_cols, sd_vals, EQ, 0.0)
    for k in range(len(lay.demand_ids)):
        t, n = lay.demand_period[k], lay.demand_node[k]
        b.add_row([phd[k], pi[t, n]], [1.0, 1.0], GE, p_d[k])
        if charge[n]:
            rev_cols.append(d[k])
            rev_vals.append(w[t] * charge[n])
    for k in range(len(lay.supply_ids)):
        t, n = lay.supply_period[k], lay.supply_node[k]
        b.add_row([phg[k], pi[t, n]], [1.0, -1.0], GE, -p_g[k])
        if charge[n]:
            rev_cols.append(g[k])
            rev_vals.append(w[t] * charge[n])
    if revenue:
        b.add_row(rev_cols, rev_vals, GE, investment_cost(instance, plan))
    sol = solve_lp(b.build(), method=method)
    if not sol.optimal:
        return PlanEvaluation(False)
    x = sol.x
    obj = np.zeros(T)
    np.add.at(obj, lay.demand_period, p_d * x[d])
    np.add.at(obj, lay.supply_period, -p_g * x[g])
    out = ClearingOutcome(
        d=x[d], g=x[g], f=x[f], pi=x[pi], gamma=x[gam], mu_max=np.maximum(x[mx], 0.0),
        mu_min=np.maximum(x[mn], 0.0), phi_d=np.maximum(x[phd], 0.0), phi_g=np.maximum(x[phg], 0.0),
        p_d=p_d, p_g=p_g, capacity=cap, period_objective=obj, weights=w, source="evaluation")
    return PlanEvaluation(True, float(sol.objective), out)


def line_options(instance: Instance, grid: Optional[TariffGrid]) -> dict[int, list]:
    """Per candidate line: None (not built) then every (lumpy, tariff) index pair."""
    out = {}
    for m in instance.network.candidate_lines:
        J = len(instance.network.lines[m].lumpy_set)
        I = len(grid[m]) if grid is not None else 1
        out[m] = [None] + [(j, i) for j in range(J) for i in range(I)]
    return out


def plan_from_choice(instance: Instance, grid: Optional[TariffGrid], choice: dict) -> PlanDecision:
    net = instance.network
    build, added, tariff, lidx, tidx = [], [], [], [], []
    for ln in net.lines:
        opt = choice.get(ln.id)
        if opt is None:
            build.append(False)
            added.append(0.0)
            tariff.append(0.0)
            lidx.append(None)
            tidx.append(None)
        else:
            j, i = opt
            build.append(True)
            added.append(float(ln.lumpy_set[j]))
            tariff.append(grid[ln.id][i] if grid is not None else 0.0)
            lidx.append(j)
            tidx.append(i if grid is not None else None)
    return PlanDecision(tuple(build), tuple(added), tuple(tariff), tuple(lidx), tuple(tidx))


@dataclass
class OracleResult:
    welfare: float
    plan: Optional[PlanDecision]
    evaluated: int


def planning_oracle(instance: Instance, grid: Optional[TariffGrid] = None,
                    revenue: bool = True, method: str = "highs",
                    max_plans: int = 100_000) -> OracleResult:
    """Exhaustive search over plans, each scored by :func:`evaluate_plan`.

    Plans are visited in lexicographic order of (built?, lumpy index,
    tariff index) per line, and only a strictly better welfare replaces
    the incumbent, so ties resolve to the smallest indices.
    """
    opts = line_options(instance, grid)
    lines = sorted(opts)
    total = math.prod(len(opts[m]) for m in lines)
    if total > max_plans:
        raise ValueError(f"{total} plans exceed the oracle limit {max_plans}")
    best, best_plan, count = -math.inf, None, 0
    for combo in itertools.product(*(opts[m] for m in lines)):
        plan = plan_from_choice(instance, grid, dict(zip(lines, combo)))
        count += 1
        ev = evaluate_plan(instance, plan, revenue=revenue, method=method)
        if not ev.feasible:
            continue
        val = ev.gross_welfare - investment_cost(instance, plan)
        if val > best + tol.DUALITY_GAP_TOL * (1.0 + abs(best) if best > -math.inf else 1.0):
            best, best_plan = val, plan
    return OracleResult(best, best_plan, count)


# --------------------------------------------------------------------------
# results


@dataclass
class PlanResult:
    scheme: str
    plan: PlanDecision
    outcome: ClearingOutcome
    welfare: float
    gross_welfare: float
    investment_cost: float
    congestion_rent: float
    tariff_payments: float
    revenue_imbalance: float
    objective: float = math.nan
    best_bound: float = math.nan
    nodes: int = 0
    runtime: float = 0.0
    method: str = ""
    n_binaries: int = 0
    aux_residual: float = 0.0
    mu_bound: float = math.nan
    incumbent_aux_residuals: tuple[float, ...] = ()
    reclear_primal_match: bool = True
    mu_escalations: int = 0
    verification: Optional[VerificationReport] = None

    @property
    def expansion(self) -> tuple[float, ...]:
        return self.plan.added

    @property
    def built_lines(self) -> tuple[int, ...]:
        return tuple(m for m, b in enumerate(self.plan.build) if b)

    def to_dict(self, instance: Optional[Instance] = None) -> dict:
        o = self.outcome

        def r9(v):
            if isinstance(v, np.ndarray):
                return [r9(x) for x in v.tolist()]
            if isinstance(v, list):
                return [r9(x) for x in v]
            if isinstance(v, float):
                return float(f"{v:.9g}")
            return v

        return {
            "scheme": self.scheme,
            "plan": {"build": list(self.plan.build), "added": r9(list(self.plan.added)),
                     "tariff": r9(list(self.plan.tariff)),
                     "lumpy_index": list(self.plan.lumpy_index),
                     "tariff_index": list(self.plan.tariff_index)},
            "welfare": r9(self.welfare), "gross_welfare": r9(self.gross_welfare),
            "investment_cost": r9(self.investment_cost),
            "congestion_rent": r9(self.congestion_rent),
            "tariff_payments": r9(self.tariff_payments),
            "revenue_imbalance": r9(self.revenue_imbalance),
            "solver": {"objective": r9(self.objective), "best_bound": r9(self.best_bound),
                       "nodes": self.nodes, "method": self.method,
                       "n_binaries": self.n_binaries, "aux_residual": r9(self.aux_residual),
                       "mu_bound": r9(self.mu_bound),
                       "mu_escalations": self.mu_escalations},
            "outcome": {k: r9(getattr(o, k)) for k in
                        ("d", "g", "f", "pi", "gamma", "mu_max", "mu_min", "phi_d", "phi_g")},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=True) + "\n"

    def table_row(self) -> list:
        """Expansion, welfare, cost, rent, tariff, payments, imbalance."""
        built = self.built_lines
        exp = ";".join(f"{self.plan.added[m]:.9g}" for m in built) or "0"
        tar = ";".join(f"{self.plan.tariff[m]:.9g}" for m in built) or "0"
        return [self.scheme, exp, self.welfare, self.investment_cost, self.congestion_rent,
                tar, self.tariff_payments, self.revenue_imbalance]


TABLE_COLUMNS = ["Scheme", "Expansion", "Social Welfare", "Investment Cost",
                 "Congestion Rent", "Tariff", "Tariff Payments", "Revenue Imbalance"]


def results_to_csv(results: Sequence[PlanResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in results:
        w.writerow([v if isinstance(v, str) else f"{v:.9g}" for v in r.table_row()])
    return buf.getvalue()


def outcome_from_dict(doc: dict, instance: Instance, plan: PlanDecision) -> ClearingOutcome:
    """Rebuild a stored outcome; prices and objectives are recomputed."""
    p_d, p_g = apply_tariff_shift(instance, plan)
    lay = BidLayout.of(instance)
    arr = {k: np.asarray(doc[k], dtype=float) for k in
           ("d", "g", "f", "pi", "gamma", "mu_max", "mu_min", "phi_d", "phi_g")}
    T = instance.n_periods
    for k in ("f", "pi", "gamma", "mu_max", "mu_min"):
        arr[k] = arr[k].reshape(T, -1)
    obj = np.zeros(T)
    np.add.at(obj, lay.demand_period, p_d * arr["d"])
    np.add.at(obj, lay.supply_period, -p_g * arr["g"])
    return ClearingOutcome(p_d=p_d, p_g=p_g, capacity=plan.capacity(instance.network),
                           period_objective=obj, weights=instance.weights, source="file", **arr)


def plan_from_dict(doc: dict) -> PlanDecision:
    return PlanDecision(tuple(bool(v) for v in doc["build"]), tuple(float(v) for v in doc["added"]),
                        tuple(float(v) for v in doc["tariff"]), tuple(doc.get("lumpy_index", ())),
                        tuple(doc.get("tariff_index", ())))


# --------------------------------------------------------------------------
# solving


def choose_milp_method(model: MilpModel) -> str:
    lp = model.lp
    dense = lp.n_rows * (lp.n_vars + lp.n_rows)
    return "bnb" if dense <= AUTO_DENSE_LIMIT and model.n_binaries <= BNB_BINARY_LIMIT else "highs"


def _solve(pm: PlanningModel, milp_method: str, gap_abs: float, gap_rel: float,
           node_limit: int, time_limit: Optional[float]) -> MilpSolution:
    method = choose_milp_method(pm.model) if milp_method == "auto" else milp_method
    pm.incumbent_residuals = []
    sol = solve_milp(pm.model, gap_abs=gap_abs, gap_rel=gap_rel, node_limit=node_limit,
                     method=method, time_limit=time_limit,
                     on_incumbent=lambda x: pm.incumbent_residuals.append(pm.aux_residual(x)))
    if not sol.optimal:
        raise PlanningError(f"planning MILP is {sol.status}")
    return sol


def _assemble(scheme: str, instance: Instance, plan: PlanDecision, outcome: ClearingOutcome,
              sol: Optional[MilpSolution], pm: Optional[PlanningModel], runtime: float,
              primal_match: bool = True) -> PlanResult:
    tc = investment_cost(instance, plan)
    cr = congestion_rent_direct(outcome, instance)
    pay = tariff_payments(outcome, plan, instance)
    gw = gross_welfare(outcome, instance)
    report = verify_outcome(outcome, plan, instance)
    if not report.passed:
        raise PostSolveError(f"{scheme} outcome fails verification:\n{report}")
    return PlanResult(
        scheme, plan, outcome, welfare=gw - tc, gross_welfare=gw, investment_cost=tc,
        congestion_rent=cr, tariff_payments=pay, revenue_imbalance=cr + pay - tc,
        objective=sol.objective if sol else math.nan,
        best_bound=sol.best_bound if sol else math.nan, nodes=sol.nodes if sol else 0,
        runtime=runtime, method=sol.method if sol else "",
        n_binaries=pm.model.n_binaries if pm else 0,
        aux_residual=pm.aux_residual(sol.x) if (pm and sol) else 0.0,
        mu_bound=pm.mu_bound if pm and pm.duals else math.nan,
        incumbent_aux_residuals=tuple(pm.incumbent_residuals) if pm else (),
        reclear_primal_match=primal_match, verification=report)


def solve_cs(instance: Instance, f_cap: Optional[dict] = None, milp_method: str = "auto",
             gap_abs: float = 0.0, gap_rel: float = 0.0, node_limit: int = 200_000,
             time_limit: Optional[float] = None) -> PlanResult:
    """Welfare-optimal continuous expansion with no revenue requirement.

    ``f_cap`` maps line id to its largest admissible addition; by default
    the largest value of the line's lumpy set.
    """
    t0 = time.perf_counter()
    pm = PlanningModel(instance, capacity="continuous", duals=False, revenue=False, f_cap=f_cap)
    sol = _solve(pm, milp_method, gap_abs, gap_rel, node_limit, time_limit)
    plan = pm.plan_from(sol.x)
    outcome = clear_market(instance, plan)
    res = _assemble(CS, instance, plan, outcome, sol, pm, time.perf_counter() - t0)
    if abs(res.welfare - sol.objective) > tol.RECLEAR_TOL * (1.0 + abs(sol.objective)):
        raise PostSolveError(f"CS re-clearing welfare {res.welfare} != MILP {sol.objective}")
    return res


def _solve_lumpy(scheme: str, instance: Instance, grid: Optional[TariffGrid],
                 milp_method: str, gap_abs: float, gap_rel: float, node_limit: int,
                 time_limit: Optional[float], mu_bound: Optional[float],
                 refine_ties: bool) -> PlanResult:
    t0 = time.perf_counter()
    missing = [m for m in instance.network.candidate_lines
               if not instance.network.lines[m].lumpy_set]
    if missing:
        raise ValueError(f"candidate lines without lumpy sets: {missing}")
    escalate = mu_bound is None and candidates_on_loops(instance)
    bound = mu_bound if mu_bound is not None else default_mu_bound(instance, grid)
    pm = sol = None
    residuals: list[float] = []
    escalations = 0
    # on looped networks the default bound can cut off plans whose unbuilt
    # candidates carry large loop-induced duals; widen it until the optimum
    # stops moving
    while True:
        trial_pm = PlanningModel(instance, capacity="lumpy", tariff_grid=grid, duals=True,
                                 revenue=True, mu_bound=bound)
        try:
            trial = _solve(trial_pm, milp_method, gap_abs, gap_rel, node_limit, time_limit)
        except PlanningError:
            if not escalate or escalations >= MU_ESCALATIONS:
                raise
            trial = None
        residuals += trial_pm.incumbent_residuals
        if trial is not None:
            if sol is not None and trial.objective <= \
                    sol.objective + tol.RECLEAR_TOL * (1.0 + abs(sol.objective)):
                break
            pm, sol = trial_pm, trial
        if not escalate or escalations >= MU_ESCALATIONS:
            break
        escalations += 1
        bound *= MU_ESCALATION_FACTOR
    if sol is None:
        raise PlanningError("planning MILP is infeasible at every big-M bound tried")
    x = sol.x
    plan = pm.plan_from(x)

    if pm.max_mu(x) > pm.mu_bound * (1.0 + 1e-9):
        raise BigMError(f"flow-limit dual {pm.max_mu(x):.6g} exceeds big-M {pm.mu_bound:.6g}")
    milp_outcome = pm.outcome_from(x, plan)

    # independent re-clearing: the lower-level optimum must agree
    recleared = clear_market(instance, plan)
    scale = 1.0 + abs(recleared.objective)
    if abs(recleared.objective - milp_outcome.objective) > tol.RECLEAR_TOL * scale:
        raise PostSolveError(
            f"lower level disagrees: MILP {milp_outcome.objective:.9g} vs "
            f"re-cleared {recleared.objective:.9g}")
    primal_match = all(
        np.allclose(getattr(recleared, k), getattr(milp_outcome, k),
                    atol=tol.RECLEAR_TOL * (1.0 + np.max(np.abs(getattr(recleared, k)), initial=0.0)))
        for k in ("d", "g", "f"))

    # best clearing pair at this plan, found without big-M or product terms
    ev = evaluate_plan(instance, plan, revenue=True)
    if not ev.feasible:
        raise PostSolveError("chosen plan fails revenue adequacy on re-evaluation")
    tc = investment_cost(instance, plan)
    if ev.gross_welfare - tc > sol.objective + tol.RECLEAR_TOL * (1.0 + abs(sol.objective)):
        raise BigMError(
            f"plan evaluates to {ev.gross_welfare - tc:.9g} above the MILP value "
            f"{sol.objective:.9g}; the big-M bound {pm.mu_bound:.6g} is too tight")
    if ev.gross_welfare - tc < sol.objective - tol.RECLEAR_TOL * (1.0 + abs(sol.objective)):
        raise PostSolveError(
            f"MILP value {sol.objective:.9g} not attainable at its plan "
            f"({ev.gross_welfare - tc:.9g})")
    outcome = ev.outcome

    if refine_ties and grid is not None:
        plan, outcome = _lowest_tariff(instance, grid, plan, outcome, ev.gross_welfare - tc)
    res = _assemble(scheme, instance, plan, outcome, sol, pm, time.perf_counter() - t0,
                    primal_match)
    res.mu_escalations = escalations
    res.incumbent_aux_residuals = tuple(residuals)
    return res


def _lowest_tariff(instance: Instance, grid: TariffGrid, plan: PlanDecision,
                   outcome: ClearingOutcome, value: float):
    """Among plans with the same capacities and equal welfare, take the lowest tariff indices."""
    tidx = list(plan.tariff_index)
    tariff = list(plan.tariff)
    for m, built in enumerate(plan.build):
        if not built or not tidx[m]:
            continue
        for i in range(tidx[m]):
            trial_t = tariff.copy()
            trial_t[m] = grid[m][i]
            trial_i = tidx.copy()
            trial_i[m] = i
            trial = PlanDecision(plan.build, plan.added, tuple(trial_t), plan.lumpy_index, tuple(trial_i))
            ev = evaluate_plan(instance, trial, revenue=True)
            if ev.feasible and ev.gross_welfare - investment_cost(instance, trial) >= \
                    value - tol.DUALITY_GAP_TOL * (1.0 + abs(value)):
                tariff, tidx, outcome = trial_t, trial_i, ev.outcome
                break
    return PlanDecision(plan.build, plan.added, tuple(tariff), plan.lumpy_index, tuple(tidx)), outcome


def solve_csrl(instance: Instance, milp_method: str = "auto", gap_abs: float = 0.0,
               gap_rel: float = 0.0, node_limit: int = 200_000,
               time_limit: Optional[float] = None, mu_bound: Optional[float] = None) -> PlanResult:
    """Revenue-adequate planning over each line's lumpy capacity set."""
    return _solve_lumpy(CSRL, instance, None, milp_method, gap_abs, gap_rel, node_limit,
                        time_limit, mu_bound, False)


def fine_grid(instance: Instance, grid_step: float, f_cap: Optional[dict] = None) -> dict:
    """Lumpy sets ``{step, 2 step, ..., f_cap}`` for every candidate line."""
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    sets = {}
    for m in instance.network.candidate_lines:
        cap = (f_cap or {}).get(m, max(instance.network.lines[m].lumpy_set))
        n = int(math.floor(cap / grid_step + 1e-9))
        sets[m] = tuple(round(k * grid_step, 12) for k in range(1, n + 1))
    return sets


def solve_csr(instance: Instance, grid_step: float = 0.5, f_cap: Optional[dict] = None,
              milp_method: str = "auto", gap_abs: float = 0.0, gap_rel: float = 0.0,
              node_limit: int = 200_000, time_limit: Optional[float] = None,
              mu_bound: Optional[float] = None) -> PlanResult:
    """Revenue-adequate planning with near-continuous capacity.

    Runs the lumpy scheme with every candidate line's options replaced by
    the grid ``{grid_step, 2 grid_step, ..., f_cap}``.
    """
    fine = instance.with_lumpy_sets(fine_grid(instance, grid_step, f_cap))
    res = _solve_lumpy(CSR, fine, None, milp_method, gap_abs, gap_rel, node_limit,
                       time_limit, mu_bound, False)
    return res


def build_ts_milp(instance: Instance, tariff_grid: TariffGrid,
                  mu_bound: Optional[float] = None) -> MilpModel:
    """The single-level tariff-scheme MILP."""
    return PlanningModel(instance, "lumpy", tariff_grid, True, True, mu_bound=mu_bound).model


def solve_ts(instance: Instance, tariff_grid: TariffGrid, milp_method: str = "auto",
             gap_abs: float = 0.0, gap_rel: float = 0.0, node_limit: int = 200_000,
             time_limit: Optional[float] = None, mu_bound: Optional[float] = None,
             refine_ties: bool = True) -> PlanResult:
    """Joint choice of lumpy expansions and ex-ante tariff levels.

    After the MILP, the chosen plan is re-cleared independently and its
    best clearing pair re-evaluated without big-M terms; any disagreement
    raises :class:`PostSolveError`.  With ``refine_ties`` the lowest tariff
    level that reaches the same welfare is reported.
    """
    return _solve_lumpy(TS, instance, tariff_grid, milp_method, gap_abs, gap_rel, node_limit,
                        time_limit, mu_bound, refine_ties)


def baseline_welfare(instance: Instance) -> float:
    """Welfare with no expansion and no charges."""
    out = clear_market(instance, PlanDecision.none(instance.network.n_lines))
    return gross_welfare(out, instance)
