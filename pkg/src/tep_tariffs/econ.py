"""Economic reporting: average cost of capacity, zonal trade curves,
surplus decomposition and scheme comparison tables."""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .clearing import BidLayout, congestion_rent_direct, gross_welfare, tariff_payments
from .model import Instance

COLUMNS = ["Expansion", "Social Welfare", "Investment Cost", "Congestion Rent",
           "Tariff", "Tariff Payments", "Revenue Imbalance"]


def atc(k_fix: float, k_var: float, f: float) -> float:
    """Average total cost per MW of added capacity, ``k_fix / f + k_var``."""
    if not f > 0:
        raise ValueError(f"capacity must be positive, got {f}")
    return k_fix / f + k_var


# --------------------------------------------------------------------------
# zonal trade curves


@dataclass(frozen=True)
class NetCurve:
    """Stepwise curve as (quantity, price) breakpoints, two per step."""

    kind: str
    quantity: np.ndarray
    price: np.ndarray

    def __len__(self) -> int:
        return len(self.quantity)

    @property
    def empty(self) -> bool:
        return len(self.quantity) == 0

    def price_at(self, q: float) -> float:
        """Price of the step covering ``q``; steps are closed on the left."""
        if self.empty:
            raise ValueError("empty curve")
        starts, ends, prices = self.quantity[0::2], self.quantity[1::2], self.price[0::2]
        for s, e, p in zip(starts, ends, prices):
            if s <= q < e:
                return float(p)
        if np.isclose(q, ends[-1]):
            return float(prices[-1])
        raise ValueError(f"quantity {q} beyond the curve (max {ends[-1]})")

    def rows(self) -> list[tuple[str, float, float]]:
        return [(self.kind, float(q), float(p)) for q, p in zip(self.quantity, self.price)]


def _zone_steps(instance: Instance, nodes: set[int], t: int, kind: str):
    """Price levels and net quantity range per level for one zone.

    For ``import`` the net quantity at price ``p`` is demand willing to pay
    at least ``p`` minus supply offered below ``p``; ``export`` mirrors it.
    """
    lay = BidLayout.of(instance)
    dk = [k for k in lay.demand_in(t) if lay.demand_node[k] in nodes]
    gk = [k for k in lay.supply_in(t) if lay.supply_node[k] in nodes]
    dp, dq = lay.demand_price[dk], lay.demand_qmax[dk]
    sp, sq = lay.supply_price[gk], lay.supply_qmax[gk]
    levels = np.unique(np.concatenate([dp, sp]))
    out = []
    for p in levels:
        if kind == "import":
            hi = dq[dp >= p].sum() - sq[sp < p].sum()
            lo = dq[dp > p].sum() - sq[sp <= p].sum()
        else:
            hi = sq[sp <= p].sum() - dq[dp > p].sum()
            lo = sq[sp < p].sum() - dq[dp >= p].sum()
        out.append((float(p), float(lo), float(hi)))
    # import curves run from high to low price, export curves the other way
    return out[::-1] if kind == "import" else out


def autarky_price(instance: Instance, nodes: set[int], t: int) -> float:
    """Price of the step where the zone's own supply meets its demand."""
    for p, lo, hi in _zone_steps(instance, nodes, t, "import"):
        if hi > 0 >= lo:
            return p
    for p, lo, hi in _zone_steps(instance, nodes, t, "export"):
        if hi > 0 >= lo:
            return p
    return math.nan


def _net_curve(instance: Instance, nodes: set[int], t: int, kind: str, limit: float) -> NetCurve:
    qs, ps = [], []
    for p, lo, hi in _zone_steps(instance, nodes, t, kind):
        if hi <= 0:
            continue
        if not math.isnan(limit) and ((kind == "import" and p <= limit) or
                                      (kind == "export" and p >= limit)):
            break
        qs += [max(lo, 0.0), hi]
        ps += [p, p]
    return NetCurve(kind, np.asarray(qs), np.asarray(ps))


def net_import_export_curves(instance: Instance, zone_split: Sequence[Sequence[int]],
                             t: int = 0) -> tuple[NetCurve, NetCurve]:
    """Import curve of the first zone and export curve of the second.

    Each curve is the horizontal gap between the zone's demand and supply
    steps, kept only over prices between the two autarky prices, where
    trade is worthwhile.  Zones with equal autarky prices give empty curves.

    Raises
    ------
    ValueError
        If the two zones do not partition the nodes.
    """
    if len(zone_split) != 2:
        raise ValueError("expected a partition into two zones")
    z1, z2 = set(zone_split[0]), set(zone_split[1])
    all_nodes = set(range(instance.network.n_nodes))
    if z1 & z2 or z1 | z2 != all_nodes:
        raise ValueError("zones must partition the node set")
    a1, a2 = autarky_price(instance, z1, t), autarky_price(instance, z2, t)
    if not a1 > a2:
        empty = np.zeros(0)
        return NetCurve("import", empty, empty), NetCurve("export", empty, empty)
    return (_net_curve(instance, z1, t, "import", a2),
            _net_curve(instance, z2, t, "export", a1))


def curve_intersection(imp: NetCurve, exp: NetCurve) -> float:
    """Largest traded quantity at which the import price still covers the export price."""
    if imp.empty or exp.empty:
        return 0.0
    cuts = np.unique(np.concatenate([imp.quantity, exp.quantity]))
    top = min(imp.quantity[-1], exp.quantity[-1])
    q_star = 0.0
    for a, b in zip(cuts, cuts[1:]):
        if b > top + 1e-12:
            break
        mid = 0.5 * (a + b)
        if imp.price_at(mid) >= exp.price_at(mid):
            q_star = b
        else:
            break
    return float(q_star)


def curves_to_csv(curves: Sequence[NetCurve]) -> str:
    buf = io.StringIO()
    buf.write("curve,quantity,price\n")
    for c in curves:
        for kind, q, p in c.rows():
            buf.write(f"{kind},{q:.9g},{p:.9g}\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# surplus decomposition


@dataclass(frozen=True)
class EconSummary:
    """Money flows of one result, period-weighted.

    ``welfare`` is gross welfare at pre-charge bid prices and splits exactly
    into consumer surplus, producer surplus and congestion rent.  Charges
    are transfers from participants to the operator and so sit inside the
    two surpluses.  ``net_welfare`` subtracts the investment cost.
    """

    welfare: float
    consumer_surplus: float
    producer_surplus: float
    congestion_rent: float
    tariff_payments: float
    investment_cost: float
    revenue_imbalance: float
    net_welfare: float

    def to_dict(self) -> dict:
        return {k: float(f"{v:.9g}") for k, v in asdict(self).items()}


def summarize(result, instance: Instance) -> EconSummary:
    """Surplus decomposition of a :class:`schemes.PlanResult`."""
    o = result.outcome
    lay = BidLayout.of(instance)
    w = instance.weights
    pi_d = o.pi[lay.demand_period, lay.demand_node]
    pi_g = o.pi[lay.supply_period, lay.supply_node]
    cs = float(np.sum(w[lay.demand_period] * (lay.demand_price - pi_d) * o.d))
    ps = float(np.sum(w[lay.supply_period] * (pi_g - lay.supply_price) * o.g))
    cr = congestion_rent_direct(o, instance)
    pay = tariff_payments(o, result.plan, instance)
    tc = result.investment_cost
    gw = gross_welfare(o, instance)
    return EconSummary(gw, cs, ps, cr, pay, tc, cr + pay - tc, gw - tc)


# --------------------------------------------------------------------------
# comparison table


def comparison_table(results: Sequence) -> pd.DataFrame:
    """One row per scheme in the column order of :data:`COLUMNS`.

    A single built line is shown as plain numbers; several built lines are
    listed per line as ``F<id>=value``.
    """
    if not results:
        raise ValueError("no results to tabulate")
    multi = any(len(r.built_lines) > 1 for r in results)
    rows = []
    for r in results:
        built = r.built_lines
        if not built:
            exp, tar = "0", "0"
        elif not multi:
            m = built[0]
            exp, tar = f"{r.plan.added[m]:.9g}", f"{r.plan.tariff[m]:.9g}"
        else:
            exp = "; ".join(f"F{m}={r.plan.added[m]:.9g}" for m in built)
            tar = "; ".join(f"tau{m}={r.plan.tariff[m]:.9g}" for m in built)
        rows.append([exp, r.welfare, r.investment_cost, r.congestion_rent, tar,
                     r.tariff_payments, r.revenue_imbalance])
    df = pd.DataFrame(rows, columns=COLUMNS, index=pd.Index([r.scheme for r in results], name="Scheme"))
    return df


def table_to_csv(df: pd.DataFrame) -> str:
    return df.to_csv(float_format="%.9g", lineterminator="\n")


def table_to_text(df: pd.DataFrame) -> str:
    fmt = df.copy()
    for c in fmt.columns:
        if fmt[c].dtype.kind == "f":
            fmt[c] = fmt[c].map(lambda v: f"{v:.6g}")
    return fmt.to_string() + "\n"
