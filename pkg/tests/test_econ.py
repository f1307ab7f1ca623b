import numpy as np
import pytest

from cases import coarse_two_node
from tep_tariffs.clearing import clear_market, gross_welfare
from tep_tariffs.econ import (COLUMNS, atc, comparison_table, curve_intersection,
                              curves_to_csv, net_import_export_curves, summarize,
                              table_to_csv, table_to_text)
from tep_tariffs.instances import generate_garver, generate_two_node, generate_two_zone
from tep_tariffs.model import Bid, Instance, PlanDecision
from tep_tariffs.schemes import PlanResult, TariffGrid, solve_cs, solve_csrl, solve_ts


def test_average_total_cost():
    assert atc(200, 10, 25) == pytest.approx(18.0)
    assert atc(0, 10, 7.3) == pytest.approx(10.0)
    assert atc(200, 10, 20) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        atc(200, 10, 0.0)


@pytest.mark.parametrize("make", [generate_two_node, generate_two_zone])
def test_net_curves_of_canonical_zones(make):
    inst = make(step=0.1)
    imp, exp = net_import_export_curves(inst, [[0], [1]])
    assert imp.price[0] == pytest.approx(80.0, abs=0.15)
    assert exp.price[0] == pytest.approx(20.0, abs=0.15)
    assert imp.price_at(15.0) == pytest.approx(60.0, abs=0.15)
    assert exp.price_at(15.0) == pytest.approx(30.0, abs=0.15)
    assert np.all(np.diff(imp.price) <= 0) and np.all(np.diff(exp.price) >= 0)


@pytest.mark.parametrize("step", [1.0, 0.5])
def test_curves_cross_at_unconstrained_trade(step):
    inst = generate_two_node(step=step)
    imp, exp = net_import_export_curves(inst, [[0], [1]])
    assert abs(curve_intersection(imp, exp) - 30.0) <= step + 1e-9
    free = clear_market(inst, PlanDecision.from_capacity([1000.0]))
    assert abs(abs(free.f[0, 0]) - 30.0) <= step + 1e-9


def test_identical_zones_give_empty_curves():
    inst = generate_two_node(step=10.0)
    bids = tuple(Bid(b.id, 1 - b.node, 0, b.side, b.price, b.qmax) for b in inst.bids) + \
        tuple(Bid(b.id + 100, b.node, 0, b.side, b.price, b.qmax) for b in inst.bids)
    sym = Instance(inst.network, bids)
    imp, exp = net_import_export_curves(sym, [[0], [1]])
    assert imp.empty and exp.empty
    assert curve_intersection(imp, exp) == 0.0


def test_zone_split_must_partition():
    inst = generate_garver(per_node=1)
    with pytest.raises(ValueError):
        net_import_export_curves(inst, [[0, 1], [1, 2, 3, 4, 5]])
    with pytest.raises(ValueError):
        net_import_export_curves(inst, [[0, 1]])


def test_curves_csv():
    inst = generate_two_node(step=10.0)
    text = curves_to_csv(net_import_export_curves(inst, [[0], [1]]))
    lines = text.strip().splitlines()
    assert lines[0] == "curve,quantity,price"
    assert {ln.split(",")[0] for ln in lines[1:]} == {"import", "export"}


def test_summary_of_table_rows():
    inst = generate_two_node(step=1.0)
    cs = summarize(solve_cs(inst), inst)
    assert cs.revenue_imbalance == pytest.approx(-225.0, abs=1e-6)
    csrl = summarize(solve_csrl(inst), inst)
    # prices are only pinned to a ladder step, so rent moves by up to 2 * 18 MW
    assert csrl.revenue_imbalance == pytest.approx(52.0, abs=2 * 18.0)
    for s in (cs, csrl):
        assert s.consumer_surplus + s.producer_surplus + s.congestion_rent == pytest.approx(s.welfare)
        assert s.net_welfare == pytest.approx(s.welfare - s.investment_cost)


def test_decomposition_with_tariffs():
    inst = generate_two_zone(step=2.0)
    plan = PlanDecision.from_capacity([12.0], [4.0])
    out = clear_market(inst, plan)
    res = PlanResult("TS", plan, out, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    s = summarize(res, inst)
    assert s.tariff_payments > 0
    assert s.consumer_surplus + s.producer_surplus + s.congestion_rent == pytest.approx(
        gross_welfare(out, inst))


def test_all_zero_outcome_gives_zero_summary():
    inst = generate_two_node(step=10.0)
    empty = Instance(inst.network, tuple(Bid(b.id, b.node, 0, b.side, b.price, 0.0) for b in inst.bids))
    out = clear_market(empty, PlanDecision.none(1))
    s = summarize(PlanResult("CS", PlanDecision.none(1), out, 0, 0, 0, 0, 0, 0), empty)
    assert all(v == 0.0 for v in s.to_dict().values())


@pytest.mark.parametrize("cap", [0.0, 5.0, 15.0, 29.0])
def test_capped_welfare_never_beats_free_trade(cap):
    inst = generate_two_node(step=1.0)
    capped = gross_welfare(clear_market(inst, PlanDecision.from_capacity([cap])), inst)
    free = gross_welfare(clear_market(inst, PlanDecision.from_capacity([500.0])), inst)
    assert capped <= free + 1e-9


def test_comparison_table_shapes():
    inst = coarse_two_node(lumpy=(10.0, 20.0, 30.0))
    results = [solve_cs(inst), solve_csrl(inst), solve_ts(inst, TariffGrid({0: (0.0, 5.0)}))]
    df = comparison_table(results)
    assert list(df.columns) == COLUMNS
    assert list(df.index) == ["CS", "CSR-L", "TS"]
    assert comparison_table(results[:1]).shape == (1, 7)
    assert table_to_csv(df).splitlines()[0].startswith("Scheme,Expansion")
    assert "CSR-L" in table_to_text(df)
    with pytest.raises(ValueError):
        comparison_table([])


def test_multi_line_expansion_column():
    inst = generate_garver(seed=1, per_node=3, qmax_high=50.0, lumpy=(25.0, 50.0))
    plan = PlanDecision.from_lumpy(inst.network, {6: 0, 7: 1}, {7: 0.5})
    out = clear_market(inst, plan)
    res = PlanResult("TS", plan, out, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    df = comparison_table([res])
    assert df.loc["TS", "Expansion"] == "F6=25; F7=50"
    assert df.loc["TS", "Tariff"] == "tau6=0; tau7=0.5"
