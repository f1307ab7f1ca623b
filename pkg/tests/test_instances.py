import json

import numpy as np
import pytest

from oracles import two_node_welfare
from tep_tariffs.clearing import clear_market, gross_welfare
from tep_tariffs.instances import (InstanceFormatError, XorShift64Star, dump_instance,
                                   garver_topology, generate_garver, generate_two_node,
                                   generate_two_zone, instance_to_dict, load_instance,
                                   save_instance)
from tep_tariffs.model import DEMAND, SUPPLY, PlanDecision


def test_garver_structure():
    inst = generate_garver(seed=1, per_node=10, qmax_high=50.0)
    assert inst.n_periods == 2
    for t in range(2):
        for n in range(5):
            sides = [b.side for b in inst.bids if b.period == t and b.node == n]
            assert sides.count(DEMAND) == 10 and sides.count(SUPPLY) == 10
        sides = [b.side for b in inst.bids if b.period == t and b.node == 5]
        assert sides == [SUPPLY] * 10
    assert inst.network.n_lines == 8
    assert all(ln.k_fix == 100.0 for ln in inst.network.lines)
    assert all(ln.f0 == 0.0 for ln in inst.network.lines[6:])
    prices = np.array([b.price for b in inst.bids])
    assert np.all(np.abs(prices - 50.0) <= 60.0)
    assert all(0.0 <= b.qmax < 50.0 for b in inst.bids)


def test_garver_is_deterministic():
    a = dump_instance(generate_garver(seed=7, per_node=4))
    b = dump_instance(generate_garver(seed=7, per_node=4))
    c = dump_instance(generate_garver(seed=8, per_node=4))
    assert a == b and a != c


def test_topology_is_flagged_as_transcribed():
    topo = garver_topology()
    assert topo["figure_derived"] is True
    assert len(topo["lines"]) == 8


def test_rng_reference_values():
    rng = XorShift64Star(0)
    first = [rng.next_u64() for _ in range(3)]
    again = XorShift64Star(0)
    assert first == [again.next_u64() for _ in range(3)]
    assert len(set(first)) == 3
    u = [XorShift64Star(s).uniform() for s in range(200)]
    assert all(0.0 <= v < 1.0 for v in u)
    rng = XorShift64Star(3)
    z = np.array([rng.normal() for _ in range(20000)])
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1.0) < 0.03
    k = [XorShift64Star(s).integers(2, 5) for s in range(100)]
    assert set(k) == {2, 3, 4}


@pytest.mark.parametrize("cap", [0, 1, 7, 15, 22, 30])
def test_ladder_integrates_linear_curves(cap):
    inst = generate_two_node(step=1.0)
    out = clear_market(inst, PlanDecision.from_capacity([float(cap)]))
    assert gross_welfare(out, inst) == pytest.approx(two_node_welfare(cap), abs=1e-9)


def test_two_zone_shares_trade_curves():
    a = generate_two_node(step=1.0)
    b = generate_two_zone(step=1.0)
    plan = PlanDecision.from_capacity([12.0])
    wa = gross_welfare(clear_market(a, plan), a) - gross_welfare(clear_market(a, PlanDecision.none(1)), a)
    wb = gross_welfare(clear_market(b, plan), b) - gross_welfare(clear_market(b, PlanDecision.none(1)), b)
    assert wa == pytest.approx(wb, abs=0.5)


def test_step_must_divide_curve():
    with pytest.raises(ValueError):
        generate_two_node(step=0.7)


def test_round_trip_is_byte_identical(tmp_path):
    for inst in (generate_two_node(step=1.0), generate_garver(seed=2, per_node=3)):
        text = dump_instance(inst)
        assert load_instance(text) == inst
        path = tmp_path / "inst.json"
        save_instance(load_instance(text), path)
        assert path.read_text() == text
        assert load_instance(path) == inst


def test_allocation_defaults_to_ones():
    doc = instance_to_dict(generate_two_node(step=10.0))
    assert "allocation" not in doc
    inst = load_instance(doc)
    np.testing.assert_array_equal(inst.network.allocation_matrix(), np.ones((1, 2)))


def test_schema_errors_are_collected():
    doc = instance_to_dict(generate_two_node(step=10.0))
    del doc["lines"][0]["reactance"]
    doc["bids"][0]["price"] = "cheap"
    doc["extra"] = 1
    with pytest.raises(InstanceFormatError) as err:
        load_instance(doc)
    text = str(err.value)
    assert "missing reactance" in text
    assert "expected a number" in text
    assert "unknown key 'extra'" in text


def test_validation_errors_surface_on_load():
    doc = instance_to_dict(generate_two_node(step=10.0))
    doc["bids"][0]["node"] = 9
    doc["bids"][1]["qmax"] = -1.0
    with pytest.raises(InstanceFormatError) as err:
        load_instance(doc)
    assert len(err.value.violations) == 2


def test_malformed_json():
    with pytest.raises(InstanceFormatError):
        load_instance('{"nodes": [0, 1],')


def test_tariff_grids_round_trip():
    doc = instance_to_dict(generate_two_node(step=10.0))
    doc["tariff_grids"] = {"0": [0.0, 2.5, 5.0]}
    inst = load_instance(json.dumps(doc))
    assert inst.tariff_grids == {0: (0.0, 2.5, 5.0)}
    assert load_instance(dump_instance(inst)) == inst
    doc["tariff_grids"] = {"0": [5.0, 2.5]}
    with pytest.raises(InstanceFormatError):
        load_instance(doc)
