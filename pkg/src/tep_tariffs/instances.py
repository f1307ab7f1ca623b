"""Instance generators and the JSON instance format.

Random instances draw from :class:`XorShift64Star`, a small generator
defined here so that a seed gives the same instance on any platform and
in any implementation that follows the same recipe:

* state update ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` (64-bit),
  output ``x * 0x2545F4914F6CDD1D mod 2**64``;
* the seed is passed through one SplitMix64 step so that 0 is usable;
* uniforms are ``(out >> 11) * 2**-53`` in ``[0, 1)``;
* normals use Box-Muller on ``u1 = 1 - uniform`` and ``u2 = uniform``,
  returning the cosine branch first and the sine branch on the next call.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence, Union

from .model import DEMAND, SUPPLY, Bid, Instance, Line, Network, Node, Period
from .network import validate_instance

MASK64 = (1 << 64) - 1


class XorShift64Star:
    def __init__(self, seed: int):
        z = (int(seed) + 0x9E3779B97F4A7C15) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        z ^= z >> 31
        self.state = z or 0x9E3779B97F4A7C15
        self._spare: Optional[float] = None

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return low + (high - low) * ((self.next_u64() >> 11) * 2.0 ** -53)

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return mean + std * z
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return mean + std * r * math.cos(2.0 * math.pi * u2)

    def integers(self, low: int, high: int) -> int:
        """Integer in ``[low, high)``."""
        return low + int(self.uniform() * (high - low))


# --------------------------------------------------------------------------
# canonical instances


def _steps(total: float, step: float) -> int:
    n = total / step
    if step <= 0 or abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError(f"step {step} does not divide {total}")
    return int(round(n))


def _ladder(first_id: int, node: int, side: str, intercept: float, slope: float,
            length: float, step: float, period: int = 0) -> list[Bid]:
    """Stepwise version of ``p = intercept + slope * q`` priced at step midpoints."""
    n = _steps(length, step)
    return [Bid(first_id + i, node, period, side, intercept + slope * (i + 0.5) * step, step)
            for i in range(n)]


def _two_node_network(k_fix: float, k_var: float, lumpy: Sequence[float]) -> Network:
    line = Line(0, 0, 1, 1.0, 0.0, k_fix, k_var, tuple(float(v) for v in lumpy))
    return Network((Node(0), Node(1)), (line,))


def generate_two_node(step: float = 1.0, k_fix: float = 200.0, k_var: float = 10.0,
                      lumpy: Sequence[float] = tuple(range(3, 31, 3))) -> Instance:
    """Two zones joined by one new line, with linear net curves as ladders.

    Node 0 imports along ``p = 80 - (4/3) q`` (demand bids out to 60 MW) and
    node 1 exports along ``p = 20 + (2/3) q`` (supply offers out to 90 MW).
    Each bid is ``step`` wide and priced at the curve value at its midpoint,
    so cleared welfare at any capacity that is a multiple of ``step`` equals
    the integral of the linear curves.
    """
    _steps(30.0, step)
    bids = _ladder(0, 0, DEMAND, 80.0, -4.0 / 3.0, 60.0, step)
    bids += _ladder(len(bids), 1, SUPPLY, 20.0, 2.0 / 3.0, 90.0, step)
    return Instance(_two_node_network(k_fix, k_var, lumpy), tuple(bids))


def generate_two_zone(step: float = 1.0, k_fix: float = 200.0, k_var: float = 10.0,
                      lumpy: Sequence[float] = tuple(range(3, 31, 3))) -> Instance:
    """Two zones with separate demand and supply ladders in each zone.

    Zone 0: demand ``p = 120 - 2 q``, supply ``p = 4 q``.  Zone 1: demand
    ``p = 80 - (8/3) q``, supply ``p = (8/9) q``.  Net of local trade, these
    give the same import and export curves as :func:`generate_two_node`
    (autarky prices 80 and 20) while exposing every local participant to
    network charges.
    """
    _steps(30.0, step)
    bids = _ladder(0, 0, DEMAND, 120.0, -2.0, 60.0, step)
    bids += _ladder(len(bids), 0, SUPPLY, 0.0, 4.0, 30.0, step)
    bids += _ladder(len(bids), 1, DEMAND, 80.0, -8.0 / 3.0, 30.0, step)
    bids += _ladder(len(bids), 1, SUPPLY, 0.0, 8.0 / 9.0, 90.0, step)
    return Instance(_two_node_network(k_fix, k_var, lumpy), tuple(bids))


def garver_topology() -> dict:
    """The bundled Garver line data (figure-derived, see the file's description)."""
    text = resources.files("tep_tariffs").joinpath("data/garver.json").read_text()
    return json.loads(text)


def generate_garver(seed: int = 1, per_node: int = 1000, qmax_high: float = 0.5,
                    lumpy: Sequence[float] = tuple(range(1, 201)), n_periods: int = 2,
                    price_mean: float = 50.0, price_std: float = 10.0) -> Instance:
    """Garver 6-node system with random bid and offer ladders.

    For every period, for nodes 0..4 in order, ``per_node`` demand bids and
    then ``per_node`` supply offers are drawn; node 5 gets supply offers
    only.  Each bid draws its price ``N(price_mean, price_std)`` and then
    its quantity ``U(0, qmax_high)`` MW.  All lines are candidates with the
    given lumpy set.

    ``qmax_high = 500 / per_node`` keeps the nodal totals of the 1000-bid
    configuration when fewer bids are drawn.
    """
    if per_node < 1:
        raise ValueError("per_node must be at least 1")
    topo = garver_topology()
    lumpy = tuple(float(v) for v in lumpy)
    lines = tuple(
        Line(m, ln["from_node"], ln["to_node"], ln["reactance"], ln["f0"],
             topo["k_fix"], ln["k_var"], lumpy)
        for m, ln in enumerate(topo["lines"]))
    net = Network(tuple(Node(n) for n in range(topo["n_nodes"])), lines)
    rng = XorShift64Star(seed)
    supply_only = set(topo["supply_only_nodes"])
    bids: list[Bid] = []
    for t in range(n_periods):
        for n in range(topo["n_nodes"]):
            sides = (SUPPLY,) if n in supply_only else (DEMAND, SUPPLY)
            for side in sides:
                for _ in range(per_node):
                    price = rng.normal(price_mean, price_std)
                    qmax = rng.uniform(0.0, qmax_high)
                    bids.append(Bid(len(bids), n, t, side, price, qmax))
    periods = tuple(Period(t, 1.0) for t in range(n_periods))
    return Instance(net, tuple(bids), periods)


# --------------------------------------------------------------------------
# JSON format

_TOP_KEYS = {"nodes", "lines", "allocation", "periods", "bids", "tariff_grids"}
_LINE_KEYS = {"id", "from_node", "to_node", "reactance", "f0", "k_fix", "k_var", "lumpy_set"}
_LINE_REQUIRED = {"id", "from_node", "to_node", "reactance"}
_PERIOD_KEYS = {"id", "weight"}
_BID_KEYS = {"id", "node", "period", "side", "price", "qmax"}

SCHEMA = {
    "nodes": "list of node ids, 0..N-1",
    "lines": "list of {id, from_node, to_node, reactance, f0=0, k_fix=0, k_var=0, lumpy_set=[]}",
    "allocation": "optional lines x nodes matrix; omitted means all ones",
    "periods": "list of {id, weight=1}",
    "bids": "list of {id, node, period, side: demand|supply, price, qmax}",
    "tariff_grids": "optional {line id: ascending levels}",
}


class InstanceFormatError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _num(v: Any, where: str, errors: list[str]) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{where}: expected a number, got {v!r}")
        return math.nan
    return float(v)


def _int(v: Any, where: str, errors: list[str]) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append(f"{where}: expected an integer, got {v!r}")
        return -1
    return v


def _keys(obj: Any, allowed: set, required: set, where: str, errors: list[str]) -> bool:
    if not isinstance(obj, dict):
        errors.append(f"{where}: expected an object")
        return False
    for k in sorted(set(obj) - allowed):
        errors.append(f"{where}: unknown key {k!r}")
    for k in sorted(required - set(obj)):
        errors.append(f"{where}: missing {k}")
    return True


def instance_from_dict(doc: Any) -> Instance:
    """Build and validate an instance from a parsed JSON document.

    Raises
    ------
    InstanceFormatError
        With every schema and validation problem found.
    """
    errors: list[str] = []
    if not _keys(doc, _TOP_KEYS, {"nodes", "lines", "periods", "bids"}, "document", errors):
        raise InstanceFormatError(errors)
    nodes = tuple(Node(_int(n, f"nodes[{i}]", errors)) for i, n in enumerate(doc.get("nodes", [])))
    lines = []
    for i, ln in enumerate(doc.get("lines", [])):
        w = f"lines[{i}]"
        if not _keys(ln, _LINE_KEYS, _LINE_REQUIRED, w, errors) or _LINE_REQUIRED - set(ln):
            continue
        lumpy = ln.get("lumpy_set", [])
        if not isinstance(lumpy, list):
            errors.append(f"{w}.lumpy_set: expected a list")
            lumpy = []
        lines.append(Line(
            _int(ln["id"], f"{w}.id", errors), _int(ln["from_node"], f"{w}.from_node", errors),
            _int(ln["to_node"], f"{w}.to_node", errors), _num(ln["reactance"], f"{w}.reactance", errors),
            _num(ln.get("f0", 0.0), f"{w}.f0", errors), _num(ln.get("k_fix", 0.0), f"{w}.k_fix", errors),
            _num(ln.get("k_var", 0.0), f"{w}.k_var", errors),
            tuple(_num(v, f"{w}.lumpy_set", errors) for v in lumpy)))
    allocation = doc.get("allocation")
    if allocation is not None:
        if not isinstance(allocation, list) or not all(isinstance(r, list) for r in allocation):
            errors.append("allocation: expected a list of rows")
            allocation = None
        else:
            allocation = tuple(tuple(_num(v, f"allocation[{i}]", errors) for v in row)
                               for i, row in enumerate(allocation))
    periods = []
    for i, p in enumerate(doc.get("periods", [])):
        w = f"periods[{i}]"
        if _keys(p, _PERIOD_KEYS, {"id"}, w, errors) and "id" in p:
            periods.append(Period(_int(p["id"], f"{w}.id", errors),
                                  _num(p.get("weight", 1.0), f"{w}.weight", errors)))
    bids = []
    for i, b in enumerate(doc.get("bids", [])):
        w = f"bids[{i}]"
        if not _keys(b, _BID_KEYS, _BID_KEYS, w, errors) or _BID_KEYS - set(b):
            continue
        bids.append(Bid(_int(b["id"], f"{w}.id", errors), _int(b["node"], f"{w}.node", errors),
                        _int(b["period"], f"{w}.period", errors), b["side"],
                        _num(b["price"], f"{w}.price", errors), _num(b["qmax"], f"{w}.qmax", errors)))
    grids = doc.get("tariff_grids")
    if grids is not None:
        if not isinstance(grids, dict):
            errors.append("tariff_grids: expected an object")
            grids = None
        else:
            parsed = {}
            for k, levels in grids.items():
                try:
                    m = int(k)
                except ValueError:
                    errors.append(f"tariff_grids: bad line key {k!r}")
                    continue
                if not isinstance(levels, list):
                    errors.append(f"tariff_grids[{k}]: expected a list")
                    continue
                parsed[m] = tuple(_num(v, f"tariff_grids[{k}]", errors) for v in levels)
            grids = parsed
    if errors:
        raise InstanceFormatError(errors)
    inst = Instance(Network(nodes, tuple(lines), allocation), tuple(bids), tuple(periods), grids)
    report = validate_instance(inst)
    if not report.ok:
        raise InstanceFormatError(report.violations)
    return inst


def load_instance(source: Union[str, Path, dict]) -> Instance:
    """Read an instance from a JSON string, a file path or a parsed dict."""
    if isinstance(source, dict):
        return instance_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError([f"line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    return instance_from_dict(doc)


def instance_to_dict(instance: Instance) -> dict:
    net = instance.network
    doc: dict[str, Any] = {
        "nodes": [n.id for n in net.nodes],
        "lines": [{"id": ln.id, "from_node": ln.from_node, "to_node": ln.to_node,
                   "reactance": ln.reactance, "f0": ln.f0, "k_fix": ln.k_fix,
                   "k_var": ln.k_var, "lumpy_set": list(ln.lumpy_set)} for ln in net.lines],
    }
    if net.allocation is not None:
        doc["allocation"] = [list(r) for r in net.allocation]
    doc["periods"] = [{"id": p.id, "weight": p.weight} for p in instance.periods]
    doc["bids"] = [{"id": b.id, "node": b.node, "period": b.period, "side": b.side,
                    "price": b.price, "qmax": b.qmax} for b in instance.bids]
    if instance.tariff_grids is not None:
        doc["tariff_grids"] = {str(m): list(v) for m, v in sorted(instance.tariff_grids.items())}
    return doc


def dump_instance(instance: Instance) -> str:
    """Normalized JSON text: fixed key order, one bid per line, exact floats."""
    doc = instance_to_dict(instance)
    parts = []
    for key in ("nodes", "lines", "allocation", "periods", "bids", "tariff_grids"):
        if key not in doc:
            continue
        val = doc[key]
        if isinstance(val, list) and val and isinstance(val[0], (dict, list)):
            body = ",\n".join("  " + json.dumps(v) for v in val)
            parts.append(f' "{key}": [\n{body}\n ]')
        else:
            parts.append(f' "{key}": {json.dumps(val)}')
    return "{\n" + ",\n".join(parts) + "\n}\n"


def save_instance(instance: Instance, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_instance(instance))
