"""Domain types shared by every module: network, bids, instances and plans.

All containers are frozen dataclasses holding tuples, so an instance can be
shared across threads or worker processes without copying.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

DEMAND = "demand"
SUPPLY = "supply"


@dataclass(frozen=True)
class Node:
    id: int


@dataclass(frozen=True)
class Line:
    """A transmission corridor ``from_node -> to_node``.

    ``lumpy_set`` lists the admissible capacity additions in MW.  An empty
    set marks a line that cannot be expanded.
    """

    id: int
    from_node: int
    to_node: int
    reactance: float
    f0: float = 0.0
    k_fix: float = 0.0
    k_var: float = 0.0
    lumpy_set: tuple[float, ...] = ()

    @property
    def is_candidate(self) -> bool:
        return len(self.lumpy_set) > 0


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    # allocation[m][n]; None means postage stamp (all ones)
    allocation: Optional[tuple[tuple[float, ...], ...]] = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def allocation_matrix(self) -> np.ndarray:
        if self.allocation is None:
            return np.ones((self.n_lines, self.n_nodes))
        return np.asarray(self.allocation, dtype=float)

    @property
    def candidate_lines(self) -> tuple[int, ...]:
        return tuple(ln.id for ln in self.lines if ln.is_candidate)


@dataclass(frozen=True)
class Bid:
    """One step of a demand bid or supply offer ladder.

    ``price`` is the bid price before network charges.
    """

    id: int
    node: int
    period: int
    side: str
    price: float
    qmax: float

    @property
    def is_demand(self) -> bool:
        return self.side == DEMAND


@dataclass(frozen=True)
class Period:
    id: int
    weight: float = 1.0


@dataclass(frozen=True)
class Instance:
    network: Network
    bids: tuple[Bid, ...]
    periods: tuple[Period, ...] = (Period(0),)
    # optional per-line tariff levels keyed by line id
    tariff_grids: Optional[dict[int, tuple[float, ...]]] = field(
        default=None, compare=True, hash=False)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.periods], dtype=float)

    @property
    def demand_bids(self) -> tuple[Bid, ...]:
        return tuple(b for b in self.bids if b.side == DEMAND)

    @property
    def supply_bids(self) -> tuple[Bid, ...]:
        return tuple(b for b in self.bids if b.side == SUPPLY)

    def with_lumpy_sets(self, sets: dict[int, Sequence[float]]) -> "Instance":
        """Copy of the instance with the lumpy sets of some lines replaced."""
        lines = tuple(
            replace(ln, lumpy_set=tuple(float(v) for v in sets[ln.id]))
            if ln.id in sets else ln
            for ln in self.network.lines)
        net = Network(self.network.nodes, lines, self.network.allocation)
        return Instance(net, self.bids, self.periods, self.tariff_grids)


@dataclass(frozen=True)
class PlanDecision:
    """Upper-level decision, one entry per line.

    ``added`` is the capacity added on top of ``f0``.  For lumpy schemes
    ``lumpy_index`` points into the line's lumpy set; CS plans leave it None
    and carry a continuous ``added`` value instead.
    """

    build: tuple[bool, ...]
    added: tuple[float, ...]
    tariff: tuple[float, ...]
    lumpy_index: tuple[Optional[int], ...] = ()
    tariff_index: tuple[Optional[int], ...] = ()

    @classmethod
    def none(cls, n_lines: int) -> "PlanDecision":
        return cls((False,) * n_lines, (0.0,) * n_lines, (0.0,) * n_lines,
                   (None,) * n_lines, (None,) * n_lines)

    @classmethod
    def from_capacity(cls, added: Sequence[float],
                      tariff: Optional[Sequence[float]] = None) -> "PlanDecision":
        added = tuple(float(a) for a in added)
        n = len(added)
        tariff = tuple(float(t) for t in tariff) if tariff is not None else (0.0,) * n
        build = tuple(a > 0 or t > 0 for a, t in zip(added, tariff))
        return cls(build, added, tariff, (None,) * n, (None,) * n)

    @classmethod
    def from_lumpy(cls, network: Network, choice: dict[int, int],
                   tariff: Optional[dict[int, float]] = None) -> "PlanDecision":
        """Plan building ``line -> lumpy index`` with optional tariffs."""
        tariff = tariff or {}
        build, added, tau, idx = [], [], [], []
        for ln in network.lines:
            if ln.id in choice:
                j = choice[ln.id]
                build.append(True)
                added.append(float(ln.lumpy_set[j]))
                tau.append(float(tariff.get(ln.id, 0.0)))
                idx.append(j)
            else:
                build.append(False)
                added.append(0.0)
                tau.append(0.0)
                idx.append(None)
        n = network.n_lines
        return cls(tuple(build), tuple(added), tuple(tau), tuple(idx), (None,) * n)

    def capacity(self, network: Network) -> np.ndarray:
        """Total capacity ``F0 + added`` per line."""
        f0 = np.array([ln.f0 for ln in network.lines], dtype=float)
        return f0 + np.asarray(self.added, dtype=float)

    def check(self, network: Network) -> list[str]:
        """Consistency problems between the plan and the network."""
        problems = []
        n = network.n_lines
        if not (len(self.build) == len(self.added) == len(self.tariff) == n):
            return [f"plan length mismatch: expected {n} lines"]
        for m, ln in enumerate(network.lines):
            if not self.build[m]:
                if self.added[m] != 0.0 or self.tariff[m] != 0.0:
                    problems.append(f"line {m}: unbuilt line with capacity/tariff")
            if self.added[m] < 0 or self.tariff[m] < 0:
                problems.append(f"line {m}: negative capacity or tariff")
            if self.lumpy_index and self.lumpy_index[m] is not None:
                j = self.lumpy_index[m]
                if not self.build[m]:
                    problems.append(f"line {m}: lumpy choice on unbuilt line")
                elif not 0 <= j < len(ln.lumpy_set) or \
                        abs(ln.lumpy_set[j] - self.added[m]) > 1e-9:
                    problems.append(f"line {m}: lumpy index does not match capacity")
        return problems
