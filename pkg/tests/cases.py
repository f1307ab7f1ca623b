"""Small instances shared by several test modules."""

import numpy as np

from tep_tariffs.instances import generate_two_node
from tep_tariffs.model import Bid, Instance, Line, Network, Node, Period
from tep_tariffs.schemes import TariffGrid


def coarse_two_node(lumpy=(10.0, 20.0)):
    """Two-node ladder with 10 MW steps: 3 demand bids and 9 supply offers."""
    return generate_two_node(step=10.0, lumpy=lumpy)


def random_tiny(seed: int, cost_scale: float = 1.0):
    """Random instance with its tariff grid, small enough for plan enumeration.

    Two nodes joined by a candidate line, or a triangle with one or two
    candidate lines.  At most six bids in total, at most three capacity
    options and three tariff levels (always including 0) per candidate.
    ``cost_scale`` multiplies both build costs.
    """
    rng = np.random.default_rng(seed)
    triangle = bool(rng.integers(0, 2))

    def candidate(m, i, j):
        k = int(rng.integers(1, 4))
        lumpy = tuple(float(v) for v in sorted(rng.choice(np.arange(2.0, 21.0), size=k, replace=False)))
        return Line(m, i, j, float(np.round(rng.uniform(0.2, 1.0), 3)), 0.0,
                    float(np.round(rng.uniform(0.0, 60.0), 2)) * cost_scale,
                    float(np.round(rng.uniform(0.0, 6.0), 2)) * cost_scale, lumpy)

    def existing(m, i, j):
        return Line(m, i, j, float(np.round(rng.uniform(0.2, 1.0), 3)),
                    float(np.round(rng.uniform(2.0, 10.0), 2)))

    if triangle:
        nodes = (Node(0), Node(1), Node(2))
        second = candidate(1, 1, 2) if rng.integers(0, 2) else existing(1, 1, 2)
        lines = (existing(0, 0, 1), second, candidate(2, 0, 2))
    else:
        nodes = (Node(0), Node(1))
        lines = (candidate(0, 0, 1),)
    n_bids = int(rng.integers(len(nodes) + 1, 7))
    # node 0 leans to import and the last node to export
    base = {0: 60.0, len(nodes) - 1: 20.0}
    bids = []
    for k in range(n_bids):
        n = k % len(nodes)
        side = "demand" if (k // len(nodes)) % 2 == 0 else "supply"
        if n_bids <= 2 * len(nodes) and k >= len(nodes):
            side = "supply"
        price = float(np.round(base.get(n, 40.0) + rng.normal(0, 12), 2))
        qmax = float(np.round(rng.uniform(1.0, 15.0), 2))
        bids.append(Bid(k, n, 0, side, price, qmax))
    inst = Instance(Network(nodes, lines), tuple(bids), (Period(0, float(rng.choice([1.0, 2.0]))),))
    levels = {}
    for m in inst.network.candidate_lines:
        k = int(rng.integers(1, 3))
        levels[m] = (0.0,) + tuple(float(v) for v in np.sort(np.round(rng.uniform(0.5, 8.0, k), 2)))
    return inst, TariffGrid(levels)


def random_triangle(seed: int):
    """Looped 3-node instance with existing lines only and a few bids per node."""
    rng = np.random.default_rng(seed)
    lines = tuple(Line(m, i, j, float(rng.uniform(0.1, 1.0)), float(rng.uniform(1.0, 20.0)))
                  for m, (i, j) in enumerate(((0, 1), (1, 2), (0, 2))))
    n_periods = int(rng.integers(1, 3))
    bids = []
    for t in range(n_periods):
        for n in range(3):
            for side in ("demand", "supply"):
                for _ in range(int(rng.integers(1, 4))):
                    bids.append(Bid(len(bids), n, t, side, float(rng.uniform(5.0, 95.0)),
                                    float(rng.uniform(0.0, 25.0))))
    periods = tuple(Period(t, float(rng.uniform(0.5, 3.0))) for t in range(n_periods))
    return Instance(Network((Node(0), Node(1), Node(2)), lines), tuple(bids), periods)
