"""Network matrices and instance validation.

The incidence convention is ``a[m, n] = +1`` at the sending node of line m
and ``-1`` at the receiving node, so a positive flow leaves ``from_node``.
Loop rows hold signed reactances; any row scaling leaves KVL unchanged.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import DEMAND, SUPPLY, Instance, Network


class NetworkError(ValueError):
    pass


def build_incidence(network: Network) -> np.ndarray:
    """Line-by-node incidence matrix with entries in {-1, 0, +1}."""
    a = np.zeros((network.n_lines, network.n_nodes))
    for m, line in enumerate(network.lines):
        a[m, line.from_node] = 1.0
        a[m, line.to_node] = -1.0
    return a


def spanning_forest(network: Network) -> list[int]:
    """Line ids of a BFS spanning forest, rooted at the lowest node ids."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(network.n_nodes)]
    for m, line in enumerate(network.lines):
        adj[line.from_node].append((line.to_node, m))
        adj[line.to_node].append((line.from_node, m))
    seen = [False] * network.n_nodes
    tree = []
    for root in range(network.n_nodes):
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, m in sorted(adj[u], key=lambda e: e[1]):
                if not seen[v]:
                    seen[v] = True
                    tree.append(m)
                    queue.append(v)
    return sorted(tree)


def n_components(network: Network) -> int:
    return network.n_nodes - len(spanning_forest(network))


def _tree_path(network: Network, tree: list[int], src: int, dst: int) -> list[tuple[int, int]]:
    """Lines on the tree path src -> dst as (line id, +1/-1 traversal sign)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(network.n_nodes)]
    for m in tree:
        line = network.lines[m]
        adj[line.from_node].append((line.to_node, m))
        adj[line.to_node].append((line.from_node, m))
    parent: dict[int, tuple[int, int]] = {src: (-1, -1)}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v, m in adj[u]:
            if v not in parent:
                parent[v] = (u, m)
                queue.append(v)
    if dst not in parent:
        raise NetworkError(f"nodes {src} and {dst} are not connected")
    path = []
    v = dst
    while v != src:
        u, m = parent[v]
        sign = 1 if network.lines[m].from_node == u else -1
        path.append((m, sign))
        v = u
    path.reverse()
    return path


def build_loop_basis(network: Network) -> np.ndarray:
    """Fundamental cycle basis of the network as a loop-by-line matrix.

    One row per chord of a BFS spanning forest.  The loop runs along the
    chord in its own direction and returns through the tree; each line on
    the loop gets ``+reactance`` when traversed from its sending node and
    ``-reactance`` otherwise.

    Raises
    ------
    NetworkError
        If the network has no nodes.
    """
    if network.n_nodes == 0:
        raise NetworkError("empty network")
    tree = spanning_forest(network)
    in_tree = set(tree)
    rows = []
    for m, line in enumerate(network.lines):
        if m in in_tree:
            continue
        row = np.zeros(network.n_lines)
        row[m] = line.reactance
        # chord goes from -> to; close the loop on the tree path to -> from
        for k, sign in _tree_path(network, tree, line.to_node, line.from_node):
            row[k] += sign * network.lines[k].reactance
        rows.append(row)
    if not rows:
        return np.zeros((0, network.n_lines))
    return np.vstack(rows)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, detail: str = "") -> None:
        self.violations.append(f"{code}: {detail}" if detail else code)

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(self.violations)


def validate_network(network: Network, report: ValidationReport | None = None) -> ValidationReport:
    report = report if report is not None else ValidationReport()
    node_ids = [nd.id for nd in network.nodes]
    if len(set(node_ids)) != len(node_ids):
        report.add("duplicate node id")
    if sorted(node_ids) != list(range(len(node_ids))) or node_ids != sorted(node_ids):
        report.add("node ids not contiguous", "ids must be 0..N-1 in order")
    line_ids = [ln.id for ln in network.lines]
    if len(set(line_ids)) != len(line_ids):
        report.add("duplicate line id")
    if line_ids != list(range(len(line_ids))):
        report.add("line ids not contiguous", "ids must be 0..M-1 in order")
    n = network.n_nodes
    endpoints_ok = True
    for ln in network.lines:
        if not (0 <= ln.from_node < n and 0 <= ln.to_node < n):
            report.add("unknown node", f"line {ln.id}")
            endpoints_ok = False
        elif ln.from_node == ln.to_node:
            report.add("self loop", f"line {ln.id}")
        if not ln.reactance > 0:
            report.add("nonpositive reactance", f"line {ln.id}")
        if ln.f0 < 0:
            report.add("negative existing capacity", f"line {ln.id}")
        if ln.k_fix < 0 or ln.k_var < 0:
            report.add("negative cost", f"line {ln.id}")
        lumpy = list(ln.lumpy_set)
        if any(v <= 0 for v in lumpy):
            report.add("nonpositive lumpy capacity", f"line {ln.id}")
        if any(b <= a for a, b in zip(lumpy, lumpy[1:])):
            report.add("lumpy set not increasing", f"line {ln.id}")
        if ln.f0 == 0 and not lumpy:
            report.add("empty lumpy set", f"new line {ln.id} has no expansion options")
    if network.allocation is not None:
        rows = network.allocation
        if len(rows) != network.n_lines or any(len(r) != n for r in rows):
            report.add("allocation shape", f"expected {network.n_lines}x{n}")
        elif not np.all(np.isfinite(np.asarray(rows, dtype=float))):
            report.add("allocation not finite")
    if n > 0 and endpoints_ok and n_components(network) > 1:
        report.add("disconnected network")
    if n == 0:
        report.add("empty network")
    return report


def validate_instance(instance: Instance) -> ValidationReport:
    """Collect every structural problem of an instance; empty iff valid."""
    report = validate_network(instance.network)
    periods = [p.id for p in instance.periods]
    if not periods:
        report.add("no periods")
    if periods != list(range(len(periods))):
        report.add("period ids not contiguous")
    for p in instance.periods:
        if not p.weight > 0:
            report.add("nonpositive period weight", f"period {p.id}")
    bid_ids = [b.id for b in instance.bids]
    if len(set(bid_ids)) != len(bid_ids):
        report.add("duplicate bid id")
    n = instance.network.n_nodes
    for b in instance.bids:
        if not 0 <= b.node < n:
            report.add("bid at unknown node", f"bid {b.id}")
        if b.period not in periods:
            report.add("bid in unknown period", f"bid {b.id}")
        if b.side not in (DEMAND, SUPPLY):
            report.add("unknown bid side", f"bid {b.id}: {b.side!r}")
        if not np.isfinite(b.price):
            report.add("non-finite price", f"bid {b.id}")
        if not b.qmax >= 0:
            report.add("negative qmax", f"bid {b.id}")
    if instance.tariff_grids:
        for m, grid in instance.tariff_grids.items():
            if not 0 <= m < instance.network.n_lines:
                report.add("tariff grid for unknown line", f"line {m}")
            if any(not np.isfinite(v) or v < 0 for v in grid):
                report.add("invalid tariff level", f"line {m}")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                report.add("tariff grid not increasing", f"line {m}")
    return report
