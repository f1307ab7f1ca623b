"""Welfare and cost recovery on the six-bus Garver system.

Usage: python demos/garver_tradeoff.py [per_node]

Bid capacities are scaled by 500 / per_node so total volume does not
depend on how many bids are drawn per node.
"""

import sys

import numpy as np

from tep_tariffs.econ import comparison_table, table_to_text
from tep_tariffs.instances import generate_garver
from tep_tariffs.schemes import TariffGrid, solve_cs, solve_csrl, solve_ts


def main(per_node=30):
    inst = generate_garver(seed=1, per_node=per_node, qmax_high=500.0 / per_node,
                           lumpy=tuple(float(v) for v in range(5, 105, 5)))
    grid = TariffGrid({m: tuple(np.round(np.linspace(0.0, 0.1, 11), 12))
                       for m in inst.network.candidate_lines})
    results = [solve_cs(inst), solve_csrl(inst), solve_ts(inst, grid)]
    print(table_to_text(comparison_table(results)))
    for res in results:
        print(f"{res.scheme:6s} built={res.built_lines} "
              f"mu escalations={res.mu_escalations}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 30)
