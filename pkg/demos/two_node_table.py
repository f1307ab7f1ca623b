"""Compare the four planning schemes on the two-node market.

Usage: python demos/two_node_table.py [step]

A step of 1 MW solves in seconds; 0.1 MW takes a few minutes, mostly in
the tariff scheme.
"""

import sys
import time

from tep_tariffs.econ import comparison_table, table_to_text
from tep_tariffs.instances import generate_two_node
from tep_tariffs.schemes import TariffGrid, solve_cs, solve_csr, solve_csrl, solve_ts

LUMPY = tuple(float(v) for v in range(3, 31, 3))


def main(step=1.0):
    inst = generate_two_node(step=step, lumpy=LUMPY)
    runs = [("CS", lambda: solve_cs(inst)),
            ("CSR", lambda: solve_csr(inst, grid_step=0.5)),
            ("CSR-L", lambda: solve_csrl(inst)),
            ("TS", lambda: solve_ts(inst, TariffGrid.uniform(inst, 0.1, 19.1)))]
    results = []
    for name, run in runs:
        t0 = time.perf_counter()
        results.append(run())
        print(f"{name:6s} solved in {time.perf_counter() - t0:6.1f}s")
    print()
    print(table_to_text(comparison_table(results)))


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 1.0)
