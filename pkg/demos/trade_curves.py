"""Net import and export curves of the two-zone market, with the cost curve.

Usage: python demos/trade_curves.py > curves.csv

Prints CSV rows (curve, quantity, price); the ``atc`` rows give the
average total cost of a line of that capacity.
"""

import numpy as np

from tep_tariffs.econ import atc, curve_intersection, curves_to_csv, net_import_export_curves
from tep_tariffs.instances import generate_two_zone


def main():
    inst = generate_two_zone(step=0.5)
    imp, exp = net_import_export_curves(inst, [[0], [1]])
    text = curves_to_csv([imp, exp])
    line = inst.network.lines[0]
    rows = [f"atc,{f:.12g},{atc(line.k_fix, line.k_var, f):.12g}"
            for f in np.arange(2.0, 30.5, 0.5)]
    print(text.rstrip("\n"))
    print("\n".join(rows))
    print(f"# unconstrained trade {curve_intersection(imp, exp):.3g} MW")


if __name__ == "__main__":
    main()
