"""Tabulate Q'(x) for the three reference designs, as given and as deadbeat redesigns.

Writes CSV columns x, then one column per controller; at a kink the one-sided
value of larger magnitude is reported.
"""
import argparse
import csv
import sys

import numpy as np

from pulsedose.design import (PARACETAMOL_CORRIDOR, case_phi_target, solve_corridor,
                              synthesize_coeffs, table_controller)
from pulsedose.kinetics import PARACETAMOL_PD, PARACETAMOL_PLANT
from pulsedose.retmap import q_prime


def controllers():
    cycle = solve_corridor(PARACETAMOL_CORRIDOR, PARACETAMOL_PLANT)
    out = {}
    for case in (1, 2, 3):
        out[f"table_case{case}"] = table_controller(case)
        target = case_phi_target(case, cycle, PARACETAMOL_PLANT)
        out[f"deadbeat_case{case}"] = synthesize_coeffs(cycle, PARACETAMOL_PLANT, PARACETAMOL_PD, target)
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--hi", type=float, default=60.0, help="upper end of the x grid, mg/L")
    p.add_argument("-n", type=int, default=601, help="grid points")
    args = p.parse_args(argv)
    cs = controllers()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["x_mg_per_l", *cs])
    for x in np.linspace(0.0, args.hi, args.n):
        w.writerow([f"{x:.6g}", *(f"{q_prime(c, PARACETAMOL_PLANT, float(x)):.8g}" for c in cs.values())])


if __name__ == "__main__":
    main()
