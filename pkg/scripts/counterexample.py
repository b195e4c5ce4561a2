"""Negative geodesic curvature on a non-isotrivial family, with an isotrivial control."""

import argparse

from fibermetric import analysis_lab as lab
from fibermetric.family_geometry import FamilySolution, semipositivity_report

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappa", type=float, default=0.5)
    ap.add_argument("--shear", type=float, default=8.0)
    ap.add_argument("--levels", type=int, default=3)
    a = ap.parse_args()
    cfg = lab.counterexample_config(a.kappa, a.shear)
    rep, tab = lab.counterexample_experiment(cfg, lab.Schedule.geometric("epsilon_A", 0.1, 6), levels=a.levels)
    print("min c per level:", rep.flags["min_c_levels"])
    print("argmin (base i, base j, fiber i, fiber j):", rep.argmin_c)
    print("relative change:", rep.flags["relative_change"])
    ctrl = semipositivity_report(FamilySolution(lab.counterexample_config(0.0, a.shear)), probes=lab._common_probes(cfg, 0))
    print("control min c:", ctrl.min_c)
    print(tab.to_csv(), end="")
    print("perturbation order:", tab.order)
