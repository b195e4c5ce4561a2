"""Cauchy differences and sup bound of delta-regularized potentials.

For b close to 1 the potentials converge like delta^(2(1-b)), so sup|u|
keeps growing along any affordable schedule.
"""

import argparse

from fibermetric import analysis_lab as lab

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--b", type=float, default=0.5)
    ap.add_argument("--n-side", type=int, default=512)
    ap.add_argument("--start", type=float, default=0.05)
    ap.add_argument("--count", type=int, default=6)
    a = ap.parse_args()
    tab = lab.smoothing_convergence(lab.smoothing_config(a.b, a.n_side), lab.Schedule.geometric("delta", a.start, a.count))
    print(tab.to_csv(), end="")
    print("sup|u| per delta:", ", ".join(f"{x:.4g}" for x in tab.notes["sup_u_all"]))
    print("verdict:", "pass" if tab.verdict else "fail", tab.checks)
