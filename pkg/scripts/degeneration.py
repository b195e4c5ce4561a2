"""sup phi along fibers approaching a degenerate one."""

import argparse

from fibermetric import analysis_lab as lab

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-side", type=int, default=512)
    ap.add_argument("--targets", type=float, nargs="+", default=[2, 4, 8, 16, 32])
    a = ap.parse_args()
    tab = lab.degeneration_experiment(lab.neck_config(a.n_side), tuple(a.targets))
    print(tab.to_csv(), end="")
    print(lab.to_json(tab.summary()), end="")
