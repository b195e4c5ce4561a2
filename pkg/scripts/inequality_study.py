"""Sampled Sobolev and Poincare ratios across epsilon for the standard divisors."""

import argparse

from fibermetric import analysis_lab as lab
from fibermetric.fiber_core import MarkedDivisor, TorusGrid

TAU = 0.2 + 1.1j
A, B2 = 0.3 + 0.4 * TAU, 0.7 + 0.6 * TAU
DIVISORS = {
    "B": MarkedDivisor((), ((A, 0.7),)),
    "E": MarkedDivisor(((A, 1.0),), ()),
    "mixed": MarkedDivisor(((B2, 1.0),), ((A, 0.7),)),
}

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-side", type=int, default=128)
    ap.add_argument("--samples", type=int, default=200)
    a = ap.parse_args()
    g = TorusGrid(TAU, a.n_side)
    sched = lab.Schedule("epsilon", (1e-1, 1e-2, 1e-3, 1e-4))
    print("kind,divisor,p,seed,spread,ratios")
    for kind in ("sobolev", "poincare"):
        for name, div in DIVISORS.items():
            for p in (1.0, 1.5):
                for seed in (0, 1):
                    tab = lab.inequality_uniformity(kind, g, div, p, sched, a.samples, seed)
                    print(f"{kind},{name},{p},{seed},{tab.notes['spread']:.4f}," + " ".join(f"{x:.4g}" for x in tab.primary))
