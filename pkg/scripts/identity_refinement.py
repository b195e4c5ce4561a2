"""Residuals of the two on-shell identities under joint refinement."""

import argparse

from fibermetric import analysis_lab as lab

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--identity", choices=lab.IDENTITIES, default="curvature-laplacian")
    ap.add_argument("--n-side", type=int, default=256)
    ap.add_argument("--m-side", type=int, default=17)
    ap.add_argument("--levels", type=int, default=2)
    a = ap.parse_args()
    make = lab.curvature_identity_config if a.identity == "curvature-laplacian" else lab.lift_identity_config
    tab = lab.identity_refinement(make(a.n_side, a.m_side), a.identity, levels=a.levels)
    print(tab.to_csv(), end="")
    print(lab.to_json(tab.summary()), end="")
