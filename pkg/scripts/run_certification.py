"""Drift-condition certification and rate-chain assembly.

Certifies the Lyapunov/energy/smoothness/Laplacian conditions for the two
stock model-weight pairs on a sampling box, then feeds a representative
Lyapunov pair through the explicit rate chain to print the resulting
convergence rate.  The phi_p sections use enlarged boxes because the
exterior radius R where phi_p turns negative sits outside the box that
certifies the other conditions.
"""

import argparse
import math
import time

from kfpcert.harris import HarrisInputs, harris_rate
from kfpcert.model import FitzHughNagumo, KineticFokkerPlanck, to_general_form
from kfpcert.weights import (
    ComparisonH,
    GaussianQuadratic,
    KfpWeight,
    SamplingGrid,
    verify_conditions,
)


def certify(name, g, w, H, box, n, phi_p_box, phi_p_n):
    t0 = time.time()
    rep = verify_conditions(
        g,
        w,
        H,
        SamplingGrid(box, n),
        p_list=(2.0, math.inf),
        phi_p_grid=SamplingGrid(phi_p_box, phi_p_n),
    )
    status = "ok" if rep.success else "FAILED"
    print(f"{name}: {status}  wall={time.time() - t0:.1f}s")
    print(f"  alpha={rep.c1['alpha']:.6f}  b={rep.c1['b']:.6f}")
    print(f"  C1={rep.c2['C1']:.6f}  C2={rep.c2['C2']:.6f}  C3={rep.c2['C3']:.6f}")
    print(f"  C4={rep.c4['C4']:.6f}")
    for entry in rep.phi_p:
        print(
            f"  phi_p p={entry['p']}: a={entry['a']:.4f} M={entry['M']:.4f} "
            f"R={entry['R']:.2f}"
        )
    for line in rep.failures:
        print(f"  failure: {line}")
    return rep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--box", type=float, default=6.0)
    ap.add_argument("--n", type=int, default=241)
    args = ap.parse_args()

    fhn = certify(
        "fhn(1,1,1) + gaussian r=0.1",
        to_general_form(FitzHughNagumo(1.0, 1.0, 1.0)),
        GaussianQuadratic(0.1),
        ComparisonH.fhn(),
        args.box,
        args.n,
        phi_p_box=20.0,
        phi_p_n=401,
    )
    certify(
        "kfp(gamma=5,beta=2) + kfp weight lam=0.05 eps=0.1",
        to_general_form(KineticFokkerPlanck(gamma=5.0, beta=2.0)),
        KfpWeight(0.05, 0.1, gamma=5.0),
        ComparisonH.kfp(2.0, 5.0),
        args.box,
        args.n,
        phi_p_box=8.0,
        phi_p_n=321,
    )

    # rate chain from the certified Lyapunov pair, with a unit Harris time
    # and a conservative empirical minorization mass
    alpha, b = fhn.c1["alpha"], fhn.c1["b"]
    m_of_R = max(8.0 * b / alpha, 8.0)
    inputs = HarrisInputs(alpha=alpha, b=b, T=1.0, mu_mass=0.1, m_of_R=m_of_R)
    rate = harris_rate(inputs)
    print(
        f"rate chain: gamma5={rate.gamma5:.6f}  lam={rate.lam:.6f}  C={rate.C:.3f}"
    )


if __name__ == "__main__":
    main()
