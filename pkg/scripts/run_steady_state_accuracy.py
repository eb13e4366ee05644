"""Steady-state accuracy study for the classical kinetic model.

Computes the long-time limit of the conservative scheme (minmod-limited
transport) on a ladder of resolutions and compares against the separable
profile Z^-1 exp(-(1+v^2)/2 - (1+x^2)/2), which is the exact steady state
when beta = gamma = 2.  Prints the L1 error per resolution and the observed
refinement ratio.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from kfpcert.model import KineticFokkerPlanck, to_general_form
from kfpcert.solver import GridField, build_grid, discretize, save_field, steady_state


def closed_form(grid):
    X, V = grid.centers()
    data = np.exp(-0.5 * (1.0 + V * V) - 0.5 * (1.0 + X * X))
    return data / (np.sum(data) * grid.cell_volume)


def solve_one(n, box, tol, max_time):
    g = to_general_form(KineticFokkerPlanck(gamma=2.0, beta=2.0))
    grid = build_grid(box, box, n, n)
    op = discretize(g, grid, limiter=True)
    exact = closed_form(grid)
    f0 = GridField(grid=grid, data=exact.copy(), t=0.0, nonneg=True)
    t0 = time.time()
    G = steady_state(op, grid, tol=tol, f0=f0, check_interval=2.0, max_time=max_time)
    wall = time.time() - t0
    err = float(np.sum(np.abs(G.data - exact))) * grid.cell_volume
    return G, err, wall


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--box", type=float, default=6.0)
    ap.add_argument("--tol", type=float, default=2e-5)
    ap.add_argument("--max-time", type=float, default=200.0)
    ap.add_argument("--save", help="directory for field checkpoints")
    args = ap.parse_args()

    if args.save:
        Path(args.save).mkdir(parents=True, exist_ok=True)
    prev = None
    for n in args.resolutions:
        G, err, wall = solve_one(n, args.box, args.tol, args.max_time)
        ratio = "" if prev is None else f"  ratio={err / prev:.3f}"
        print(f"n={n:4d}  L1 error={err:.6f}  t_conv={G.t:5.1f}  wall={wall:6.1f}s{ratio}")
        prev = err
        if args.save:
            save_field(G, f"{args.save}/steady_{n}.txt")


if __name__ == "__main__":
    main()
