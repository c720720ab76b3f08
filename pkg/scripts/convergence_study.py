"""Gap |v_n - v| over a penalty schedule for the linear problem on the unit ball.

Runs an interior point and the boundary point (0, 0, 1), prints the interior table and, with --plot, saves gap vs n on log axes (needs matplotlib).
"""

import argparse
import time

import numpy as np

from robinmc import Ball, ConstantField, ProblemSpec, SimParams
from robinmc.experiments import run_convergence
from robinmc.functions import coordinate
from robinmc.reference import ball_robin_linear


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--dt", type=float, default=4e-4)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--schedule", default="1,4,16,64,256")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--plot")
    args = ap.parse_args()

    ns = [float(v) for v in args.schedule.split(",")]
    p = ProblemSpec(Ball(np.zeros(3), 1.0), ConstantField.isotropic(0.5), 1.0, coordinate(0), coordinate(0))
    x = [0.5, 0.0, 0.0]
    t0 = time.perf_counter()
    rep = run_convergence(p, [x, [0.0, 0.0, 1.0]], ns, SimParams(dt=args.dt), args.paths, args.seed, args.workers)
    print(f"# {time.perf_counter() - t0:.1f} s, Dirichlet estimate {rep.dirichlet[0].mean:.5f}"
          f" +- {rep.dirichlet[0].stderr:.5f} (exact 0.5)")
    print(f"{'n':>8} {'v_n':>10} {'stderr':>9} {'closed':>10} {'gap':>10} {'gap_se':>9}")
    for j, n in enumerate(ns):
        e = rep.robin[0][j]
        print(f"{n:8g} {e.mean:10.5f} {e.stderr:9.5f} {ball_robin_linear(x, n):10.5f}"
              f" {rep.gaps[0, j]:10.5f} {rep.gap_errors[0, j]:9.5f}")
    print("nonincreasing within bars:", rep.nonincreasing(0))

    if args.plot:
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.errorbar(ns, rep.gaps[0], yerr=rep.gap_errors[0], fmt="o-", label="Monte Carlo")
        ax.plot(ns, [abs(ball_robin_linear(x, n) - 0.5) for n in ns], "k--", label="closed form")
        ax.set(xscale="log", yscale="log", xlabel="n", ylabel="|v_n - v| at (0.5, 0, 0)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)


if __name__ == "__main__":
    main()
