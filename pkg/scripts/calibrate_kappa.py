"""Fit the local-time normalisation against the FD Neumann solve on the unit cube.

    python scripts/calibrate_kappa.py --paths 20000 --dt 1e-4 --seed 20261014
"""

import argparse
import json
import time

from robinmc import SimParams
from robinmc.experiments import calibrate_local_time, calibration_problem


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=20261014)
    ap.add_argument("--resolution", type=int, default=65)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    t0 = time.perf_counter()
    res = calibrate_local_time(calibration_problem(), SimParams(dt=args.dt), args.paths, args.seed,
                               resolution=args.resolution, workers=args.workers)
    out = res.to_dict()
    out["wall_time_s"] = time.perf_counter() - t0
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
