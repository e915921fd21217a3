"""Maximum superposition size against mass at fixed protocol durations and gradients."""
import argparse
import warnings

import numpy as np

from _common import write
from sgihp.model import table2_config
from sgihp.integrator import mass_scaling_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--range", nargs=2, type=float, default=[1e-17, 1e-14], metavar=("LO", "HI"))
    ap.add_argument("--points", type=int, default=7)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    masses = np.geomspace(*args.range, args.points)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sw = mass_scaling_sweep(table2_config(), masses, workers=args.workers)
    for m, n, a in zip(sw.masses, sw.sizes, sw.analytic_sizes):
        print(f"m = {m:.3e} kg  numeric {n:.5e} m  closed form {a:.5e} m  ratio {n / a:.4f}")
    print(f"log-log slope: numeric {sw.slope:.5f}, closed form {sw.analytic_slope:.5f}")
    write(args.out, "mass_scaling.csv", ["mass", "size_numeric", "size_closed_form"],
          [[float(m), float(n), float(a)] for m, n, a in zip(sw.masses, sw.sizes, sw.analytic_sizes)])


if __name__ == "__main__":
    main()
