"""CSD reconstruction error per BFN cycle for several observer gains.

Shows why the CLD observer needs a far larger gain than the window
observer, and that the step size is converged at the default gains.
"""

import argparse

import numpy as np

from bfnobs.crystallization import CrystallizationScenario, reconstruct_csd
from bfnobs.io import write_columns
from bfnobs.observers import ObserverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cycles", type=int, default=10)
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--out", default="runs/gain_study.csv")
    args = ap.parse_args()
    scn = CrystallizationScenario()
    cases = [
        ("window", 5.0, 1 / 512),
        ("cld", 100.0, 1 / 1024),
        ("cld", 400.0, 1 / 1024),
        ("cld", 400.0, 1 / 2048),
        ("cld", 1000.0, 1 / 1024),
    ]
    columns = {"iteration": np.arange(args.cycles + 1)}
    for obs_type, r, dt in cases:
        rep = reconstruct_csd(scn, ObserverConfig(r=r, dt=dt), args.cycles, obs_type, n=args.n)
        err = np.array(rep.csd_error_per_iteration)
        columns[f"{obs_type}_r{r:g}_dt{round(1 / dt)}"] = err
        print(
            f"{obs_type:6s} r={r:<6g} dt=1/{round(1 / dt):<5d} final csd {err[-1]:.4e}"
            f"  nucleation {rep.nucleation_error_per_iteration[-1]:.4e}  ({rep.wall_time:.1f}s)"
        )
    write_columns(args.out, columns)


if __name__ == "__main__":
    main()
