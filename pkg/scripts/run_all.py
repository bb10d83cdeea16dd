"""Run every config in configs/ and print the headline results.

    python scripts/run_all.py [--root runs] [--jobs 2]
"""

import argparse
import time
from pathlib import Path

from bfnobs.config import parse_config
from bfnobs.experiments import run_experiment
from bfnobs.io import PLOT_SERIES, emit_plot_data

HERE = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--root", type=Path, default=Path("runs"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for path in sorted((HERE / "configs").glob("*.ini")):
        cfg = parse_config(path).replace(output_dir=str(args.root / path.stem))
        t = time.perf_counter()
        m = run_experiment(cfg, jobs=args.jobs)
        print(f"{path.stem}: {time.perf_counter() - t:.1f}s -> {m.output_dir}")
        for key, val in m.results.items():
            print(f"    {key} = {val}")
        for which, (source, _) in PLOT_SERIES.items():
            if source in m.files:
                emit_plot_data(m.as_dict(), which)


if __name__ == "__main__":
    main()
