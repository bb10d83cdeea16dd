"""CSV, manifest and plot-data writers.

CSV files carry one header row, use ``.`` as decimal separator and print
doubles with 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return FLOAT_FMT % float(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_columns(path, columns: dict) -> Path:
    """Write equal-length columns, keyed by header name, as CSV."""
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    length = {len(c) for c in data}
    if len(length) != 1:
        raise ValueError("columns must have equal length")
    return write_csv(path, names, zip(*data))


def read_csv(path) -> dict:
    """Read a CSV written by :func:`write_csv` into float columns."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(header)}
    return cols


def write_json_atomic(path, payload: dict) -> Path:
    """Write JSON via a temporary file in the same directory and rename it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def export_kernel_csv(obs, path) -> Path:
    """Dump the CLD kernel restricted to window columns as ``l,x,k`` rows."""
    return write_csv(path, ["l", "x", "k"], obs.kernel_rows())


def export_eigenvalues_csv(analysis, path) -> Path:
    return write_columns(
        path, {"index": np.arange(analysis.eigenvalues.size), "eigenvalue": analysis.eigenvalues}
    )


# series name -> (source csv, columns to emit)
PLOT_SERIES = {
    "bfn_error": ("bfn.csv", ("iteration", "error_norm")),
    "csd_overlay": ("csd.csv", ("x", "truth", "estimate")),
    "gramian_spectrum": ("eigenvalues.csv", ("index", "eigenvalue")),
    "observer_error": ("trajectory.csv", ("t", "error_norm")),
    "nucleation_overlay": ("nucleation.csv", ("t", "truth", "estimate")),
}


def emit_plot_data(manifest, which: str) -> Path:
    """Write a whitespace-separated ``.dat`` file for one result series.

    ``manifest`` is a manifest dict or a path to ``manifest.json``.
    """
    if which not in PLOT_SERIES:
        raise KeyError(f"unknown series {which!r}; choose from {sorted(PLOT_SERIES)}")
    if not isinstance(manifest, dict):
        with open(manifest) as fh:
            manifest = json.load(fh)
    out_dir = Path(manifest["output_dir"])
    source, cols = PLOT_SERIES[which]
    src = out_dir / source
    if not src.exists():
        raise FileNotFoundError(f"series {which!r} needs {source}, not produced by this run")
    data = read_csv(src)
    target = out_dir / f"plot_{which}.dat"
    with open(target, "w") as fh:
        fh.write("# " + " ".join(cols) + "\n")
        for row in zip(*(data[c] for c in cols)):
            fh.write(" ".join(FLOAT_FMT % v for v in row) + "\n")
    return target
