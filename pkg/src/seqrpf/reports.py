"""Report serialization: CSV tables, JSON summaries, run manifests, SVG plots.

Tables are comma separated with a one-line header; floats are written with
``repr`` so a re-read gives the same bits.  Summaries are JSON with sorted
keys.  Only the manifest carries timestamps, so repeated runs give
byte-identical tables and summaries.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)

    def column(self, name: str) -> list:
        k = self.header.index(name)
        return [r[k] for r in self.rows]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    return str(v)


def write_csv(path: Path, table: Table) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path: Path) -> Table:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return Table(rows[0], rows[1:])


def to_jsonable(v):
    if isinstance(v, dict):
        return {str(k): to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [to_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return to_jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if np.isfinite(f) else repr(f)
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, Fraction):
        return str(v)
    return v


def write_summary(path: Path, summary: dict) -> Path:
    path.write_text(json.dumps(to_jsonable(summary), sort_keys=True, indent=2) + "\n")
    return path


@dataclass
class RunManifest:
    kind: str
    config_hash: str
    seeds: list
    versions: dict
    wall_clock: float
    files: list
    warnings: list
    status: str

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(to_jsonable(asdict(self)), sort_keys=True, indent=2) + "\n")
        return path


def versions() -> dict:
    import matplotlib
    import scipy

    from . import __version__

    return {
        "seqrpf": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "platform": sys.platform,
    }


# ---------------------------------------------------------------------------------
# Plots
# ---------------------------------------------------------------------------------

# table name -> (x column, y columns, log y, title)
PLOTS = {
    "residuals": ("horizon", ["residual"], True, "residual decay"),
    "distances": ("n", ["D_n", "esseen"], True, "Kolmogorov distance"),
    "llt": ("n", ["gap"], True, "local CLT gap"),
    "rate": ("t", ["rate", "cramer"], False, "rate function"),
    "blocks": ("log_n", ["count"], False, "block count"),
}


def emit_plots(tables: dict, out: Path) -> tuple[list[Path], list[str]]:
    """SVG plots for the tables listed in :data:`PLOTS`; empty tables are skipped with a warning."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "seqrpf"
    files, warnings = [], []
    for name, (xcol, ycols, logy, title) in PLOTS.items():
        if name not in tables:
            continue
        t = tables[name]
        if not t.rows:
            msg = f"table {name!r} is empty; plot skipped"
            log.warning(msg)
            warnings.append(msg)
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        x = np.array(t.column(xcol), dtype=float)
        positive = False
        for y in ycols:
            if y not in t.header:
                continue
            vals = np.array(t.column(y), dtype=float)
            ax.plot(x, vals, marker="o", ms=3, label=y)
            positive |= bool(np.any(vals > 0))
        # all-zero columns (e.g. exact residuals) stay on a linear axis
        if logy and positive:
            ax.set_yscale("log")
        ax.set_xlabel(xcol)
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        path = out / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        files.append(path)
    return files, warnings
