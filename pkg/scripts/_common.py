"""Shared helpers for the experiment scripts."""
import csv
import warnings
from pathlib import Path

from sgihp.config import bundled, load_config
from sgihp.loopsolver import ClosureProblem, solve_full_closure


def solved(dynamics="exact"):
    """Close the bundled partial reference configuration and return the completed config."""
    loaded = load_config(bundled("table2-partial.cfg"))
    proto = loaded.protocol
    problem = ClosureProblem(loaded.experiment, T3_resolution=proto.get("t3_resolution"),
                             stage4_mode=proto.get("stage4_mode", "time"), dynamics=dynamics)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve_full_closure(problem)


def write(out, name, header, rows):
    path = Path(out) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([[repr(v) if isinstance(v, float) else v for v in r] for r in rows])
    print(f"wrote {path}")
