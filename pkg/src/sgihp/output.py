"""Deterministic CSV emission with a provenance comment header."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config_path: str
    output_dir: str
    config_sha256: str
    tool_version: str = __version__
    deterministic: bool = True

    def header_lines(self) -> list:
        return [
            f"# sgihp {self.tool_version}",
            f"# subcommand: {self.subcommand}",
            f"# config: {Path(self.config_path).name}",
            f"# config_sha256: {self.config_sha256}",
        ]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def write_csv(path: Path, manifest: RunManifest, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in manifest.header_lines():
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path):
    """(columns, rows) with comment lines skipped; values left as strings."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    cols = next(reader)
    return cols, list(reader)
