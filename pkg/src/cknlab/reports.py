"""Columnar text reports with provenance headers and a JSON summary."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata

from .io import atomic_write_text


def artifact_version() -> str:
    try:
        return metadata.version("cknlab")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class Table:
    name: str
    columns: list[str]
    units: list[str]
    rows: list[list] = field(default_factory=list)

    def __post_init__(self):
        if len(self.columns) != len(self.units):
            raise ValueError(f"table {self.name}: {len(self.columns)} columns but {len(self.units)} units")

    def add(self, *row) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"table {self.name}: row has {len(row)} entries, expected {len(self.columns)}")
        self.rows.append(list(row))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):  # numpy scalars
        return _jsonable(v.item())
    return v


@dataclass
class Report:
    kind: str
    config_hash: str
    tables: list[Table] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def table(self, name: str, columns: list[str], units: list[str]) -> Table:
        t = Table(name, columns, units)
        self.tables.append(t)
        return t

    def render_table(self, t: Table) -> str:
        lines = [
            f"# kind: {self.kind}",
            f"# table: {t.name}",
            f"# config_hash: {self.config_hash}",
            f"# version: {artifact_version()}",
            "# units: " + "\t".join(t.units),
            "\t".join(t.columns),
        ]
        lines += ["\t".join(_fmt(v) for v in row) for row in t.rows]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str) -> list[str]:
        """Write one TSV per table plus <kind>_summary.json; returns the paths."""
        paths = []
        for t in self.tables:
            p = os.path.join(out_dir, f"{self.kind}_{t.name}.tsv")
            atomic_write_text(p, self.render_table(t))
            paths.append(p)
        doc = {
            "kind": self.kind,
            "provenance": {
                "config_hash": self.config_hash,
                "version": artifact_version(),
                "written_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            },
            "tables": {t.name: {"columns": t.columns, "units": t.units, "rows": len(t.rows)} for t in self.tables},
            "summary": _jsonable(self.summary),
        }
        p = os.path.join(out_dir, f"{self.kind}_summary.json")
        atomic_write_text(p, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        paths.append(p)
        return paths


def read_table(path: str) -> tuple[dict, list[str], list[list[str]]]:
    """Parse a report TSV into (header fields, column names, rows of strings)."""
    meta, cols, rows = {}, None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition(":")
                meta[k.strip()] = v.strip()
            elif cols is None:
                cols = line.split("\t")
            elif line:
                rows.append(line.split("\t"))
    return meta, cols or [], rows


__all__ = ["Table", "Report", "read_table", "artifact_version"]
