"""CSV and JSON writers that embed the resolved config and a schema version."""

from __future__ import annotations

import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_VERSION = 1


def fmt(x) -> str:
    """17 significant digits for floats; integers and strings verbatim."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, Fraction):
        x = float(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if hasattr(x, "item"):  # numpy scalar
        return fmt(x.item())
    return str(x)


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj) if obj.denominator != 1 else obj.numerator
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "item"):
        return jsonable(obj.item())
    return obj


def config_line(config: dict) -> str:
    return json.dumps(jsonable(config), sort_keys=True, separators=(",", ":"))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], config: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
        fh.write(f"# config: {config_line(config)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_json(path: Path, payload: dict, config: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION, "config": jsonable(config), **jsonable(payload)}
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_csv(path: Path) -> tuple:
    """Parse a file written by ``write_csv``: returns (config, header, rows as strings)."""
    lines = Path(path).read_text().splitlines()
    config = json.loads(lines[1].split(": ", 1)[1])
    header = lines[2].split(",")
    return config, header, [ln.split(",") for ln in lines[3:]]
