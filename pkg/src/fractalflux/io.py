"""Small shared output helpers: scenario hashing and CSV writing."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence


def scenario_hash(payload) -> str:
    """Short stable digest of a JSON-serializable scenario description."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    scenario: str | None = None,
    comments: Sequence[str] = (),
) -> None:
    path = Path(path)
    lines = []
    if scenario:
        lines.append(f"# scenario {scenario}")
    lines.extend(f"# {c}" for c in comments)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_format_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path):
    """Header list and string rows; comment lines are returned separately."""
    comments = []
    header: list[str] | None = None
    rows: list[list[str]] = []
    for line in Path(path).read_text().splitlines():
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        if header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    return header or [], rows, comments
