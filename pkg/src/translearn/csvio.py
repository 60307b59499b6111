"""Deterministic CSV output.

All experiment CSVs are UTF-8 with '\n' line endings, a header on the
first row, and floats rendered with 17 significant digits so reruns are
byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["format_value", "write_csv"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
