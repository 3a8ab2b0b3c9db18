"""CSV writers with round-trippable float formatting."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_matrix_csv(path, matrix, prefix: str = "c") -> Path:
    """One CSV row per matrix row, e.g. an (N_m, N_e) ensemble snapshot."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    header = [f"{prefix}{j}" for j in range(matrix.shape[1])]
    return write_csv(path, header, matrix.tolist())
