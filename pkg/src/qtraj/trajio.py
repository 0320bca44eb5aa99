"""Trajectory CSV export, one schema for every sampler.

Columns, in order::

    t, [psi<k>_re, psi<k>_im ...], outcome, eta_or_eps, q_raw, q_hat,
    n_count, jump_time, prob

Row ``j`` describes the grid point ``t_j``; per-step quantities (outcome,
output value, probability) belong to the step that ended at ``t_j`` and are
empty on row 0.  Columns that do not apply to a sampler are left empty.
Floats are written with ``repr`` so files are byte-reproducible.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

RECORD_COLUMNS = ("outcome", "eta_or_eps", "q_raw", "q_hat", "n_count", "jump_time", "prob")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return ""
    return repr(x)


def csv_header(dim: int | None) -> list[str]:
    cols = ["t"]
    if dim:
        for k in range(dim):
            cols += [f"psi{k}_re", f"psi{k}_im"]
    return cols + list(RECORD_COLUMNS)


def trajectory_csv(times, states, columns: dict, include_amplitudes: bool = True) -> str:
    """Render a trajectory as CSV text.

    ``columns`` maps names from ``RECORD_COLUMNS`` to arrays of length
    ``len(times)``; per-step arrays of length ``len(times) - 1`` are shifted
    down one row.  Missing names become empty columns.
    """
    n = len(times)
    dim = states.shape[1] if (include_amplitudes and states is not None) else None
    full = {}
    for name in RECORD_COLUMNS:
        col = columns.get(name)
        if col is None:
            full[name] = [None] * n
            continue
        col = list(col)
        if len(col) == n - 1:
            col = [None] + col
        if len(col) != n:
            raise ValueError(f"column {name!r} has length {len(col)}, expected {n}")
        full[name] = col
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(dim))
    for j in range(n):
        row = [_fmt(times[j])]
        if dim:
            for z in states[j]:
                row += [_fmt(z.real), _fmt(z.imag)]
        row += [_fmt(full[name][j]) for name in RECORD_COLUMNS]
        writer.writerow(row)
    return buf.getvalue()


def write_trajectory_csv(path, times, states, columns: dict, include_amplitudes: bool = True) -> Path:
    path = Path(path)
    path.write_text(trajectory_csv(times, states, columns, include_amplitudes))
    return path


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Load a trajectory CSV back into float columns (empty cells become NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for i, name in enumerate(header):
        out[name] = np.array([float(r[i]) if r[i] != "" else np.nan for r in body])
    return out
