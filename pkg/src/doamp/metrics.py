"""Error metrics and Monte-Carlo aggregation.

Angle errors are reported in degrees squared after pairing estimates to
truths by the minimum-total-squared-error assignment.  A trial whose
method returns fewer estimates than sources is a failed trial: excluded
from the MSE mean, counted in the success rate.
"""

import csv
from dataclasses import dataclass, fields
from itertools import permutations

import numpy as np

__all__ = [
    "ExperimentRecord",
    "SummaryRow",
    "CSV_HEADER",
    "match_and_mse",
    "aggregate",
    "format_record_row",
    "write_records_csv",
    "read_records_csv",
    "write_summary_csv",
]

CSV_HEADER = [
    "method", "M", "L", "K", "T", "snr_db", "seed",
    "mse_deg2", "rmse_deg", "success", "iterations", "runtime_ms",
]


@dataclass(frozen=True)
class ExperimentRecord:
    """One Monte-Carlo trial result row."""

    method: str
    M: int
    L: int
    K: int
    T: int
    snr_db: float
    seed: int
    mse_deg2: float  # nan for failed trials
    rmse_deg: float
    success: bool
    iterations: int
    runtime_ms: float


@dataclass(frozen=True)
class SummaryRow:
    """Per (method, SNR, T) cell summary."""

    method: str
    snr_db: float
    T: int
    mean_mse_deg2: float  # nan when no trial succeeded
    trials: int
    successes: int
    success_rate: float


def match_and_mse(estimates_deg, truths_deg):
    """Mean squared angle error (degrees^2) under the best pairing.

    Both inputs are equal-length angle lists in degrees with at most 5
    entries; the assignment is exhaustive over permutations.  Returns
    ``(mse_deg2, perm)`` where ``estimates_deg[perm[i]]`` pairs with
    ``truths_deg[i]``.
    """
    est = np.asarray(estimates_deg, dtype=float)
    tru = np.asarray(truths_deg, dtype=float)
    if est.shape != tru.shape or est.ndim != 1:
        raise ValueError(
            f"estimate/truth counts must match, got {est.shape} vs {tru.shape}"
        )
    k = len(est)
    if k == 0:
        raise ValueError("need at least one angle")
    if k > 5:
        raise ValueError("assignment search supports at most 5 sources")
    best_perm = None
    best_sse = np.inf
    for perm in permutations(range(k)):
        sse = float(((est[list(perm)] - tru) ** 2).sum())
        if sse < best_sse:
            best_sse = sse
            best_perm = perm
    return best_sse / k, best_perm


def aggregate(records) -> list[SummaryRow]:
    """Summarize records per (method, snr_db, T) cell.

    The MSE mean runs over successful trials only; the success rate over
    all trials in the cell.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    cells: dict[tuple, list[ExperimentRecord]] = {}
    for rec in records:
        cells.setdefault((rec.method, rec.snr_db, rec.T), []).append(rec)
    rows = []
    for (method, snr_db, T), recs in sorted(cells.items()):
        good = [r.mse_deg2 for r in recs if r.success]
        rows.append(
            SummaryRow(
                method=method,
                snr_db=snr_db,
                T=T,
                mean_mse_deg2=float(np.mean(good)) if good else float("nan"),
                trials=len(recs),
                successes=len(good),
                success_rate=len(good) / len(recs),
            )
        )
    return rows


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_record_row(rec: ExperimentRecord) -> str:
    """One CSV line in the fixed column order (no trailing newline)."""
    return ",".join(_format(getattr(rec, name)) for name in CSV_HEADER)


def write_records_csv(records, path, header_comments=()) -> None:
    """Write trial records with the fixed column schema."""
    with open(path, "w", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(CSV_HEADER) + "\n")
        for rec in records:
            fh.write(format_record_row(rec) + "\n")


def read_records_csv(path) -> list[ExperimentRecord]:
    """Read back records written by :func:`write_records_csv`."""
    out = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing or unexpected header row")
    types = {f.name: f.type for f in fields(ExperimentRecord)}
    for row in rows[1:]:
        kwargs = {}
        for name, text in zip(CSV_HEADER, row):
            t = types[name]
            if t == "bool":
                kwargs[name] = text == "true"
            elif t == "int":
                kwargs[name] = int(text)
            elif t == "float":
                kwargs[name] = float(text)
            else:
                kwargs[name] = text
        out.append(ExperimentRecord(**kwargs))
    return out


def write_summary_csv(rows, path, header_comments=()) -> None:
    """Write per-cell summaries."""
    with open(path, "w", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write("method,snr_db,T,mean_mse_deg2,trials,successes,success_rate\n")
        for r in rows:
            fh.write(
                f"{r.method},{_format(r.snr_db)},{r.T},{_format(r.mean_mse_deg2)},"
                f"{r.trials},{r.successes},{_format(r.success_rate)}\n"
            )
