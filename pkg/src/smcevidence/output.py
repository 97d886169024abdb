"""CSV serialization of run results; every float uses 17 significant digits."""

from __future__ import annotations

import csv
import json
from pathlib import Path

TRACE_HEAD = ["iteration", "alpha", "ess", "cess", "resampled"]
TRACE_TAIL = ["log_increment", "U"]
ESTIMATES_HEADER = ["estimator", "log_evidence", "realized_T", "min_ess", "resample_count",
                    "forced_micro_steps"]
SUMMARY_HEADER = ["estimator", "mean", "sd", "R"]
PROBS_HEADER = ["model", "probability"]
BIAS_HEADER = ["rule", "refinement", "mean_bias", "sd_bias", "R", "reference"]
CLT_HEADER = ["N", "empirical", "predicted", "ratio"]


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def acceptance_columns(trace) -> list:
    names = []
    for row in trace:
        for k in row["acceptance"]:
            if k not in names:
                names.append(k)
    return names


def trace_rows(trace):
    names = acceptance_columns(trace)
    header = TRACE_HEAD + [f"acc_{n}" for n in names] + TRACE_TAIL
    rows = []
    for r in trace:
        acc = [float(r["acceptance"].get(n, float("nan"))) for n in names]
        rows.append([r["iteration"], r["alpha"], r["ess"], r["cess"], r["resampled"], *acc,
                     r["log_increment"], r["U"]])
    return header, rows


def estimate_row(e):
    d = e.diagnostics
    return [e.estimator, float(e.log_evidence), int(e.realized_T), float(d.get("min_ess", 0.0)),
            int(d.get("resample_count", 0)), int(d.get("forced_micro_steps", 0))]


def write_run(out, result):
    """``trace.csv``, ``estimates.csv`` and, when present, ``model_probabilities.csv``."""
    out = Path(out)
    header, rows = trace_rows(result.trace)
    write_rows(out / "trace.csv", header, rows)
    write_rows(out / "estimates.csv", ESTIMATES_HEADER,
               [estimate_row(e) for e in result.estimates])
    if result.model_probs:
        write_rows(out / "model_probabilities.csv", PROBS_HEADER,
                   [[k, float(p)] for k, p in sorted(result.model_probs.items())])


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
