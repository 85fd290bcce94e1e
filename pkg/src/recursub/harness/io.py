"""Return-series ingestion and deterministic CSV/JSON writing."""

import csv
import json
import math

import numpy as np

from ..exceptions import EmptySeries, ParseError


def load_returns(path, column="return", log_diff=False, scale=None):
    """Load a return series from a headered CSV and rescale it.

    With ``log_diff`` the column is read as a price level and converted to
    log-differences.  When ``scale`` is None the series is divided by its
    own sample standard deviation (the training convention); passing the
    stored training scale applies it unchanged (the test-set convention, so
    test data generally do not have unit standard deviation).

    Returns (series, scale_used).
    """
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySeries(f"{path} is empty")
        header = [h.strip() for h in header]
        if column not in header:
            raise ParseError(f"column {column!r} not found in header {header}", line=1)
        col = header.index(column)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if col >= len(row):
                raise ParseError(f"row has {len(row)} fields, need {col + 1}",
                                 line=lineno)
            text = row[col].strip()
            try:
                x = float(text)
            except ValueError:
                raise ParseError(f"cannot parse {text!r} as a number", line=lineno)
            if not math.isfinite(x):
                raise ParseError(f"non-finite value {text!r}", line=lineno)
            values.append(x)
    series = np.asarray(values, dtype=float)
    if log_diff:
        if series.size < 2:
            raise EmptySeries("need at least two prices for log-differences")
        if np.any(series <= 0):
            raise ParseError("log-differencing requires positive prices")
        series = np.diff(np.log(series))
    if series.size == 0:
        raise EmptySeries(f"{path} contains no observations")
    if scale is None:
        scale = float(series.std(ddof=1)) if series.size > 1 else 1.0
        if scale <= 0:
            scale = 1.0
    return series / scale, float(scale)


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows, comment=None):
    """Write rows with shortest round-trip float formatting (byte-stable)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            out = []
            for x in row:
                if isinstance(x, str):
                    out.append(x)
                else:
                    if isinstance(x, (float, np.floating)) and not math.isfinite(x):
                        raise ValueError("refusing to write non-finite value")
                    out.append(_fmt(x))
            writer.writerow(out)


def write_draws_csv(path, draws, names):
    """Matrix of posterior draws, one named column per coordinate."""
    write_csv(path, names, draws)


def read_draws_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader if row]
    return header, np.asarray(rows, dtype=float)


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
