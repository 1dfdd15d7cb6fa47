"""CSV panels, model parameter files and table rendering."""
from __future__ import annotations

import csv
import datetime as _dt
import json
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from .mixture import MixtureModel, covariance_from
from .panel import ReturnPanel

SCHEMA_VERSION = 1
UNITS = {
    "lam": "jump probability per holding period",
    "mu": "annual expected return, decimal",
    "sigma": "annual covariance",
    "mu_tilde": "jump mean per holding period, decimal",
    "sigma_tilde": "jump covariance per holding period",
    "dt": "holding period in years",
}


class InputError(ValueError):
    """Malformed or inconsistent user input (CLI exit code 2)."""


# --- CSV ------------------------------------------------------------------------


def read_csv_table(path) -> tuple:
    """Read a dated numeric CSV: ``(dates, labels, values)``.

    The first column holds ISO-8601 dates in increasing order; every other
    column is numeric. Missing values are rejected.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    rows = list(csv.reader(text.splitlines()))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no observations (empty file)")
    _, header = rows[0]
    header = [h.strip() for h in header]
    if len(header) < 2:
        raise InputError(f"{path}: header must name a date column and at least one asset")
    date_col = header[0]
    labels = tuple(header[1:])
    if len(set(labels)) != len(labels):
        raise InputError(f"{path}: duplicate column names in header")
    for lab in labels:
        try:
            float(lab)
        except ValueError:
            continue
        raise InputError(f"{path}: header row missing (found numeric column name {lab!r})")
    if len(rows) == 1:
        raise InputError(f"{path}: no observations")
    dates, values = [], []
    previous = None
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise InputError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
        raw = row[0].strip()
        try:
            day = _dt.date.fromisoformat(raw)
        except ValueError:
            raise InputError(
                f"{path}, line {line}: column {date_col!r} has malformed ISO date {raw!r}"
            ) from None
        if previous is not None and day <= previous:
            raise InputError(f"{path}, line {line}: dates must increase strictly")
        previous = day
        vals = []
        for lab, cell in zip(labels, row[1:]):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan", "null"):
                raise InputError(f"{path}, line {line}: missing value in column {lab!r}")
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}, line {line}: column {lab!r} is not numeric: {cell!r}") from None
            if not np.isfinite(v):
                raise InputError(f"{path}, line {line}: non-finite value in column {lab!r}")
            vals.append(v)
        dates.append(raw)
        values.append(vals)
    return tuple(dates), labels, np.array(values, dtype=float)


def read_returns_csv(path, dt: float) -> ReturnPanel:
    dates, labels, values = read_csv_table(path)
    return ReturnPanel(values, dt=dt, labels=labels, dates=dates)


def fmt_float(x) -> str:
    """Shortest representation that parses back to the same double."""
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows) -> None:
    """Write rows of strings or floats; floats keep full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt_float(c) for c in row])


def synthetic_dates(count: int, dt: float, start: str = "2000-01-07") -> tuple:
    step = max(1, int(round(dt * 365.25)))
    d0 = _dt.date.fromisoformat(start)
    return tuple((d0 + _dt.timedelta(days=step * i)).isoformat() for i in range(count))


# --- model files ----------------------------------------------------------------


def model_to_dict(model: MixtureModel, dt: float = 1.0, labels: Sequence[str] = ()) -> dict:
    labels = list(labels) or [f"asset{i + 1}" for i in range(model.n)]
    return {
        "schema_version": SCHEMA_VERSION,
        "units": UNITS,
        "dt": float(dt),
        "labels": labels,
        "lam": float(model.lam),
        "mu": [float(v) for v in model.mu],
        "sigma": [[float(v) for v in row] for row in model.sigma],
        "mu_tilde": [float(v) for v in model.mu_tilde],
        "sigma_tilde": [[float(v) for v in row] for row in model.sigma_tilde],
    }


def dump_model(model: MixtureModel, dt: float = 1.0, labels: Sequence[str] = ()) -> str:
    return json.dumps(model_to_dict(model, dt, labels), indent=2) + "\n"


def write_model(path, model: MixtureModel, dt: float = 1.0, labels: Sequence[str] = ()) -> None:
    Path(path).write_text(dump_model(model, dt, labels))


def _cov_entry(d, key, vols_key, corr_key, n):
    if key in d:
        return np.array(d[key], dtype=float)
    if vols_key in d:
        corr = d.get(corr_key)
        return covariance_from(d[vols_key], None if corr is None else np.array(corr, dtype=float))
    if n is not None and key == "sigma_tilde":
        return np.zeros((n, n))
    raise InputError(f"model file lacks {key!r} (or {vols_key!r})")


def model_from_dict(d: dict) -> tuple:
    """``(model, dt, labels)`` from a parsed model file.

    Covariances may be given directly or as volatilities plus an optional
    correlation matrix (``vols``/``corr``, ``vols_tilde``/``corr_tilde``).
    """
    if not isinstance(d, dict):
        raise InputError("model file must hold an object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InputError(f"unsupported model schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        mu = np.atleast_1d(np.array(d["mu"], dtype=float))
        n = mu.size
        sigma = _cov_entry(d, "sigma", "vols", "corr", None)
        mu_tilde = np.array(d.get("mu_tilde", np.zeros(n)), dtype=float)
        sigma_tilde = _cov_entry(d, "sigma_tilde", "vols_tilde", "corr_tilde", n)
        model = MixtureModel(float(d.get("lam", 0.0)), mu, sigma, mu_tilde, sigma_tilde)
        dt = float(d.get("dt", 1.0))
    except KeyError as exc:
        raise InputError(f"model file lacks {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid model file: {exc}") from None
    if not dt > 0:
        raise InputError("dt must be positive")
    labels = tuple(d.get("labels") or (f"asset{i + 1}" for i in range(n)))
    if len(labels) != n:
        raise InputError(f"{len(labels)} labels for {n} assets")
    return model, dt, labels


def read_model(path) -> tuple:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}, line {exc.lineno}: {exc.msg}") from None
    return model_from_dict(d)


# --- rendering ------------------------------------------------------------------


def pct(x, digits: int = 2) -> str:
    """Percentage with round-half-even on the decimal representation of ``x``."""
    q = Decimal(1).scaleb(-digits)
    return str((Decimal(repr(float(x))) * 100).quantize(q, rounding=ROUND_HALF_EVEN))


def render_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    cols = [header] + [list(r) for r in rows]
    widths = [max(len(str(r[i])) for r in cols) for i in range(len(header))]
    lines = []
    for k, r in enumerate(cols):
        cells = [str(c).ljust(widths[0]) if i == 0 else str(c).rjust(widths[i]) for i, c in enumerate(r)]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def parse_vector(text: str, name: str) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.split(",") if t.strip() != ""], dtype=float)
    except ValueError:
        raise InputError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise InputError(f"{name}: expected comma-separated finite numbers")
    return v

