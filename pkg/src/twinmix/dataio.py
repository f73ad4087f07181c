"""Twin-pair datasets: CSV input, probit transform, diagnostics and report output.

Input files are comma separated with the header ``pair_id,zygosity,y1,y2``
and an optional ``trait`` column. Zygosity is ``MZ`` or ``DZ`` (case
insensitive). With ``frequencies=True`` the ``y`` columns are proportions in
the open interval (0, 1) and are mapped through the standard normal quantile
function on load.
"""

import csv
import io
import json
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DegenerateDataError, DomainError, InputError
from .estimation import FitOptions, as_pairs, fit_dz_separate, fit_mz
from .model import PairObs

__all__ = [
    "TwinDataset",
    "TraitTable",
    "VarianceDiagnostic",
    "inv_norm_cdf",
    "probit_transform",
    "normality_check",
    "variance_diagnostic",
    "read_trait_tables",
    "load_twin_csv",
    "load_trait_file",
    "write_dataset_csv",
    "flatten",
    "write_report",
    "format_report",
]

ZYGOSITIES = ("MZ", "DZ")
_REQUIRED = ("pair_id", "zygosity", "y1", "y2")


class TwinDataset:
    """MZ and DZ pairs as float ``(n, 2)`` arrays plus a trait label."""

    def __init__(self, mz, dz, trait_name="", transformed=False, source=""):
        self.mz = as_pairs(mz, 0, "MZ pairs")
        self.dz = as_pairs(dz, 0, "DZ pairs")
        self.trait_name = str(trait_name)
        self.transformed = bool(transformed)
        self.source = str(source)

    @property
    def n_mz(self):
        return self.mz.shape[0]

    @property
    def n_dz(self):
        return self.dz.shape[0]

    def mz_pairs(self):
        return [PairObs(float(a), float(b)) for a, b in self.mz]

    def dz_pairs(self):
        return [PairObs(float(a), float(b)) for a, b in self.dz]

    def __eq__(self, other):
        if not isinstance(other, TwinDataset):
            return NotImplemented
        return (np.array_equal(self.mz, other.mz) and np.array_equal(self.dz, other.dz)
                and self.trait_name == other.trait_name and self.transformed == other.transformed)

    def __repr__(self):
        return (f"TwinDataset(trait_name={self.trait_name!r}, n_mz={self.n_mz}, "
                f"n_dz={self.n_dz}, transformed={self.transformed})")


@dataclass(frozen=True)
class TraitTable:
    """Raw rows of one trait before any transform.

    ``values`` is ``(n, 2)``; ``lines`` holds the 1-based source line of each
    row (0 when the table was built in memory).
    """

    trait: str
    pair_ids: tuple
    zygosity: tuple
    values: np.ndarray
    lines: tuple

    def __post_init__(self):
        n = len(self.pair_ids)
        if not (len(self.zygosity) == len(self.lines) == n and np.shape(self.values) == (n, 2)):
            raise DomainError("TraitTable columns have inconsistent lengths")
        bad = [z for z in self.zygosity if z not in ZYGOSITIES]
        if bad:
            raise DomainError(f"unknown zygosity {bad[0]!r}")

    @classmethod
    def from_arrays(cls, mz, dz, trait=""):
        mz = np.asarray(mz, dtype=float).reshape(-1, 2)
        dz = np.asarray(dz, dtype=float).reshape(-1, 2)
        n = len(mz) + len(dz)
        return cls(trait, tuple(str(i + 1) for i in range(n)),
                   ("MZ",) * len(mz) + ("DZ",) * len(dz),
                   np.vstack([mz, dz]), (0,) * n)

    def to_dataset(self, transformed=False, source=""):
        z = np.asarray(self.zygosity)
        v = np.asarray(self.values, dtype=float)
        return TwinDataset(v[z == "MZ"], v[z == "DZ"], self.trait, transformed, source)


def inv_norm_cdf(p):
    """Standard normal quantile; raises :class:`DomainError` outside (0, 1)."""
    a = np.asarray(p, dtype=float)
    if not np.all((a > 0.0) & (a < 1.0)):
        raise DomainError("probabilities must lie strictly inside (0, 1)")
    out = special.ndtri(a)
    return out[()] if out.ndim == 0 else out


def probit_transform(table, source=""):
    """Map every frequency through :func:`inv_norm_cdf`; boundary values are errors."""
    v = np.asarray(table.values, dtype=float)
    ok = (v > 0.0) & (v < 1.0)
    if not np.all(ok):
        i = int(np.flatnonzero(~ok.all(axis=1))[0])
        line = table.lines[i] or None
        raise InputError(
            f"pair {table.pair_ids[i]!r}: frequencies must lie strictly inside (0, 1), "
            f"got ({v[i, 0]!r}, {v[i, 1]!r})", line)
    t = TraitTable(table.trait, table.pair_ids, table.zygosity, special.ndtri(v), table.lines)
    return t.to_dataset(transformed=True, source=source)


def normality_check(ds, stratum="MZ", repeats=200, rng=0):
    """Mean Shapiro-Wilk p-value over random one-member-per-pair draws.

    Each repeat picks one coordinate of every pair uniformly at random and
    tests the resulting sample; the p-values are averaged.
    """
    stratum = stratum.upper()
    if stratum not in ZYGOSITIES:
        raise DomainError(f"stratum must be MZ or DZ, got {stratum!r}")
    if repeats < 1:
        raise DomainError("repeats must be >= 1")
    arr = ds.mz if stratum == "MZ" else ds.dz
    n = arr.shape[0]
    if n < 8:
        raise DegenerateDataError(f"normality check needs at least 8 pairs, got {n}")
    if np.ptp(arr) == 0.0:
        raise DegenerateDataError("normality check on constant data")
    rng = np.random.default_rng(rng)
    rows = np.arange(n)
    ps = np.empty(repeats)
    for r in range(repeats):
        ps[r] = stats.shapiro(arr[rows, rng.integers(0, 2, n)]).pvalue
    return float(ps.mean())


@dataclass(frozen=True)
class VarianceDiagnostic:
    sigma2_m: float
    sigma2_d: float
    ratio: float


def variance_diagnostic(mz, dz, opts=None):
    """Variances from the MZ-only and DZ-only fits and their ratio ``sigma2_m / sigma2_d``.

    Descriptive only; no test of equality is attached.
    """
    s_m = fit_mz(mz).sigma2
    s_d = fit_dz_separate(dz, opts or FitOptions()).params.sigma2
    return VarianceDiagnostic(float(s_m), float(s_d), float(s_m / s_d))


# --- CSV input ---------------------------------------------------------------

def _parse_float(text, col, line):
    try:
        x = float(text)
    except (TypeError, ValueError):
        raise InputError(f"column {col!r}: not a number: {text!r}", line) from None
    if not math.isfinite(x):
        raise InputError(f"column {col!r}: non-finite value {text!r}", line)
    return x


def read_trait_tables(fh, name="<input>"):
    """Parse CSV text into one :class:`TraitTable` per trait, in order of first appearance."""
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError(f"{name}: empty file", 1) from None
    header = [h.strip().lower() for h in header]
    missing = [c for c in _REQUIRED if c not in header]
    if missing:
        raise InputError(f"missing column(s) {', '.join(missing)}; expected header "
                         f"{','.join(_REQUIRED)}[,trait]", 1)
    idx = {c: header.index(c) for c in header}
    has_trait = "trait" in idx
    rows = OrderedDict()
    seen = set()
    for line, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(header):
            raise InputError(f"expected {len(header)} fields, got {len(rec)}", line)
        rec = [f.strip() for f in rec]
        trait = rec[idx["trait"]] if has_trait else ""
        pid = rec[idx["pair_id"]]
        if not pid:
            raise InputError("empty pair_id", line)
        if (trait, pid) in seen:
            raise InputError(f"duplicate pair_id {pid!r}", line)
        seen.add((trait, pid))
        zyg = rec[idx["zygosity"]].upper()
        if zyg not in ZYGOSITIES:
            raise InputError(f"zygosity must be MZ or DZ, got {rec[idx['zygosity']]!r}", line)
        y1 = _parse_float(rec[idx["y1"]], "y1", line)
        y2 = _parse_float(rec[idx["y2"]], "y2", line)
        rows.setdefault(trait, []).append((pid, zyg, y1, y2, line))
    if not rows:
        raise InputError(f"{name}: no data rows")
    out = []
    for trait, rs in rows.items():
        out.append(TraitTable(
            trait=trait,
            pair_ids=tuple(r[0] for r in rs),
            zygosity=tuple(r[1] for r in rs),
            values=np.array([[r[2], r[3]] for r in rs], dtype=float),
            lines=tuple(r[4] for r in rs),
        ))
    return out


def _open_tables(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return read_trait_tables(fh, str(path))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def _to_dataset(table, frequencies, source):
    if frequencies:
        return probit_transform(table, source)
    return table.to_dataset(False, source)


def load_trait_file(path, frequencies=False):
    """All traits of a file as a list of :class:`TwinDataset`, in file order."""
    return [_to_dataset(t, frequencies, str(path)) for t in _open_tables(path)]


def load_twin_csv(path, frequencies=False, trait=None):
    """Load one dataset; ``trait`` selects among several traits in the file."""
    tables = _open_tables(path)
    if trait is not None:
        tables = [t for t in tables if t.trait == trait]
        if not tables:
            raise InputError(f"trait {trait!r} not found in {path}")
    elif len(tables) > 1:
        names = ", ".join(repr(t.trait) for t in tables)
        raise InputError(f"{path} holds several traits ({names}); choose one")
    return _to_dataset(tables[0], frequencies, str(path))


def write_dataset_csv(datasets, path_or_fh, values=None):
    """Write one or more datasets in the input schema with round-trip float text.

    A ``trait`` column is added when any dataset has a trait name. ``values``
    optionally replaces the pair values (same shapes), e.g. with frequencies.
    """
    if isinstance(datasets, TwinDataset):
        datasets = [datasets]
    with_trait = any(d.trait_name for d in datasets)
    own = not hasattr(path_or_fh, "write")
    fh = open(path_or_fh, "w", newline="", encoding="utf-8") if own else path_or_fh
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["trait"] if with_trait else []) + list(_REQUIRED))
        for k, d in enumerate(datasets):
            mz, dz = (d.mz, d.dz) if values is None else values[k]
            i = 0
            for zyg, arr in (("MZ", mz), ("DZ", dz)):
                for a, b in np.asarray(arr, dtype=float):
                    i += 1
                    pre = [d.trait_name] if with_trait else []
                    w.writerow(pre + [f"{zyg}{i}", zyg, repr(float(a)), repr(float(b))])
    finally:
        if own:
            fh.close()


# --- report output -----------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def flatten(record, prefix=""):
    """Nested dict to a flat dict with dotted keys."""
    out = OrderedDict()
    for k, v in record.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _rows_of(report):
    rows = report if isinstance(report, list) else report.get("rows", [report])
    return [flatten(_clean(r)) for r in rows]


def _table_cell(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    return _cell(v)


def format_report(report, fmt="json"):
    """Serialise a report (dict, or list of flat records) as ``json``, ``csv`` or ``table``.

    JSON keeps nesting, CSV and table flatten each record to dotted columns.
    Floats are written with round-trip precision (``table`` rounds for display)
    and non-finite values become null or empty.
    """
    if fmt == "json":
        return json.dumps(_clean(report), indent=2, allow_nan=False) + "\n"
    rows = _rows_of(report)
    cols = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])
        return buf.getvalue()
    if fmt == "table":
        cells = [[_table_cell(r.get(c)) for c in cols] for r in rows]
        width = [max([len(c)] + [len(row[j]) for row in cells]) for j, c in enumerate(cols)]
        lines = ["  ".join(c.rjust(width[j]) for j, c in enumerate(cols))]
        lines += ["  ".join(v.rjust(width[j]) for j, v in enumerate(row)) for row in cells]
        return "\n".join(lines) + "\n"
    raise DomainError(f"unknown format {fmt!r}")


def write_report(report, path_or_fh, fmt="json"):
    text = format_report(report, fmt)
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text)
    else:
        with open(path_or_fh, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
