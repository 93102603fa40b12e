"""Point tables: ingestion, validation, bounds, synthetic test functions.

A :class:`SampleTable` holds N points in a d-dimensional domain plus m
measure columns (function values such as errors, yield, density), all
float64, stored column-major.  Tables are immutable after construction;
deriving a table with an extra measure column returns a new object.

Two on-disk formats are supported: CSV with a header row, and a packed
binary format (magic ``TDC1``) that round-trips bit-exactly.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

TABLE_MAGIC = b"TDC1"


class SchemaError(ValueError):
    """Wrong or missing columns, bad roles, or an unusable file layout."""


class IngestError(ValueError):
    """The input file cannot produce a valid table (e.g. every row rejected)."""


class SampleTable:
    """Immutable table of n points: d domain columns + m measure columns.

    Column names must be unique across both sets.  Rows containing non-finite
    values are never stored; construction raises if any slip through.
    """

    def __init__(self, domain_names, domain, measure_names, measures,
                 units=None, rejected_rows=0):
        domain = np.asarray(domain, dtype=np.float64)
        measures = np.asarray(measures, dtype=np.float64)
        if domain.ndim != 2 or measures.ndim != 2:
            raise SchemaError("domain and measures must be 2-D arrays")
        self._domain = np.asfortranarray(domain)
        self._measures = np.asfortranarray(measures)
        self.domain_names = tuple(str(s) for s in domain_names)
        self.measure_names = tuple(str(s) for s in measure_names)
        self.units = dict(units or {})
        self.rejected_rows = int(rejected_rows)

        n, d = self._domain.shape
        m = self._measures.shape[1]
        if n < 1 or d < 1 or m < 1:
            raise SchemaError(f"need n>=1, d>=1, m>=1 (got n={n}, d={d}, m={m})")
        if self._measures.shape[0] != n:
            raise SchemaError("domain and measure row counts differ")
        if len(self.domain_names) != d or len(self.measure_names) != m:
            raise SchemaError("column name count does not match column count")
        all_names = self.domain_names + self.measure_names
        if len(set(all_names)) != len(all_names):
            raise SchemaError("column names must be unique across domain and measure sets")
        if not np.isfinite(self._domain).all() or not np.isfinite(self._measures).all():
            raise IngestError("non-finite values present after ingestion")

    # -- shape -------------------------------------------------------------

    @property
    def n_points(self) -> int:
        return self._domain.shape[0]

    @property
    def d(self) -> int:
        return self._domain.shape[1]

    @property
    def m(self) -> int:
        return self._measures.shape[1]

    @property
    def column_names(self):
        return self.domain_names + self.measure_names

    # -- access ------------------------------------------------------------

    def domain_points(self) -> np.ndarray:
        """The (n, d) coordinate matrix (column-major; do not mutate)."""
        return self._domain

    def column(self, name: str) -> np.ndarray:
        """Any column (domain or measure) by name, as a 1-D view."""
        if name in self.domain_names:
            return self._domain[:, self.domain_names.index(name)]
        if name in self.measure_names:
            return self._measures[:, self.measure_names.index(name)]
        raise SchemaError(f"no column named {name!r}")

    def gather_points(self, ids) -> np.ndarray:
        """Row-gather helper: coordinates of the given vertex ids, C-order."""
        return np.ascontiguousarray(self._domain[np.asarray(ids, dtype=np.intp)])

    def with_measure(self, name: str, values: np.ndarray) -> "SampleTable":
        """A new table with one extra measure column appended."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape[0] != self.n_points:
            raise SchemaError("new measure length does not match table")
        measures = np.column_stack([self._measures, values])
        return SampleTable(self.domain_names, self._domain,
                           self.measure_names + (name,), measures,
                           units=self.units, rejected_rows=self.rejected_rows)

    def __repr__(self):
        return (f"SampleTable(n={self.n_points}, d={self.d}, m={self.m}, "
                f"domain={list(self.domain_names)}, measures={list(self.measure_names)})")


@dataclass(frozen=True)
class FunctionSelector:
    """Selects the active scalar function: a measure column plus an optional
    transform (``negate`` turns minima analysis into maxima analysis)."""

    column: str
    transform: str = "identity"

    def __post_init__(self):
        if self.transform not in ("identity", "negate"):
            raise SchemaError(f"unknown transform {self.transform!r}")

    def values(self, table: SampleTable) -> np.ndarray:
        if self.column not in table.measure_names:
            raise SchemaError(f"function column {self.column!r} is not a measure column")
        f = table.column(self.column)
        return -f if self.transform == "negate" else f


class DomainBounds:
    """Exact per-column (min, max), computed over the full table so that
    histogram grids are globally consistent across segments."""

    def __init__(self, names, lo, hi):
        self.names = tuple(names)
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if np.any(self.lo > self.hi):
            raise ValueError("min > max in bounds")

    def __getitem__(self, name):
        i = self.names.index(name)
        return float(self.lo[i]), float(self.hi[i])

    def __contains__(self, name):
        return name in self.names

    def __eq__(self, other):
        return (isinstance(other, DomainBounds) and self.names == other.names
                and np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi))


def compute_bounds(table: SampleTable) -> DomainBounds:
    """Exact per-column min/max over every domain and measure column."""
    names, lo, hi = [], [], []
    for name in table.column_names:
        col = table.column(name)
        names.append(name)
        lo.append(col.min())
        hi.append(col.max())
    return DomainBounds(names, lo, hi)


# -- ingestion ---------------------------------------------------------------


def load_table(path, format="csv", domain=None, measure=None, units=None) -> SampleTable:
    """Load a table from disk.

    ``format`` is ``csv`` or ``packed-binary``.  For CSV the schema (which
    header columns are domain vs measure) must be supplied; the binary format
    stores its own schema.  Rows containing NaN/Inf are dropped and counted in
    ``table.rejected_rows``.
    """
    if format == "csv":
        if not domain or not measure:
            raise SchemaError("CSV ingestion needs at least one domain and one measure column")
        return _load_csv(path, list(domain), list(measure), units)
    if format == "packed-binary":
        return _load_packed(path)
    raise SchemaError(f"unknown format {format!r}")


def _load_csv(path, domain_names, measure_names, units):
    try:
        raw = np.genfromtxt(path, delimiter=",", names=True, dtype=np.float64,
                            deletechars="", replace_space=" ", autostrip=True)
    except FileNotFoundError:
        raise
    except Exception as exc:  # malformed header / ragged rows
        raise IngestError(f"cannot parse CSV {path}: {exc}") from exc
    if raw.dtype.names is None:
        raise IngestError(f"{path} has no parseable header row")
    available = set(raw.dtype.names)
    missing = [c for c in domain_names + measure_names if c not in available]
    if missing:
        raise SchemaError(f"columns missing from {path}: {missing} (found {sorted(available)})")
    raw = np.atleast_1d(raw)
    cols = {c: np.asarray(raw[c], dtype=np.float64) for c in domain_names + measure_names}
    keep = np.ones(len(raw), dtype=bool)
    for c in cols.values():
        keep &= np.isfinite(c)
    rejected = int((~keep).sum())
    if rejected:
        log.warning("dropped %d row(s) with non-finite values from %s", rejected, path)
    if not keep.any():
        raise IngestError(f"all {len(raw)} rows of {path} were rejected")
    dom = np.column_stack([cols[c][keep] for c in domain_names])
    mea = np.column_stack([cols[c][keep] for c in measure_names])
    return SampleTable(domain_names, dom, measure_names, mea,
                       units=units, rejected_rows=rejected)


# Packed layout: magic "TDC1", little-endian u64 n, u32 d, u32 m,
# length-prefixed UTF-8 column names (domain then measure), then the
# column-major float64 arrays in the same order.

def _load_packed(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TABLE_MAGIC:
            raise IngestError(f"{path} is not a packed table (bad magic {magic!r})")
        n, d, m = struct.unpack("<QII", fh.read(16))
        names = []
        for _ in range(d + m):
            (ln,) = struct.unpack("<I", fh.read(4))
            names.append(fh.read(ln).decode("utf-8"))
        data = np.fromfile(fh, dtype="<f8", count=n * (d + m))
    if data.size != n * (d + m):
        raise IngestError(f"{path} truncated: expected {n * (d + m)} values, got {data.size}")
    cols = data.reshape(d + m, n)
    return SampleTable(names[:d], cols[:d].T, names[d:], cols[d:].T)


def save_table(table: SampleTable, path) -> None:
    """Write the packed-binary format; load(save(x)) is bit-identical."""
    with open(path, "wb") as fh:
        fh.write(TABLE_MAGIC)
        fh.write(struct.pack("<QII", table.n_points, table.d, table.m))
        for name in table.column_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        for name in table.column_names:
            fh.write(np.ascontiguousarray(table.column(name), dtype="<f8").tobytes())


# -- synthetic fixtures --------------------------------------------------------


def evaluate_gaussian_mixture(points, centers, amplitudes, widths) -> np.ndarray:
    """Closed-form mixture: f(x) = sum_i a_i * exp(-||x - c_i||^2 / w_i^2)."""
    points = np.asarray(points, dtype=np.float64)
    f = np.zeros(points.shape[0])
    for c, a, w in zip(centers, amplitudes, widths):
        delta = points - np.asarray(c, dtype=np.float64)
        f += a * np.exp(-(delta * delta).sum(axis=1) / (w * w))
    return f


def synth_gaussian_mixture(d, centers, amplitudes, widths, n, seed) -> SampleTable:
    """n points uniform in the unit cube with a Gaussian-mixture measure ``f``.

    Deterministic under ``seed``; the same call always yields a bit-identical
    table.  Used as the ground-truth fixture for the topology oracles.
    """
    centers = [np.asarray(c, dtype=np.float64) for c in centers]
    amplitudes = [float(a) for a in amplitudes]
    widths = [float(w) for w in widths]
    if not (len(centers) == len(amplitudes) == len(widths)) or len(centers) == 0:
        raise ValueError("centers, amplitudes, widths must have equal length >= 1")
    if any(w <= 0 for w in widths):
        raise ValueError("widths must be positive")
    if any(c.shape != (d,) for c in centers):
        raise ValueError(f"every center must have dimension {d}")
    rng = np.random.default_rng(seed)
    pts = rng.random((int(n), int(d)))
    f = evaluate_gaussian_mixture(pts, centers, amplitudes, widths)
    names = [f"x{i}" for i in range(d)]
    return SampleTable(names, pts, ["f"], f.reshape(-1, 1))
