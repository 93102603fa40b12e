"""Topology-aware datacubes: per-segment histograms on global bin grids.

One :class:`LeafCube` is precomputed per leaf segment of the simplified
hierarchy; any coarser partition is served by element-wise summation of its
leaves' cubes.  Only 1-D, 2-D and (optionally) (i, j, f) 3-D histograms are
stored, which is all the scatterplot, parallel-coordinates and contour
queries need.  Counts are unsigned 64-bit integers so merging is exact.

Binning: bin = floor((x - lo) / (hi - lo) * r) clamped to r - 1 at x = hi;
a zero-width axis maps everything to bin 0.  Contour counts use the bins
whose lower edge is at or above the query level.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

CUBE_MAGIC = b"TDQ1"


class CubeError(ValueError):
    pass


class MissingPairError(KeyError):
    """The requested axis pair was not precomputed."""


@dataclass(frozen=True)
class CubeConfig:
    """Which axes, pairs, and resolution the datacubes store.

    ``axes`` lists the histogram axes in order (all domain dims plus the
    active function column by default); ``pairs`` holds every stored 2-D
    grid (adjacent axis pairs for the PCP plus any requested scatter
    pairs); ``f_axis`` names the function axis used for contour queries.
    """

    resolution: int
    axes: tuple
    pairs: tuple
    f_axis: str
    include_f_triples: bool = False

    def __post_init__(self):
        if self.resolution < 2:
            raise CubeError(f"resolution must be >= 2 (got {self.resolution})")
        if self.f_axis not in self.axes:
            raise CubeError("f_axis must be listed in axes")
        for a, b in self.pairs:
            if a == b:
                raise CubeError(f"pair axes must be distinct (got {a!r})")
            if a not in self.axes or b not in self.axes:
                raise CubeError(f"pair ({a!r}, {b!r}) uses an unknown axis")

    @classmethod
    def default(cls, table, selector, resolution: int = 64, extra_pairs=(),
                include_f_triples: bool = False) -> "CubeConfig":
        axes = tuple(table.domain_names) + (selector.column,)
        pairs = tuple(zip(axes[:-1], axes[1:]))
        for pair in extra_pairs:
            pair = tuple(pair)
            if pair not in pairs and tuple(reversed(pair)) not in pairs:
                pairs = pairs + (pair,)
        return cls(resolution=resolution, axes=axes, pairs=pairs,
                   f_axis=selector.column, include_f_triples=include_f_triples)

    def pair_key(self, a, b):
        if (a, b) in self.pairs:
            return (a, b), False
        if (b, a) in self.pairs:
            return (b, a), True
        raise MissingPairError((a, b))


@dataclass(frozen=True)
class AxisGrid:
    """Global bin grid shared by every leaf: per-axis (lo, hi) + resolution."""

    axes: tuple
    lo: tuple
    hi: tuple
    resolution: int

    def bounds(self, axis):
        i = self.axes.index(axis)
        return self.lo[i], self.hi[i]

    def bin(self, axis, values):
        lo, hi = self.bounds(axis)
        values = np.asarray(values, dtype=np.float64)
        if hi <= lo:
            return np.zeros(values.shape, dtype=np.int64)
        b = np.floor((values - lo) / (hi - lo) * self.resolution).astype(np.int64)
        return np.clip(b, 0, self.resolution - 1)

    def level_bin(self, axis, level):
        """First bin whose lower edge is >= level (may equal resolution)."""
        lo, hi = self.bounds(axis)
        if hi <= lo:
            return 0 if level <= lo else self.resolution
        t = (float(level) - lo) / (hi - lo)
        b = int(np.ceil(t * self.resolution - 1e-9))
        return min(max(b, 0), self.resolution)

    def bin_edge(self, axis, b):
        lo, hi = self.bounds(axis)
        return lo + (hi - lo) * b / self.resolution


def make_grid(config: CubeConfig, bounds, selector) -> AxisGrid:
    """Axis grid from the global table bounds; the function axis is binned
    over the selector-transformed values."""
    lo, hi = [], []
    for axis in config.axes:
        a_lo, a_hi = bounds[axis]
        if axis == config.f_axis and selector.transform == "negate":
            a_lo, a_hi = -a_hi, -a_lo
        lo.append(a_lo)
        hi.append(a_hi)
    return AxisGrid(config.axes, tuple(lo), tuple(hi), config.resolution)


@dataclass
class LeafCube:
    """Histogram bundle of one leaf segment on the global grids."""

    leaf_id: int
    count: int
    config: CubeConfig
    grid: AxisGrid
    hist1d: dict
    hist2d: dict
    hist3d: dict
    f_suffix: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.f_suffix is None:
            f_hist = self.hist1d[self.config.f_axis]
            self.f_suffix = _suffix_sums(f_hist)


@dataclass
class AggregateCube(LeafCube):
    """Element-wise sum of leaf cubes; remembers the contributors."""

    leaf_ids: tuple = ()


def _suffix_sums(hist):
    suf = np.zeros(hist.size + 1, dtype=np.uint64)
    suf[:-1] = np.cumsum(hist[::-1], dtype=np.uint64)[::-1]
    return suf


def build_cubes(table, base_seg, config: CubeConfig, bounds, selector):
    """One LeafCube per segment of ``base_seg`` (dict leaf id -> cube)."""
    grid = make_grid(config, bounds, selector)
    r = config.resolution
    bins = {}
    for axis in config.axes:
        values = selector.values(table) if axis == config.f_axis else table.column(axis)
        bins[axis] = grid.bin(axis, values)
    labels = np.asarray(base_seg.labels, dtype=np.int64)
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    starts = np.flatnonzero(np.r_[True, sorted_labels[1:] != sorted_labels[:-1]])
    ends = np.r_[starts[1:], sorted_labels.size]
    leaves = {}
    f_axis = config.f_axis
    dom_axes = [a for a in config.axes if a != f_axis]
    for s, e in zip(starts, ends):
        rows = order[s:e]
        leaf = int(sorted_labels[s])
        h1 = {a: np.bincount(bins[a][rows], minlength=r).astype(np.uint64)
              for a in config.axes}
        h2 = {}
        for a, b in config.pairs:
            flat = bins[a][rows] * r + bins[b][rows]
            h2[(a, b)] = np.bincount(flat, minlength=r * r).astype(np.uint64).reshape(r, r)
        h3 = {}
        if config.include_f_triples:
            fb = bins[f_axis][rows]
            for a, b in config.pairs:
                if a == f_axis or b == f_axis:
                    continue
                flat = (bins[a][rows] * r + bins[b][rows]) * r + fb
                h3[(a, b)] = (np.bincount(flat, minlength=r ** 3)
                              .astype(np.uint64).reshape(r, r, r))
        leaves[leaf] = LeafCube(leaf, rows.size, config, grid, h1, h2, h3)
    return leaves


def merge_cubes(leaves) -> AggregateCube:
    """Element-wise sum; inputs must share one CubeConfig and grid."""
    leaves = list(leaves)
    if not leaves:
        raise CubeError("merge_cubes needs at least one leaf")
    first = leaves[0]
    for other in leaves[1:]:
        if other.config != first.config or other.grid != first.grid:
            raise CubeError("cannot merge cubes with different configs or grids")
    h1 = {a: sum(lf.hist1d[a] for lf in leaves) for a in first.hist1d}
    h2 = {p: sum(lf.hist2d[p] for lf in leaves) for p in first.hist2d}
    h3 = {p: sum(lf.hist3d[p] for lf in leaves) for p in first.hist3d}
    ids = tuple(sorted(lf.leaf_id for lf in leaves))
    return AggregateCube(ids[0], int(sum(lf.count for lf in leaves)), first.config,
                         first.grid, h1, h2, h3, leaf_ids=ids)


def hist2d(cube, axes):
    """Raw r x r counts for an axis pair (transposed if stored reversed)."""
    key, flipped = cube.config.pair_key(*axes)
    grid = cube.hist2d[key]
    return grid.T.copy() if flipped else grid


def pcp_pairs(cube, axis_order):
    """The bivariate grids between adjacent axes of the given order;
    grid[a][b] counts samples in bin a of the left axis, bin b of the right."""
    return [hist2d(cube, (a, b)) for a, b in zip(axis_order[:-1], axis_order[1:])]


def contour_counts(cube, levels):
    """Sample counts above each function level, from the f suffix sums.
    A level counts the bins whose lower edge is at or above it."""
    out = []
    for level in levels:
        b = cube.grid.level_bin(cube.config.f_axis, level)
        out.append(int(cube.f_suffix[b]))
    return out


# -- linked selection --------------------------------------------------------------


@dataclass(frozen=True)
class SelectionPredicate:
    """Conjunction of closed per-axis ranges (domain axes and/or the f axis)."""

    ranges: tuple  # ((axis, lo, hi), ...) sorted by axis

    @classmethod
    def from_dict(cls, d) -> "SelectionPredicate":
        ranges = []
        for axis, (lo, hi) in sorted(d.items()):
            lo, hi = float(lo), float(hi)
            if lo > hi:
                raise CubeError(f"range for {axis!r} has lo > hi")
            ranges.append((axis, lo, hi))
        return cls(tuple(ranges))

    def mask(self, table, selector) -> np.ndarray:
        keep = np.ones(table.n_points, dtype=bool)
        for axis, lo, hi in self.ranges:
            values = selector.values(table) if axis == selector.column else table.column(axis)
            keep &= (values >= lo) & (values <= hi)
        return keep


@dataclass
class SelectionResult:
    predicate: SelectionPredicate
    selected_by_segment: dict        # seg id -> selected count
    above_by_segment: dict           # seg id -> np.ndarray aligned with its levels
    levels_by_segment: dict
    scatter: np.ndarray = None
    scatter_pair: tuple = None


def selection_scan(table, labels, selector, predicate: SelectionPredicate,
                   levels_by_segment, grid: AxisGrid,
                   scatter_pair=None, scope=None) -> SelectionResult:
    """One streaming pass over the raw samples evaluating the predicate.

    Returns, per segment, the selected count and the selected count above
    each of its contour levels.  Above-counts use the same bin-threshold
    convention as contour_counts so fractions never exceed 1.  Optionally
    also bins the selected rows of the in-scope segments onto a 2-D
    scatter grid.
    """
    labels = np.asarray(labels, dtype=np.int64)
    keep = predicate.mask(table, selector)
    sel_rows = np.flatnonzero(keep)
    sel_labels = labels[sel_rows]
    f_axis = selector.column
    f_bins = grid.bin(f_axis, selector.values(table)[sel_rows])
    order = np.argsort(sel_labels, kind="stable")
    sel_labels, f_bins = sel_labels[order], f_bins[order]
    starts = np.flatnonzero(np.r_[True, sel_labels[1:] != sel_labels[:-1]])
    ends = np.r_[starts[1:], sel_labels.size]
    groups = {int(sel_labels[s]): (s, e) for s, e in zip(starts, ends)}
    r = grid.resolution
    selected_by_segment, above_by_segment = {}, {}
    for seg, levels in levels_by_segment.items():
        span = groups.get(int(seg))
        if span is None:
            selected_by_segment[seg] = 0
            above_by_segment[seg] = np.zeros(len(levels), dtype=np.int64)
            continue
        s, e = span
        selected_by_segment[seg] = int(e - s)
        suf = _suffix_sums(np.bincount(f_bins[s:e], minlength=r))
        above_by_segment[seg] = np.asarray(
            [int(suf[grid.level_bin(f_axis, lv)]) for lv in levels], dtype=np.int64)
    scatter = None
    if scatter_pair is not None:
        a, b = scatter_pair
        rows = sel_rows
        if scope is not None:
            rows = sel_rows[np.isin(labels[sel_rows], np.asarray(list(scope)))]
        va = selector.values(table) if a == f_axis else table.column(a)
        vb = selector.values(table) if b == f_axis else table.column(b)
        flat = grid.bin(a, va[rows]) * r + grid.bin(b, vb[rows])
        scatter = np.bincount(flat, minlength=r * r).astype(np.uint64).reshape(r, r)
    return SelectionResult(predicate, selected_by_segment, above_by_segment,
                           dict(levels_by_segment), scatter, scatter_pair)


# -- leaf-level choice ---------------------------------------------------------------


def choose_base_threshold(hierarchy, max_leaves: int = 64) -> float:
    """Smallest event threshold leaving at most ``max_leaves`` segments.
    Thresholds below this would require a cube rebuild."""
    excess = hierarchy.n_base_maxima - max_leaves
    if excess <= 0:
        return 0.0
    ev = hierarchy.events[excess - 1]
    return hierarchy.normalized(ev.persistence)


# -- cube artifact (TDQ1) --------------------------------------------------------------

_CUBE_HEADER = struct.Struct("<4sIIIIBxxxId")
# magic, version, r, n_axes, n_pairs, triples flag, f_axis index, t_base
_CUBE_VERSION = 1


def save_cubes(path, leaves, t_base: float) -> None:
    """Packed cube artifact with a per-leaf byte-offset table."""
    leaves = [leaves[k] for k in sorted(leaves)]
    if not leaves:
        raise CubeError("no leaves to save")
    config, grid = leaves[0].config, leaves[0].grid
    r = config.resolution
    head = _CUBE_HEADER.pack(CUBE_MAGIC, _CUBE_VERSION, r, len(config.axes),
                             len(config.pairs), int(config.include_f_triples),
                             config.axes.index(config.f_axis), float(t_base))
    meta = bytearray()
    for i, axis in enumerate(config.axes):
        raw = axis.encode("utf-8")
        meta += struct.pack("<I", len(raw)) + raw
        meta += struct.pack("<dd", grid.lo[i], grid.hi[i])
    for a, b in config.pairs:
        meta += struct.pack("<II", config.axes.index(a), config.axes.index(b))
    meta += struct.pack("<Q", len(leaves))

    blocks = []
    for lf in leaves:
        parts = [struct.pack("<QQ", lf.leaf_id, lf.count)]
        for axis in config.axes:
            parts.append(np.ascontiguousarray(lf.hist1d[axis], dtype="<u8").tobytes())
        for pair in config.pairs:
            parts.append(np.ascontiguousarray(lf.hist2d[pair], dtype="<u8").tobytes())
        if config.include_f_triples:
            for pair in config.pairs:
                if pair[0] != config.f_axis and pair[1] != config.f_axis:
                    parts.append(np.ascontiguousarray(lf.hist3d[pair], dtype="<u8").tobytes())
        blocks.append(b"".join(parts))

    offset0 = len(head) + len(meta) + 8 * len(leaves)
    offsets, pos = [], offset0
    for blk in blocks:
        offsets.append(pos)
        pos += len(blk)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(bytes(meta))
        fh.write(np.asarray(offsets, dtype="<u8").tobytes())
        for blk in blocks:
            fh.write(blk)


def load_cubes(path):
    """Load a cube artifact: (leaves dict, config, grid, t_base)."""
    with open(path, "rb") as fh:
        head = fh.read(_CUBE_HEADER.size)
        magic, version, r, n_axes, n_pairs, triples, f_idx, t_base = _CUBE_HEADER.unpack(head)
        if magic != CUBE_MAGIC:
            raise CubeError(f"{path} is not a cube artifact (magic {magic!r})")
        if version != _CUBE_VERSION:
            raise CubeError(f"unsupported cube artifact version {version}")
        axes, lo, hi = [], [], []
        for _ in range(n_axes):
            (ln,) = struct.unpack("<I", fh.read(4))
            axes.append(fh.read(ln).decode("utf-8"))
            a_lo, a_hi = struct.unpack("<dd", fh.read(16))
            lo.append(a_lo)
            hi.append(a_hi)
        pairs = []
        for _ in range(n_pairs):
            ia, ib = struct.unpack("<II", fh.read(8))
            pairs.append((axes[ia], axes[ib]))
        (n_leaves,) = struct.unpack("<Q", fh.read(8))
        offsets = np.fromfile(fh, dtype="<u8", count=n_leaves)
        config = CubeConfig(resolution=r, axes=tuple(axes), pairs=tuple(pairs),
                            f_axis=axes[f_idx], include_f_triples=bool(triples))
        grid = AxisGrid(tuple(axes), tuple(lo), tuple(hi), r)
        leaves = {}
        for off in offsets:
            fh.seek(int(off))
            leaf_id, count = struct.unpack("<QQ", fh.read(16))
            h1 = {a: np.fromfile(fh, dtype="<u8", count=r) for a in axes}
            h2 = {p: np.fromfile(fh, dtype="<u8", count=r * r).reshape(r, r) for p in pairs}
            h3 = {}
            if triples:
                for p in pairs:
                    if p[0] != config.f_axis and p[1] != config.f_axis:
                        h3[p] = np.fromfile(fh, dtype="<u8", count=r ** 3).reshape(r, r, r)
            leaves[int(leaf_id)] = LeafCube(int(leaf_id), int(count), config, grid, h1, h2, h3)
    return leaves, config, grid, float(t_base)
