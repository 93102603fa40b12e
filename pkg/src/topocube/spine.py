"""Topological spine: a 2-D presentation of the extremum graph.

Extrema and their surviving saddles at a persistence threshold are laid out
by classical multidimensional scaling on their high-dimensional Euclidean
distances, refined by stress majorization.  Around every extremum, nested
contour rings are sized by the count of segment samples above each level,
with display radius proportional to count^(2/d) so ring area tracks the
high-dimensional "volume" the samples cover.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cubes import contour_counts, merge_cubes
from .topology import merge_map_at

_STRESS_ITERATIONS = 200
_STRESS_RTOL = 1e-6


@dataclass
class SpineNode:
    kind: str              # "extremum" | "saddle"
    vertex: int
    position: np.ndarray   # high-d coordinates
    f: float
    xy: np.ndarray = None


@dataclass
class SpineContour:
    owner: int             # extremum id
    level: float
    count: int
    radius: float
    fraction: float = None


@dataclass
class SpineArc:
    saddle_vertex: int
    extrema: tuple


@dataclass
class SpineGraph:
    t: float
    nodes: list
    arcs: list
    contours: list
    scale: float
    stress: float
    domain_dim: int
    levels_by_segment: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "nodes": [{"id": int(n.vertex), "kind": n.kind,
                       "xy": [float(n.xy[0]), float(n.xy[1])], "f": float(n.f)}
                      for n in self.nodes],
            "arcs": [{"saddle": int(a.saddle_vertex),
                      "extrema": [int(a.extrema[0]), int(a.extrema[1])]}
                     for a in self.arcs],
            "contours": [{"owner": int(c.owner), "level": float(c.level),
                          "count": int(c.count), "radius": float(c.radius),
                          "fraction": None if c.fraction is None else float(c.fraction)}
                         for c in self.contours],
            "scale": float(self.scale),
            "stress": float(self.stress),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# -- layout -----------------------------------------------------------------------


def _classical_mds(dist):
    m = dist.shape[0]
    sq = dist * dist
    j = np.eye(m) - np.full((m, m), 1.0 / m)
    b = -0.5 * j @ sq @ j
    vals, vecs = np.linalg.eigh(b)
    idx = np.argsort(vals)[::-1][:2]
    vals = np.clip(vals[idx], 0.0, None)
    xy = vecs[:, idx] * np.sqrt(vals)[None, :]
    if xy.shape[1] < 2:
        xy = np.column_stack([xy, np.zeros(m)])
    return xy


def _stress(xy, dist):
    delta = xy[:, None, :] - xy[None, :, :]
    cur = np.sqrt((delta * delta).sum(-1))
    return float(((cur - dist) ** 2).sum() / 2.0)


def _normalize_layout(xy):
    """Translation/rotation/sign normalization for run-to-run determinism."""
    xy = xy - xy.mean(axis=0, keepdims=True)
    if xy.shape[0] > 1:
        u, s, vt = np.linalg.svd(xy, full_matrices=False)
        xy = xy @ vt.T
    for axis in range(xy.shape[1]):
        col = xy[:, axis]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            xy[:, axis] = -col
    return xy


def layout_spine(positions) -> tuple:
    """2-D embedding of the node positions: classical MDS on pairwise
    Euclidean distances, refined by stress majorization.  Deterministic;
    returns (xy array, residual stress)."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    m = positions.shape[0]
    if m == 0:
        raise ValueError("layout needs at least one node")
    if m == 1:
        return np.zeros((1, 2)), 0.0
    delta = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((delta * delta).sum(-1))
    xy = _classical_mds(dist)
    xy, stress = _majorize_guttman(xy, dist)
    return _normalize_layout(xy), stress


def _majorize_guttman(xy, dist, iterations=_STRESS_ITERATIONS, rtol=_STRESS_RTOL):
    """SMACOF with unit weights: x <- (1/m) B(x) x."""
    m = xy.shape[0]
    prev = _stress(xy, dist)
    for _ in range(iterations):
        delta = xy[:, None, :] - xy[None, :, :]
        cur = np.sqrt((delta * delta).sum(-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(cur > 0, dist / cur, 0.0)
        np.fill_diagonal(ratio, 0.0)
        b_diag = ratio.sum(axis=1)
        xy_new = (b_diag[:, None] * xy - ratio @ xy) / m
        stress = _stress(xy_new, dist)
        if prev > 0 and abs(prev - stress) / prev < rtol:
            xy, prev = xy_new, stress
            break
        xy, prev = xy_new, stress
    return xy, prev


# -- contours ---------------------------------------------------------------------


def contour_radius(count: int, domain_dim: int, scale: float = 1.0) -> float:
    """Display radius of a contour ring: scale * count^(2/d)."""
    return float(scale * count ** (2.0 / domain_dim))


def build_contours(cubes_by_extremum, f_by_extremum, saddle_lo_by_extremum,
                   domain_dim: int, levels_per_extremum: int = 5,
                   display_radius: float = 60.0):
    """Nested contours per extremum.

    Levels are spaced uniformly (exclusive of endpoints) between the
    extremum's highest adjacent saddle value (or its segment's lowest
    occupied function value when it has none) and the extremum value.
    The global scale maps the largest ring to ``display_radius``.
    """
    raw = []
    for ext, cube in cubes_by_extremum.items():
        hi = f_by_extremum[ext]
        lo = saddle_lo_by_extremum.get(ext)
        if lo is None:
            occupied = np.flatnonzero(cube.hist1d[cube.config.f_axis])
            lo = cube.grid.bin_edge(cube.config.f_axis, int(occupied[0])) if occupied.size else hi
        if not hi > lo:
            continue
        step = (hi - lo) / (levels_per_extremum + 1)
        for j in range(1, levels_per_extremum + 1):
            level = lo + j * step
            count = contour_counts(cube, [level])[0]
            if count > 0:
                raw.append((ext, level, count))
    if not raw:
        return [], 1.0
    max_size = max(contour_radius(c, domain_dim) for _, _, c in raw)
    scale = display_radius / max_size if max_size > 0 else 1.0
    contours = [SpineContour(ext, level, count,
                             contour_radius(count, domain_dim, scale))
                for ext, level, count in raw]
    return contours, scale


def shade_contours(contours, selection) -> list:
    """Selected fraction per contour from a selection_scan result
    (0/0 counts as 0).  Returns new contour objects."""
    shaded = []
    for c in contours:
        levels = selection.levels_by_segment.get(c.owner)
        fraction = 0.0
        if levels is not None:
            match = [i for i, lv in enumerate(levels) if lv == c.level]
            if not match:
                raise ValueError(f"selection lacks level {c.level} for extremum {c.owner}")
            above = int(selection.above_by_segment[c.owner][match[0]])
            fraction = (above / c.count) if c.count > 0 else 0.0
        shaded.append(SpineContour(c.owner, c.level, c.count, c.radius, fraction))
    return shaded


# -- assembly ---------------------------------------------------------------------


def surviving_pairs(hierarchy, base_maxima, saddles, t: float):
    """Adjacency between surviving maxima at t: pair -> (value, saddle vertex),
    obtained by max-combining base saddle records through the merge map."""
    mapping = merge_map_at(hierarchy, base_maxima, t)
    pairs = {}
    for rec in saddles:
        ra, rb = mapping[rec.a], mapping[rec.b]
        if ra == rb:
            continue
        key = (min(ra, rb), max(ra, rb))
        cur = pairs.get(key)
        if cur is None or rec.value > cur[0] or (rec.value == cur[0] and rec.saddle < cur[1]):
            pairs[key] = (rec.value, rec.saddle)
    return pairs, mapping


def build_spine(table, selector, artifact, leaves, t: float,
                levels_per_extremum: int = 5, display_radius: float = 60.0) -> SpineGraph:
    """The spine at threshold t from a topology artifact and leaf cubes."""
    hier = artifact.hierarchy
    f = selector.values(table)
    pairs, mapping = surviving_pairs(hier, artifact.base.maxima, artifact.saddles, t)
    extrema = sorted(set(mapping.values()))
    cube_groups = {}
    for leaf_id in leaves:
        cube_groups.setdefault(mapping[leaf_id], []).append(leaf_id)
    cubes_by_ext = {ext: merge_cubes([leaves[i] for i in ids])
                    for ext, ids in cube_groups.items()}

    nodes = [SpineNode("extremum", int(m), table.gather_points([m])[0], float(f[m]))
             for m in extrema]
    arcs = []
    for (a, b), (value, saddle) in sorted(pairs.items()):
        nodes.append(SpineNode("saddle", int(saddle), table.gather_points([saddle])[0],
                               float(value)))
        arcs.append(SpineArc(int(saddle), (int(a), int(b))))

    xy, stress = layout_spine(np.stack([n.position for n in nodes]))
    for node, pos in zip(nodes, xy):
        node.xy = pos

    saddle_lo = {}
    for (a, b), (value, _) in pairs.items():
        saddle_lo[a] = max(saddle_lo.get(a, -np.inf), value)
        saddle_lo[b] = max(saddle_lo.get(b, -np.inf), value)
    f_by_ext = {int(m): float(f[m]) for m in extrema}
    contours, scale = build_contours(cubes_by_ext, f_by_ext, saddle_lo,
                                     domain_dim=table.d,
                                     levels_per_extremum=levels_per_extremum,
                                     display_radius=display_radius)
    levels_by_segment = {}
    for c in contours:
        levels_by_segment.setdefault(c.owner, []).append(c.level)
    for levels in levels_by_segment.values():
        levels.sort()
    return SpineGraph(t, nodes, arcs, contours, scale, stress, table.d,
                      levels_by_segment)
