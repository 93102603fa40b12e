"""Two-pass streaming extremum graph with persistence simplification.

Pass 1 walks the streamed pruned neighborhoods and keeps, per vertex, only
its steepest ascending link (difference over distance by default).  A
pointer-doubling label resolution then assigns every vertex to its local
maximum.  Pass 2 re-streams the same neighborhoods to find, for every pair
of adjacent maxima, the highest vertex on a crossing edge (the discrete
saddle).  Cancelling maxima in order of increasing persistence yields the
merge hierarchy that drives every downstream threshold query.

Plateau convention: equal function values never form an ascending link, so
each plateau vertex is its own maximum and is cancelled by zero-persistence
events first (ties broken by vertex id).
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field

import numpy as np

from .neighbors import EdgeStreamConfig, SpatialIndex, iter_pruned_edges

TOPOLOGY_MAGIC = b"TDT1"

GRADIENT_MODES = ("difference_over_distance", "raw_difference")


class CycleError(RuntimeError):
    """Steepest links formed a cycle, which the ascent tie rules forbid."""


@dataclass
class SteepestLinks:
    """Per-vertex steepest ascending link; local maxima link to themselves."""

    link: np.ndarray


@dataclass
class Segmentation:
    """Per-vertex label: the id of its local maximum."""

    labels: np.ndarray
    maxima: np.ndarray

    def segment_sizes(self):
        ids, counts = np.unique(np.asarray(self.labels), return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))


@dataclass(frozen=True)
class SaddleRecord:
    """Highest crossing vertex between the segments of maxima a < b."""

    a: int
    b: int
    saddle: int
    value: float


@dataclass(frozen=True)
class MergeEvent:
    victim: int
    survivor: int
    saddle: int
    persistence: float


@dataclass
class MergeHierarchy:
    """Persistence-ordered maximum cancellations plus the global f range."""

    events: list
    f_min: float
    f_max: float
    n_base_maxima: int

    @property
    def n_components(self) -> int:
        return self.n_base_maxima - len(self.events)

    @property
    def f_range(self) -> float:
        return self.f_max - self.f_min

    def normalized(self, persistence: float) -> float:
        rng = self.f_range
        return persistence / rng if rng > 0 else 0.0


@dataclass
class PersistenceCurve:
    """Surviving-maxima count as a step function of the normalized threshold."""

    thresholds: np.ndarray
    counts: np.ndarray

    def points(self):
        return list(zip(self.thresholds.tolist(), self.counts.tolist()))

    def count_at(self, t: float) -> int:
        i = np.searchsorted(self.thresholds, t, side="right") - 1
        return int(self.counts[max(i, 0)])


# -- pass 1: steepest links -----------------------------------------------------


def pass1_links(table, index: SpatialIndex, config: EdgeStreamConfig, selector,
                gradient: str = "difference_over_distance") -> SteepestLinks:
    """Steepest ascending link per vertex over the streamed pruned graph.

    Ties are broken by higher neighbor value, then lower id; a vertex with
    no strictly ascending neighbor links to itself.  Neighborhoods are
    generated chunk by chunk and discarded immediately.
    """
    if gradient not in GRADIENT_MODES:
        raise ValueError(f"gradient must be one of {GRADIENT_MODES}")
    config.validate_for(index.n)
    f = np.asarray(selector.values(table), dtype=np.float64)
    n = index.n
    best_g = np.full(n, -np.inf)
    best_f = np.full(n, -np.inf)
    best_v = np.full(n, -1, dtype=np.int64)
    for u, v, d2 in iter_pruned_edges(index, config):
        dist = np.sqrt(d2)
        ok = dist > 0.0
        targets, cands, dists = [u[ok]], [v[ok]], [dist[ok]]
        if config.symmetrize:
            targets.append(v[ok])
            cands.append(u[ok])
            dists.append(dist[ok])
        tgt = np.concatenate(targets)
        cnd = np.concatenate(cands)
        dst = np.concatenate(dists)
        rise = f[cnd] - f[tgt]
        asc = rise > 0.0
        tgt, cnd, dst, rise = tgt[asc], cnd[asc], dst[asc], rise[asc]
        if tgt.size == 0:
            continue
        g = rise / dst if gradient == "difference_over_distance" else rise
        _scatter_best(best_g, best_f, best_v, tgt, g, f[cnd], cnd)
    link = np.where(best_v >= 0, best_v, np.arange(n, dtype=np.int64))
    return SteepestLinks(link)


def _scatter_best(best_g, best_f, best_v, tgt, g, fc, cnd):
    # reduce duplicates inside the chunk, then compare-exchange globally;
    # the (gradient, neighbor value, -id) key makes any order equivalent
    order = np.lexsort((-cnd, fc, g, tgt))
    tgt, g, fc, cnd = tgt[order], g[order], fc[order], cnd[order]
    last = np.flatnonzero(np.r_[tgt[1:] != tgt[:-1], True])
    tgt, g, fc, cnd = tgt[last], g[last], fc[last], cnd[last]
    cur_g, cur_f, cur_v = best_g[tgt], best_f[tgt], best_v[tgt]
    better = (g > cur_g) | ((g == cur_g) & ((fc > cur_f) | ((fc == cur_f) & (cnd < cur_v))))
    upd = tgt[better]
    best_g[upd] = g[better]
    best_f[upd] = fc[better]
    best_v[upd] = cnd[better]


# -- label resolution -------------------------------------------------------------


def resolve_labels(links: SteepestLinks) -> Segmentation:
    """Root of every vertex's link chain via pointer doubling (short-cut
    union-find); output is independent of visit order by construction."""
    link = np.asarray(links.link, dtype=np.int64)
    n = link.size
    if n and (link.min() < 0 or link.max() >= n):
        raise ValueError("link ids out of range")
    labels = link.copy()
    rounds = int(np.ceil(np.log2(max(n, 2)))) + 2
    for _ in range(rounds):
        nxt = labels[labels]
        if np.array_equal(nxt, labels):
            break
        labels = nxt
    if not np.array_equal(labels[labels], labels):
        raise CycleError("steepest links contain a cycle (tie-break bug)")
    maxima = np.flatnonzero(link == np.arange(n, dtype=np.int64))
    return Segmentation(labels, maxima)


# -- pass 2: saddles ---------------------------------------------------------------


def pass2_saddles(table, index: SpatialIndex, config: EdgeStreamConfig, selector,
                  seg: Segmentation):
    """One SaddleRecord per adjacent maxima pair: the maximum over crossing
    edges of the lower endpoint's value (the discrete saddle vertex).
    Must be called with the same config as pass 1."""
    config.validate_for(index.n)
    f = np.asarray(selector.values(table), dtype=np.float64)
    labels = np.asarray(seg.labels, dtype=np.int64)
    pairs = {}
    for u, v, _d2 in iter_pruned_edges(index, config):
        la, lb = labels[u], labels[v]
        cross = la != lb
        if not cross.any():
            continue
        u, v, la, lb = u[cross], v[cross], la[cross], lb[cross]
        fu, fv = f[u], f[v]
        low_u = (fu < fv) | ((fu == fv) & (u < v))
        val = np.where(low_u, fu, fv)
        sdl = np.where(low_u, u, v)
        a = np.minimum(la, lb)
        b = np.maximum(la, lb)
        order = np.lexsort((-sdl, val, b, a))
        a, b, val, sdl = a[order], b[order], val[order], sdl[order]
        grp = np.flatnonzero(np.r_[(a[1:] != a[:-1]) | (b[1:] != b[:-1]), True])
        for i in grp:
            key = (int(a[i]), int(b[i]))
            cand = (float(val[i]), int(sdl[i]))
            cur = pairs.get(key)
            if cur is None or cand[0] > cur[0] or (cand[0] == cur[0] and cand[1] < cur[1]):
                pairs[key] = cand
    return [SaddleRecord(a, b, s, v) for (a, b), (v, s) in sorted(pairs.items())]


# -- persistence hierarchy -----------------------------------------------------------


def _combine(adj_row, nbr, value, saddle):
    cur = adj_row.get(nbr)
    if cur is None or value > cur[0] or (value == cur[0] and saddle < cur[1]):
        adj_row[nbr] = (value, saddle)


def build_hierarchy(seg: Segmentation, saddles, f) -> MergeHierarchy:
    """Cancel maxima in order of increasing persistence.

    A maximum is cancellable when it has a neighbor with strictly greater
    value (equal values rank by lower id, which is how plateau maxima die at
    persistence zero).  Its best saddle is the highest one to such a
    neighbor; the survivor sits across that saddle.  Merging combines
    adjacency rows by taking the pairwise maximum crossing value.
    """
    f = np.asarray(f, dtype=np.float64)
    maxima = [int(m) for m in seg.maxima]
    adj = {m: {} for m in maxima}
    for rec in saddles:
        _combine(adj[rec.a], rec.b, rec.value, rec.saddle)
        _combine(adj[rec.b], rec.a, rec.value, rec.saddle)

    def key(m):
        return (f[m], -m)

    def best(m):
        row = adj[m]
        top = None
        for nbr, (value, saddle) in row.items():
            if key(nbr) <= key(m):
                continue
            cand = (value, key(nbr), nbr, saddle)
            if top is None or cand[:2] > top[:2]:
                top = cand
        if top is None:
            return None
        value, _, survivor, saddle = top
        return (float(f[m] - value), survivor, saddle, value)

    heap = []
    for m in maxima:
        entry = best(m)
        if entry is not None:
            heapq.heappush(heap, (entry[0], m, entry[1], entry[2]))

    events = []
    alive = set(maxima)
    while heap:
        pers, victim, survivor, saddle = heapq.heappop(heap)
        if victim not in alive:
            continue
        cur = best(victim)
        if cur is None:
            continue
        if (cur[0], cur[1], cur[2]) != (pers, survivor, saddle):
            heapq.heappush(heap, (cur[0], victim, cur[1], cur[2]))
            continue
        events.append(MergeEvent(victim, survivor, saddle, pers))
        alive.discard(victim)
        touched = [survivor]
        for nbr, (value, sv) in adj[victim].items():
            del adj[nbr][victim]
            if nbr != survivor:
                _combine(adj[survivor], nbr, value, sv)
                _combine(adj[nbr], survivor, value, sv)
                touched.append(nbr)
        del adj[victim]
        for m in touched:
            entry = best(m)
            if entry is not None:
                heapq.heappush(heap, (entry[0], m, entry[1], entry[2]))

    return MergeHierarchy(events, float(f.min()), float(f.max()), len(maxima))


def merge_map_at(hierarchy: MergeHierarchy, base_maxima, t_norm: float):
    """Mapping base maximum id -> surviving maximum id at threshold t."""
    if not 0.0 <= t_norm <= 1.0:
        raise ValueError(f"threshold must be in [0, 1] (got {t_norm})")
    parent = {int(m): int(m) for m in np.asarray(base_maxima)}
    for ev in hierarchy.events:
        if hierarchy.normalized(ev.persistence) > t_norm:
            break  # events are persistence-ordered
        parent[ev.victim] = ev.survivor

    def find(m):
        root = m
        while parent[root] != root:
            root = parent[root]
        while parent[m] != root:
            parent[m], m = root, parent[m]
        return root

    return {m: find(m) for m in parent}


def segmentation_at(hierarchy: MergeHierarchy, base: Segmentation,
                    t_norm: float) -> Segmentation:
    """Apply every event with normalized persistence <= t and remap labels."""
    mapping = merge_map_at(hierarchy, base.maxima, t_norm)
    base_sorted = np.asarray(base.maxima, dtype=np.int64)
    lookup = np.asarray([mapping[int(m)] for m in base_sorted], dtype=np.int64)
    labels = lookup[np.searchsorted(base_sorted, np.asarray(base.labels, dtype=np.int64))]
    return Segmentation(labels, np.unique(lookup))


def persistence_curve(hierarchy: MergeHierarchy) -> PersistenceCurve:
    """Step-sampled surviving-maxima count, including endpoints t=0 and t=1."""
    norms = np.asarray([hierarchy.normalized(ev.persistence) for ev in hierarchy.events])
    thresholds = [0.0]
    counts = [hierarchy.n_base_maxima - int((norms <= 0.0).sum())]
    for t in np.unique(norms):
        if t <= 0.0:
            continue
        thresholds.append(float(t))
        counts.append(hierarchy.n_base_maxima - int((norms <= t).sum()))
    if thresholds[-1] < 1.0:
        thresholds.append(1.0)
        counts.append(hierarchy.n_components)
    return PersistenceCurve(np.asarray(thresholds), np.asarray(counts, dtype=np.int64))


# -- topology artifact (TDT1) ----------------------------------------------------------

_HEADER = struct.Struct("<4sIQQQQdd")  # magic, version, n, M, S, E, f_min, f_max
_VERSION = 1


@dataclass
class TopologyArtifact:
    """Everything the query side needs: base segmentation, saddles, hierarchy."""

    base: Segmentation
    saddles: list
    hierarchy: MergeHierarchy
    curve: PersistenceCurve = field(init=False)

    def __post_init__(self):
        self.curve = persistence_curve(self.hierarchy)


_SADDLE_DT = np.dtype([("a", "<i8"), ("b", "<i8"), ("s", "<i8"), ("v", "<f8")])
_EVENT_DT = np.dtype([("victim", "<i8"), ("survivor", "<i8"), ("saddle", "<i8"), ("p", "<f8")])


def save_topology(path, artifact: TopologyArtifact) -> None:
    base, hier = artifact.base, artifact.hierarchy
    labels = np.ascontiguousarray(base.labels, dtype="<i8")
    maxima = np.ascontiguousarray(base.maxima, dtype="<i8")
    sad = np.zeros(len(artifact.saddles), dtype=_SADDLE_DT)
    for i, rec in enumerate(artifact.saddles):
        sad[i] = (rec.a, rec.b, rec.saddle, rec.value)
    ev = np.zeros(len(hier.events), dtype=_EVENT_DT)
    for i, e in enumerate(hier.events):
        ev[i] = (e.victim, e.survivor, e.saddle, e.persistence)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TOPOLOGY_MAGIC, _VERSION, labels.size, maxima.size,
                              sad.size, ev.size, hier.f_min, hier.f_max))
        fh.write(labels.tobytes())
        fh.write(maxima.tobytes())
        fh.write(sad.tobytes())
        fh.write(ev.tobytes())


def load_topology(path, mmap_labels: bool = True) -> TopologyArtifact:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, n, n_max, n_sad, n_ev, f_min, f_max = _HEADER.unpack(head)
        if magic != TOPOLOGY_MAGIC:
            raise ValueError(f"{path} is not a topology artifact (magic {magic!r})")
        if version != _VERSION:
            raise ValueError(f"unsupported topology artifact version {version}")
        off = _HEADER.size
        if mmap_labels:
            labels = np.memmap(path, dtype="<i8", mode="r", offset=off, shape=(n,))
            fh.seek(off + 8 * n)
        else:
            labels = np.fromfile(fh, dtype="<i8", count=n)
        maxima = np.fromfile(fh, dtype="<i8", count=n_max)
        sad = np.fromfile(fh, dtype=_SADDLE_DT, count=n_sad)
        ev = np.fromfile(fh, dtype=_EVENT_DT, count=n_ev)
    base = Segmentation(labels, maxima)
    saddles = [SaddleRecord(int(r["a"]), int(r["b"]), int(r["s"]), float(r["v"])) for r in sad]
    events = [MergeEvent(int(r["victim"]), int(r["survivor"]), int(r["saddle"]), float(r["p"]))
              for r in ev]
    hier = MergeHierarchy(events, f_min, f_max, int(n_max))
    return TopologyArtifact(base, saddles, hier)
