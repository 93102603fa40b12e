"""Spatial index, streaming empty-region edge pruning, density, saturation.

The neighborhood graph is never materialized globally.  Each vertex's
candidate edges come from an exact k-nearest-neighbor query (ties broken by
ascending vertex id), are pruned by the beta-lune empty-region test, and are
discarded as soon as the consumer has seen them.

For beta = 1 (Gabriel) the pruning verdict of a candidate edge (u, v) is
exact with respect to the *whole* point set: any point inside the closed
ball with diameter uv is strictly closer to u than v is, hence already
present in u's candidate prefix.  Larger candidate counts can therefore only
add edges, which is what the saturation analysis measures.

Witness convention: the lune is closed (a witness on the boundary prunes),
matching the classical Gabriel-graph definition.  Point sets with exactly
duplicated coordinates are only handled by the generic (slow) path.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

DEFAULT_LEAF_SIZE = 32
_QUERY_PAD = 8          # extra neighbors fetched to absorb distance ties
_CHUNK_CELL_BUDGET = 24_000_000  # float64 cells for the per-chunk K*K Gram blocks

WITNESS_MODES = ("strict", "relaxed")


class ConfigError(ValueError):
    pass


def _worker_count():
    env = os.environ.get("TDA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring invalid TDA_THREADS=%r", env)
    return -1  # scipy: all cores


@dataclass(frozen=True)
class EdgeStreamConfig:
    """Parameters of the streaming empty-region pruning.

    k: candidate count per vertex; beta >= 1 selects the lune shape
    (1.0 = Gabriel); witness_mode 'relaxed' additionally requires a witness
    to be strictly closer to both endpoints than they are to each other;
    symmetrize unions each vertex's candidates with the reverse k-NN edges.
    """

    k: int
    beta: float = 1.0
    witness_mode: str = "relaxed"
    symmetrize: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1 (got {self.k})")
        if self.beta < 1.0:
            raise ConfigError(f"beta must be >= 1 (got {self.beta})")
        if self.witness_mode not in WITNESS_MODES:
            raise ConfigError(f"witness_mode must be one of {WITNESS_MODES}")

    def validate_for(self, n_points: int):
        if self.k >= n_points:
            raise ConfigError(f"k={self.k} must be < n_points={n_points}")


@dataclass
class PrunedNeighborhood:
    """Surviving neighbors of one vertex, in (distance, id) candidate order."""

    vertex: int
    neighbors: np.ndarray
    distances: np.ndarray


class SpatialIndex:
    """Exact k-NN index over a table's domain points (kd-tree backed).

    All queries are deterministic: results are ordered by (distance,
    vertex id) and distance ties at the k-th position are resolved by
    ascending id, with the candidate pool grown until that cut is certain.
    """

    def __init__(self, table, leaf_size: int = DEFAULT_LEAF_SIZE):
        self._points = np.ascontiguousarray(table.domain_points())
        self.n, self.d = self._points.shape
        self._tree = cKDTree(self._points, leafsize=leaf_size) if self.n > 1 else None
        self._radius_cache = {}

    @property
    def points(self) -> np.ndarray:
        return self._points

    def effective_k(self, k: int) -> int:
        return min(int(k), self.n - 1)

    # -- queries -------------------------------------------------------------

    def knn(self, vertex: int, k: int):
        """The k nearest neighbors of a vertex: (ids, distances), self
        excluded, sorted ascending by distance with ties by ascending id.
        k is clamped to n-1 (a 1-point table yields an empty list)."""
        if k < 1:
            raise ConfigError(f"k must be >= 1 (got {k})")
        ids, d2 = self.knn_batch(np.asarray([vertex]), k)
        return ids[0], np.sqrt(d2[0])

    def knn_batch(self, vertices, k: int):
        """Batched exact k-NN: (ids (m, k_eff), squared distances (m, k_eff))."""
        vertices = np.asarray(vertices, dtype=np.intp)
        k_eff = self.effective_k(k)
        if k_eff <= 0:
            return (np.empty((len(vertices), 0), dtype=np.int64),
                    np.empty((len(vertices), 0), dtype=np.float64))
        q = min(k_eff + 1 + _QUERY_PAD, self.n)
        ids, d2, ok = self._query_block(vertices, k_eff, q)
        bad = np.flatnonzero(~ok)
        for row in bad:  # rare: distance ties straddling the fetched horizon
            ids[row], d2[row] = self._query_exhaustive(int(vertices[row]), k_eff, q)
        return ids, d2

    def _query_block(self, vertices, k_eff, q):
        pts = self._points[vertices]
        dist, idx = self._tree.query(pts, k=q, workers=_worker_count())
        idx = idx.astype(np.int64, copy=False)
        # recompute squared distances with our own kernel so ordering and
        # tie detection never depend on scipy's internals
        diff = self._points[idx] - pts[:, None, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        self_mask = idx == vertices[:, None].astype(np.int64)
        has_self = self_mask.any(axis=1)
        d2 = np.where(self_mask, np.inf, d2)  # self sorts last
        idx = np.where(self_mask, self.n, idx)
        rows = np.repeat(np.arange(len(vertices)), q)
        order = np.lexsort((idx.ravel(), d2.ravel(), rows))
        idx_s = idx.ravel()[order].reshape(len(vertices), q)
        d2_s = d2.ravel()[order].reshape(len(vertices), q)
        kept_ids = idx_s[:, :k_eff]
        kept_d2 = d2_s[:, :k_eff]
        if q >= self.n:
            ok = has_self.copy()
        else:
            cut = kept_d2[:, -1]
            tail = d2_s[:, q - 2]  # last real candidate (self occupies q-1)
            ok = has_self & (tail > cut * (1.0 + 1e-9))
        return kept_ids, kept_d2, ok

    def _query_exhaustive(self, vertex, k_eff, q):
        while True:
            q = min(max(2 * q, q + 8), self.n)
            ids, d2, ok = self._query_block(np.asarray([vertex], dtype=np.intp), k_eff, q)
            if ok[0] or q >= self.n:
                return ids[0], d2[0]

    def ball(self, vertex: int, radius: float):
        return np.asarray(
            self._tree.query_ball_point(self._points[vertex], radius), dtype=np.int64)

    # -- reverse-edge support --------------------------------------------------

    def kth_radius(self, k: int, chunk_rows: int = 8192):
        """Per-vertex squared distance of the k-th selected neighbor plus the
        largest id chosen among distance ties at that radius.  Together these
        answer "is u among v's k nearest" without storing any adjacency."""
        k_eff = self.effective_k(k)
        if k_eff in self._radius_cache:
            return self._radius_cache[k_eff]
        r2 = np.empty(self.n, dtype=np.float64)
        tie_cut = np.empty(self.n, dtype=np.int64)
        for lo in range(0, self.n, chunk_rows):
            hi = min(lo + chunk_rows, self.n)
            ids, d2 = self.knn_batch(np.arange(lo, hi), k_eff)
            r2[lo:hi] = d2[:, -1]
            tied = d2 == d2[:, -1:]
            tie_cut[lo:hi] = np.where(tied, ids, -1).max(axis=1)
        self._radius_cache[k_eff] = (r2, tie_cut)
        return r2, tie_cut

    def reverse_candidates(self, vertex: int, k: int):
        """All vertices whose k-NN list contains ``vertex``."""
        r2, tie_cut = self.kth_radius(k)
        r_max = float(np.sqrt(r2.max()))
        cand = self.ball(vertex, r_max * (1.0 + 1e-12))
        cand = cand[cand != vertex]
        if cand.size == 0:
            return cand
        diff = self._points[cand] - self._points[vertex]
        d2 = np.einsum("ij,ij->i", diff, diff)
        member = (d2 < r2[cand]) | ((d2 == r2[cand]) & (vertex <= tie_cut[cand]))
        return cand[member]


# -- empty-region (beta-lune) test ---------------------------------------------


def lune_centers_radius(u, v, beta: float):
    """Centers and radius of the two balls whose intersection is the beta-lune."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    half = 0.5 * beta
    c1 = (1.0 - half) * u + half * v
    c2 = half * u + (1.0 - half) * v
    r = half * float(np.sqrt(((u - v) ** 2).sum()))
    return c1, c2, r


def empty_region_keep(u, v, witnesses, beta: float = 1.0,
                      witness_mode: str = "strict") -> bool:
    """True iff no witness lies inside the closed beta-lune of (u, v).

    For beta = 1 the lune is the closed ball with diameter uv, so a witness
    on the boundary prunes the edge (the classical Gabriel convention).
    Witnesses coinciding with u or v are ignored.
    """
    if witness_mode not in WITNESS_MODES:
        raise ConfigError(f"witness_mode must be one of {WITNESS_MODES}")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = np.atleast_2d(np.asarray(witnesses, dtype=np.float64))
    if w.shape[0] == 0:
        return True
    c1, c2, r = lune_centers_radius(u, v, beta)
    if r == 0.0:
        raise ConfigError("empty_region_keep requires u != v")
    d1 = ((w - c1) ** 2).sum(axis=1)
    d2 = ((w - c2) ** 2).sum(axis=1)
    inside = (d1 <= r * r) & (d2 <= r * r)
    inside &= ~np.all(w == u, axis=1)
    inside &= ~np.all(w == v, axis=1)
    if witness_mode == "relaxed":
        duv = ((u - v) ** 2).sum()
        inside &= (((w - u) ** 2).sum(axis=1) < duv) & (((w - v) ** 2).sum(axis=1) < duv)
    return not bool(inside.any())


def _keep_gabriel_rows(origin_pts, nbr_pts, nbr_d2):
    """Vectorized beta=1 verdicts for rows of candidates sorted by (d2, id).

    Witnesses for edge (u, v_j) are the strictly closer candidates of the
    same row; at beta = 1 this equals the full-table witness set.  The prune
    condition in coordinates relative to u reduces to |w|^2 <= w . v.
    """
    rel = nbr_pts - origin_pts[:, None, :]
    gram = np.matmul(rel, rel.swapaxes(1, 2))
    w2 = nbr_d2[:, :, None]          # witness axis i
    closer = nbr_d2[:, :, None] < nbr_d2[:, None, :]
    pruned = ((w2 <= gram) & closer).any(axis=1)
    return ~pruned


def _keep_general_row(points, vertex, cand_ids, cand_d2, knn_of, beta, mode):
    """Generic verdicts for one vertex (any beta): witnesses are drawn from
    knn(u) union knn(v) for each candidate edge."""
    u = points[vertex]
    keep = np.empty(len(cand_ids), dtype=bool)
    own = set(int(x) for x in cand_ids)
    for j, v_id in enumerate(cand_ids):
        wit_ids = own.union(int(x) for x in knn_of(int(v_id)))
        wit_ids.discard(int(v_id))
        wit_ids.discard(int(vertex))
        wit = points[np.fromiter(wit_ids, dtype=np.int64)] if wit_ids else np.empty((0, points.shape[1]))
        keep[j] = empty_region_keep(u, points[v_id], wit, beta=beta, witness_mode=mode)
    return keep


def _edge_chunk_rows(k_eff: int) -> int:
    return int(np.clip(_CHUNK_CELL_BUDGET // max(k_eff * k_eff, 1), 16, 4096))


def iter_pruned_edges(index: SpatialIndex, config: EdgeStreamConfig, chunk_rows=None):
    """Stream kept *forward* candidate edges (u, v in knn(u)) in chunks.

    Yields (u_ids, v_ids, squared distances).  Every surviving undirected
    edge of the symmetrized graph appears at least once (in one or both
    directions); consumers must reduce idempotently.  No chunk's storage
    survives the iteration.
    """
    k_eff = index.effective_k(config.k)
    if k_eff <= 0:
        return
    chunk_rows = chunk_rows or _edge_chunk_rows(k_eff)
    fast = config.beta == 1.0
    for lo in range(0, index.n, chunk_rows):
        hi = min(lo + chunk_rows, index.n)
        ids = np.arange(lo, hi)
        nbr, d2 = index.knn_batch(ids, k_eff)
        if fast:
            keep = _keep_gabriel_rows(index.points[ids], index.points[nbr], d2)
        else:
            knn_of = _KnnMemo(index, k_eff)
            keep = np.empty_like(nbr, dtype=bool)
            for i, vid in enumerate(ids):
                keep[i] = _keep_general_row(index.points, int(vid), nbr[i], d2[i],
                                            knn_of, config.beta, config.witness_mode)
        rows, cols = np.nonzero(keep)
        yield ids[rows], nbr[rows, cols], d2[rows, cols]


class _KnnMemo:
    """Small per-chunk memo so the generic path batches repeat lookups."""

    def __init__(self, index, k_eff):
        self._index = index
        self._k = k_eff
        self._seen = {}

    def __call__(self, vertex: int):
        hit = self._seen.get(vertex)
        if hit is None:
            ids, _ = self._index.knn_batch(np.asarray([vertex]), self._k)
            hit = ids[0]
            if len(self._seen) > 4096:
                self._seen.clear()
            self._seen[vertex] = hit
        return hit


def stream_neighborhood(index: SpatialIndex, table, config: EdgeStreamConfig,
                        vertex: int) -> PrunedNeighborhood:
    """Candidates of one vertex (k-NN, symmetrized per config), pruned by the
    empty-region test.  Nothing global is retained between calls."""
    config.validate_for(index.n)
    k_eff = index.effective_k(config.k)
    vertex = int(vertex)
    nbr, d2 = index.knn_batch(np.asarray([vertex]), k_eff)
    nbr, d2 = nbr[0], d2[0]
    if config.beta == 1.0:
        keep = _keep_gabriel_rows(index.points[[vertex]], index.points[nbr[None, :]], d2[None, :])[0]
    else:
        knn_of = _KnnMemo(index, k_eff)
        keep = _keep_general_row(index.points, vertex, nbr, d2, knn_of,
                                 config.beta, config.witness_mode)
    out_ids = [nbr[keep]]
    out_d2 = [d2[keep]]
    if config.symmetrize:
        rev = index.reverse_candidates(vertex, k_eff)
        rev = rev[~np.isin(rev, nbr)]
        if rev.size:
            r_ids, r_d2 = _reverse_verdicts(index, config, vertex, rev, k_eff)
            out_ids.append(r_ids)
            out_d2.append(r_d2)
    ids = np.concatenate(out_ids)
    dd2 = np.concatenate(out_d2)
    order = np.lexsort((ids, dd2))
    return PrunedNeighborhood(vertex, ids[order], np.sqrt(dd2[order]))


def _reverse_verdicts(index, config, vertex, rev, k_eff):
    """Verdicts for reverse-only candidate edges (w, vertex), evaluated from
    w's side with the identical arithmetic as w's own forward pass (so the
    final relation is exactly symmetric)."""
    kept_ids, kept_d2 = [], []
    if config.beta == 1.0:
        nbr, d2 = index.knn_batch(rev, k_eff)
        keep = _keep_gabriel_rows(index.points[rev], index.points[nbr], d2)
        for i, w in enumerate(rev):
            col = np.flatnonzero(nbr[i] == vertex)
            if col.size and keep[i, col[0]]:
                kept_ids.append(w)
                kept_d2.append(d2[i, col[0]])
    else:
        knn_of = _KnnMemo(index, k_eff)
        for w in rev:
            nbr_w = knn_of(int(w))
            diff = index.points[nbr_w] - index.points[w]
            d2_w = np.einsum("ij,ij->i", diff, diff)
            keep = _keep_general_row(index.points, int(w), nbr_w, d2_w, knn_of,
                                     config.beta, config.witness_mode)
            col = np.flatnonzero(nbr_w == vertex)
            if col.size and keep[col[0]]:
                kept_ids.append(w)
                kept_d2.append(d2_w[col[0]])
    return (np.asarray(kept_ids, dtype=np.int64),
            np.asarray(kept_d2, dtype=np.float64))


# -- density -------------------------------------------------------------------


def knn_density(index: SpatialIndex, table, k: int = 20, chunk_rows: int = 8192):
    """Per-point density: the inverse of the mean distance to the k nearest
    neighbors.  Duplicate points (zero mean distance) are reported and
    assigned the maximum finite density in the table."""
    if index.effective_k(k) < 1:
        raise ConfigError("knn_density needs at least 2 points")
    dens = np.empty(index.n, dtype=np.float64)
    for lo in range(0, index.n, chunk_rows):
        hi = min(lo + chunk_rows, index.n)
        _, d2 = index.knn_batch(np.arange(lo, hi), k)
        mean_d = np.sqrt(d2).mean(axis=1)
        with np.errstate(divide="ignore"):
            dens[lo:hi] = 1.0 / mean_d
    dup = ~np.isfinite(dens)
    if dup.any():
        finite = dens[~dup]
        if finite.size == 0:
            raise ConfigError("every point is duplicated; density undefined")
        log.warning("%d duplicate point(s): density set to table maximum", int(dup.sum()))
        dens[dup] = finite.max()
    return dens


def append_knn_density(index, table, k: int = 20, column: str = "density"):
    return table.with_measure(column, knn_density(index, table, k=k))


# -- saturation analysis ---------------------------------------------------------


def saturation_curve(index: SpatialIndex, table, k_values, beta: float = 1.0,
                     witness_mode: str = "relaxed"):
    """Total surviving undirected edge count of the symmetric pruned graph
    for each candidate count k (each edge counted once).

    The k grid shares one pass at max(k): a candidate edge's verdict only
    involves strictly closer witnesses, so it is identical under every k
    that includes the edge.
    """
    k_values = [int(k) for k in k_values]
    if any(b <= a for a, b in zip(k_values, k_values[1:])):
        raise ConfigError("k_values must be strictly ascending")
    if k_values[-1] >= index.n:
        raise ConfigError("max k must be < n_points")
    if beta != 1.0:
        return [(k, _count_edges_general(index, k, beta, witness_mode)) for k in k_values]

    k_max = k_values[-1]
    # pass A: per-vertex k-th radii for every requested k (membership tests)
    nk = len(k_values)
    r2_all = np.empty((index.n, nk), dtype=np.float64)
    tie_all = np.empty((index.n, nk), dtype=np.int64)
    chunk = _edge_chunk_rows(k_max)
    for lo in range(0, index.n, chunk):
        hi = min(lo + chunk, index.n)
        ids, d2 = index.knn_batch(np.arange(lo, hi), k_max)
        for j, k in enumerate(k_values):
            r2_all[lo:hi, j] = d2[:, k - 1]
            tied = d2[:, :k] == d2[:, k - 1:k]
            tie_all[lo:hi, j] = np.where(tied, ids[:, :k], -1).max(axis=1)
    # pass B: verdicts once at k_max, counted per k with dedup by membership
    counts = np.zeros(nk, dtype=np.int64)
    for lo in range(0, index.n, chunk):
        hi = min(lo + chunk, index.n)
        vids = np.arange(lo, hi)
        nbr, d2 = index.knn_batch(vids, k_max)
        keep = _keep_gabriel_rows(index.points[vids], index.points[nbr], d2)
        for j, k in enumerate(k_values):
            rows, cols = np.nonzero(keep[:, :k])
            u = vids[rows]
            v = nbr[rows, cols]
            e_d2 = d2[rows, cols]
            mutual = (e_d2 < r2_all[v, j]) | ((e_d2 == r2_all[v, j]) & (u <= tie_all[v, j]))
            counts[j] += int(((u < v) | ~mutual).sum())
    return list(zip(k_values, counts.tolist()))


def _count_edges_general(index, k, beta, witness_mode):
    config = EdgeStreamConfig(k=k, beta=beta, witness_mode=witness_mode)
    r2, tie_cut = index.kth_radius(k)
    total = 0
    for u, v, d2 in iter_pruned_edges(index, config):
        mutual = (d2 < r2[v]) | ((d2 == r2[v]) & (u <= tie_cut[v]))
        total += int(((u < v) | ~mutual).sum())
    return total


def dump_edges(index: SpatialIndex, table, config: EdgeStreamConfig, path):
    """Debug helper: write surviving undirected edges as little-endian
    (u32, u32) pairs.  Never used by the topology passes."""
    config.validate_for(index.n)
    k_eff = index.effective_k(config.k)
    r2, tie_cut = index.kth_radius(k_eff)
    count = 0
    with open(path, "wb") as fh:
        for u, v, d2 in iter_pruned_edges(index, config):
            mutual = (d2 < r2[v]) | ((d2 == r2[v]) & (u <= tie_cut[v]))
            emit = (u < v) | ~mutual
            lo = np.minimum(u[emit], v[emit]).astype("<u4")
            hi = np.maximum(u[emit], v[emit]).astype("<u4")
            fh.write(np.column_stack([lo, hi]).tobytes())
            count += int(emit.sum())
    return count
