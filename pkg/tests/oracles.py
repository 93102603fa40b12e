"""Independent brute-force references used by the test suite.

These are written from scratch against the definitions, not by reusing the
library's code paths.  In particular the Gabriel check uses the squared
distance characterization (a witness w prunes (u, v) iff
d2(u,w) + d2(v,w) <= d2(u,v)), which never constructs lune geometry at all,
and the general beta test re-derives the two ball centers on its own.
"""

import math

import numpy as np


def squared_distance_matrix(points):
    points = np.asarray(points, dtype=np.float64)
    diff = points[:, None, :] - points[None, :, :]
    return (diff * diff).sum(-1)


def scan_knn(points, vertex, k):
    """k nearest by full scan; ties by ascending id."""
    points = np.asarray(points, dtype=np.float64)
    d2 = ((points - points[vertex]) ** 2).sum(axis=1)
    ids = np.arange(len(points))
    keep = ids != vertex
    ids, d2 = ids[keep], d2[keep]
    order = np.lexsort((ids, d2))
    take = min(k, len(ids))
    return ids[order][:take], d2[order][:take]


def gabriel_edges(points):
    """Gabriel graph by the O(n^3) triple loop, via the Pythagorean
    characterization: keep (i, j) iff no w has d2(i,w) + d2(j,w) <= d2(i,j)."""
    d2 = squared_distance_matrix(points)
    n = len(d2)
    edges = set()
    for i in range(n):
        pruned = d2[i][:, None] + d2 <= d2[i][None, :]  # pruned[w, j]
        pruned[i, :] = False
        pruned[np.arange(n), np.arange(n)] = False
        dead = pruned.any(axis=0)
        for j in range(i + 1, n):
            if not dead[j]:
                edges.add((i, j))
    return edges


def beta_lune_contains(u, v, w, beta):
    """Closed beta-lune membership, re-derived: the two balls have radius
    beta*|uv|/2 and centers at u + (beta/2)(v-u) and v + (beta/2)(u-v)."""
    u, v, w = (np.asarray(x, dtype=np.float64) for x in (u, v, w))
    duv = math.sqrt(((u - v) ** 2).sum())
    r = beta * duv / 2.0
    ca = u + (beta / 2.0) * (v - u)
    cb = v + (beta / 2.0) * (u - v)
    da = math.sqrt(((w - ca) ** 2).sum())
    db = math.sqrt(((w - cb) ** 2).sum())
    return da * da <= r * r and db * db <= r * r


def beta_skeleton_edges(points, beta):
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            kept = True
            for w in range(n):
                if w in (i, j):
                    continue
                if beta_lune_contains(points[i], points[j], points[w], beta):
                    kept = False
                    break
            if kept:
                edges.add((i, j))
    return edges


def naive_links(points, f, adjacency, gradient="difference_over_distance"):
    """Steepest ascending neighbor by direct per-vertex enumeration."""
    points = np.asarray(points, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    link = np.arange(len(f), dtype=np.int64)
    for u in range(len(f)):
        best_key, best_v = None, None
        for v in adjacency[u]:
            if f[v] <= f[u]:
                continue
            dist = math.sqrt(float(((points[v] - points[u]) ** 2).sum()))
            if dist == 0.0:
                continue
            g = (f[v] - f[u]) / dist if gradient == "difference_over_distance" else f[v] - f[u]
            key = (g, f[v], -v)
            if best_key is None or key > best_key:
                best_key, best_v = key, v
        if best_v is not None:
            link[u] = best_v
    return link


def chain_labels(link):
    """Label each vertex by plainly following its chain (no compression)."""
    link = np.asarray(link, dtype=np.int64)
    out = np.empty_like(link)
    for u in range(len(link)):
        cur = u
        steps = 0
        while link[cur] != cur:
            cur = link[cur]
            steps += 1
            if steps > len(link):
                raise RuntimeError("cycle")
        out[u] = cur
    return out


def saddles_from_edges(edges, f, labels):
    """Per adjacent maxima pair: the best crossing edge (max of the lower
    endpoint's value; value ties resolved by lower saddle vertex id)."""
    f = np.asarray(f, dtype=np.float64)
    best = {}
    for u, v in edges:
        la, lb = int(labels[u]), int(labels[v])
        if la == lb:
            continue
        low = u if (f[u] < f[v]) or (f[u] == f[v] and u < v) else v
        value = float(min(f[u], f[v]))
        key = (min(la, lb), max(la, lb))
        cur = best.get(key)
        if cur is None or (value, -low) > (cur[0], -cur[1]):
            best[key] = (value, low)
    return best


def edges_from_neighborhoods(index, table, config, stream_fn):
    """Materialize the full undirected pruned edge set via the per-vertex API."""
    edges = set()
    for u in range(table.n_points):
        hood = stream_fn(index, table, config, u)
        for v in hood.neighbors:
            edges.add((min(u, int(v)), max(u, int(v))))
    return edges


def direct_bins(values, lo, hi, r):
    """Scalar-loop reimplementation of the binning rule."""
    out = []
    for x in values:
        if hi <= lo:
            out.append(0)
            continue
        b = math.floor((x - lo) / (hi - lo) * r)
        out.append(min(max(b, 0), r - 1))
    return np.asarray(out, dtype=np.int64)


def direct_hist2d(xs, ys, lo_x, hi_x, lo_y, hi_y, r):
    grid = np.zeros((r, r), dtype=np.int64)
    bx = direct_bins(xs, lo_x, hi_x, r)
    by = direct_bins(ys, lo_y, hi_y, r)
    for a, b in zip(bx, by):
        grid[a, b] += 1
    return grid
