"""Brute-force reference implementations for cross-checking the pipeline.

Everything here favors obviousness over speed: full distance scans, the
O(n^3) proximity-graph triple loop, per-vertex chain following, and saddle
extraction over a fully materialized edge list.  The streaming code never
calls into this module; it exists so small inputs can be verified
end-to-end (see the ``oracle`` CLI subcommand and the test suite).
"""

from __future__ import annotations

import numpy as np


def brute_knn(points, vertex, k):
    """k nearest neighbors by full scan, ties by ascending id."""
    points = np.asarray(points, dtype=np.float64)
    diff = points - points[vertex]
    d2 = (diff * diff).sum(axis=1)
    ids = np.arange(len(points))
    mask = ids != vertex
    ids, d2 = ids[mask], d2[mask]
    order = np.lexsort((ids, d2))
    take = min(k, len(ids))
    return ids[order][:take], d2[order][:take]


def lune_prunes(points, i, j, w, beta=1.0):
    """Does witness w prune edge (i, j)?  Closed two-ball beta-lune."""
    u, v, x = points[i], points[j], points[w]
    half = 0.5 * beta
    c1 = (1.0 - half) * u + half * v
    c2 = half * u + (1.0 - half) * v
    r2 = (half * half) * ((u - v) ** 2).sum()
    return ((x - c1) ** 2).sum() <= r2 and ((x - c2) ** 2).sum() <= r2


def brute_skeleton_edges(points, beta=1.0):
    """All beta-skeleton edges by the O(n^3) triple loop (vectorized over
    witnesses).  beta = 1 is the Gabriel graph."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    half = 0.5 * beta
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            u, v = points[i], points[j]
            c1 = (1.0 - half) * u + half * v
            c2 = half * u + (1.0 - half) * v
            r2 = (half * half) * ((u - v) ** 2).sum()
            d1 = ((points - c1) ** 2).sum(axis=1)
            d2 = ((points - c2) ** 2).sum(axis=1)
            inside = (d1 <= r2) & (d2 <= r2)
            inside[i] = inside[j] = False
            if not inside.any():
                edges.add((i, j))
    return edges


def adjacency_from_edges(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return [sorted(row) for row in adj]


def naive_steepest_links(points, f, adjacency, gradient="difference_over_distance"):
    """Per-vertex steepest ascending neighbor by direct enumeration."""
    points = np.asarray(points, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    n = len(f)
    link = np.arange(n, dtype=np.int64)
    for u in range(n):
        best = None
        for v in adjacency[u]:
            if f[v] <= f[u]:
                continue
            dist = float(np.sqrt(((points[v] - points[u]) ** 2).sum()))
            if dist == 0.0:
                continue
            g = (f[v] - f[u]) / dist if gradient == "difference_over_distance" else f[v] - f[u]
            key = (g, f[v], -v)
            if best is None or key > best[0]:
                best = (key, v)
        if best is not None:
            link[u] = best[1]
    return link


def naive_chain_labels(link):
    """Root of every vertex's chain by plain following (no compression)."""
    link = np.asarray(link, dtype=np.int64)
    labels = np.empty_like(link)
    for u in range(len(link)):
        cur = u
        for _ in range(len(link) + 1):
            nxt = link[cur]
            if nxt == cur:
                break
            cur = nxt
        else:
            raise RuntimeError("cycle in links")
        labels[u] = cur
    return labels


def materialized_saddles(edges, f, labels):
    """Saddle records from a fully materialized edge list: per adjacent
    maxima pair, the maximum over crossing edges of the lower endpoint."""
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
        if cur is None or value > cur[0] or (value == cur[0] and low < cur[1]):
            best[key] = (value, low)
    return {k: v for k, v in sorted(best.items())}


# -- CLI cross-checks --------------------------------------------------------------


def run_crosschecks(seed=20240801, sets=5, max_n=200, echo=print):
    """Compare the streaming pipeline against the brute-force references on
    random point sets.  Returns the number of failed checks."""
    from .neighbors import EdgeStreamConfig, SpatialIndex, stream_neighborhood
    from .table import FunctionSelector, SampleTable, synth_gaussian_mixture
    from .topology import pass1_links, pass2_saddles, resolve_labels

    rng = np.random.default_rng(seed)
    failures = 0
    for trial in range(sets):
        n = int(rng.integers(20, max_n + 1))
        d = int(rng.choice([2, 3, 5]))
        pts = rng.random((n, d))
        names = [f"x{i}" for i in range(d)]
        f = rng.random(n)
        table = SampleTable(names, pts, ["f"], f.reshape(-1, 1))
        index = SpatialIndex(table)
        config = EdgeStreamConfig(k=n - 1, beta=1.0, witness_mode="strict")

        want = brute_skeleton_edges(pts)
        got = set()
        for u in range(n):
            hood = stream_neighborhood(index, table, config, u)
            got.update((min(u, int(v)), max(u, int(v))) for v in hood.neighbors)
        ok = got == want
        failures += not ok
        echo(f"[{'ok' if ok else 'FAIL'}] gabriel n={n} d={d}: "
             f"{len(got)} edges vs brute {len(want)}")

        selector = FunctionSelector("f")
        links = pass1_links(table, index, config, selector)
        adj = adjacency_from_edges(n, want)
        want_links = naive_steepest_links(pts, f, adj)
        ok = np.array_equal(links.link, want_links)
        failures += not ok
        echo(f"[{'ok' if ok else 'FAIL'}] steepest links n={n}")

        seg = resolve_labels(links)
        ok = np.array_equal(seg.labels, naive_chain_labels(links.link))
        failures += not ok
        echo(f"[{'ok' if ok else 'FAIL'}] labels n={n}")

        got_saddles = {(r.a, r.b): (r.value, r.saddle)
                       for r in pass2_saddles(table, index, config, selector, seg)}
        want_saddles = materialized_saddles(want, f, seg.labels)
        ok = got_saddles == want_saddles
        failures += not ok
        echo(f"[{'ok' if ok else 'FAIL'}] saddles n={n}: {len(got_saddles)} pairs")

    # one synthetic mixture end to end
    table = synth_gaussian_mixture(2, [(0.3, 0.3), (0.7, 0.7)], [1.0, 0.7],
                                   [0.15, 0.15], 400, seed)
    index = SpatialIndex(table)
    config = EdgeStreamConfig(k=399, beta=1.0, witness_mode="strict")
    selector = FunctionSelector("f")
    seg = resolve_labels(pass1_links(table, index, config, selector))
    sizes = seg.segment_sizes()
    ok = sum(sizes.values()) == table.n_points
    failures += not ok
    echo(f"[{'ok' if ok else 'FAIL'}] mixture segmentation covers all points "
         f"({len(sizes)} segments)")
    return failures
