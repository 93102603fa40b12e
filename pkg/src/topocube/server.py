"""HTTP/JSON query service over precomputed artifacts.

All heavy computation happens offline in the CLI stages; the service only
merges leaf cubes, assembles spine geometry, and runs selection scans.
Every numeric payload equals the corresponding library call on the same
artifacts.  Responses are deterministic for identical requests.
"""

from __future__ import annotations

import time

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware

from . import __version__
from .cubes import (MissingPairError, SelectionPredicate, hist2d, merge_cubes,
                    pcp_pairs, selection_scan)
from .spine import build_spine, shade_contours
from .topology import merge_map_at


def _bad(msg):
    raise HTTPException(status_code=400, detail=str(msg))


def _missing(msg):
    raise HTTPException(status_code=404, detail=str(msg))


class QueryEngine:
    """Query-side state: loaded artifacts plus per-threshold caches.

    The caches only hold deterministic values, so concurrent recomputation
    of the same key is benign (last writer wins with an identical value).
    """

    def __init__(self, project):
        self.project = project
        self._merge_maps = {}
        self._spines = {}
        self._labels_at = {}
        self._selections = {}

    # -- threshold plumbing ---------------------------------------------------

    def check_t(self, t) -> float:
        try:
            t = float(t)
        except (TypeError, ValueError):
            _bad(f"t must be a number (got {t!r})")
        if not 0.0 <= t <= 1.0:
            _bad(f"t must be in [0, 1] (got {t})")
        if t < self.project.t_base - 1e-12:
            raise HTTPException(
                status_code=409,
                detail=f"t={t} is below the cube base threshold {self.project.t_base}; "
                       f"rebuild cubes with a lower t_base")
        return t

    def merge_map(self, t):
        hit = self._merge_maps.get(t)
        if hit is None:
            hit = merge_map_at(self.project.hierarchy, self.project.artifact.base.maxima, t)
            self._merge_maps[t] = hit
        return hit

    def segments_at(self, t):
        mapping = self.merge_map(t)
        groups = {}
        for leaf_id in self.project.leaves:
            groups.setdefault(int(mapping[leaf_id]), []).append(leaf_id)
        return groups

    def resolve_scope(self, t, segments_param):
        groups = self.segments_at(t)
        if segments_param in (None, ""):
            return groups, sorted(groups)
        scope = []
        for token in str(segments_param).split(","):
            try:
                seg = int(token)
            except ValueError:
                _bad(f"segment id {token!r} is not an integer")
            if seg not in groups:
                _missing(f"unknown segment {seg} at t={t}")
            scope.append(seg)
        return groups, scope

    def aggregate(self, t, scope):
        groups = self.segments_at(t)
        leaf_ids = [lid for seg in scope for lid in groups[seg]]
        return merge_cubes([self.project.leaves[lid] for lid in leaf_ids])

    def spine(self, t):
        hit = self._spines.get(t)
        if hit is None:
            hit = build_spine(self.project.table, self.project.selector,
                              self.project.artifact, self.project.leaves, t)
            self._spines[t] = hit
        return hit

    def labels_at(self, t):
        hit = self._labels_at.get(t)
        if hit is None:
            mapping = self.merge_map(t)
            base = self.project.artifact.base
            base_sorted = np.asarray(base.maxima, dtype=np.int64)
            lookup = np.asarray([mapping[int(m)] for m in base_sorted], dtype=np.int64)
            hit = lookup[np.searchsorted(base_sorted, np.asarray(base.labels, dtype=np.int64))]
            self._labels_at[t] = hit
        return hit

    def selection(self, t, predicate, scope, scatter_pair):
        key = (t, predicate.ranges, tuple(scope), scatter_pair)
        hit = self._selections.get(key)
        if hit is None:
            spine = self.spine(t)
            started = time.perf_counter()
            result = selection_scan(self.project.table, self.labels_at(t),
                                    self.project.selector, predicate,
                                    spine.levels_by_segment, self.project.grid,
                                    scatter_pair=scatter_pair, scope=scope)
            hit = (result, time.perf_counter() - started)
            self._selections[key] = hit
        return hit


def create_app(project) -> FastAPI:
    engine = QueryEngine(project)
    app = FastAPI(title="topocube", version=__version__)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.engine = engine
    table, grid = project.table, project.grid

    @app.get("/v1/meta")
    def meta():
        return {
            "engine_version": __version__,
            "n_points": table.n_points,
            "d": table.d,
            "m": table.m,
            "domain": list(table.domain_names),
            "measures": list(table.measure_names),
            "function": {"column": project.selector.column,
                         "transform": project.selector.transform},
            "axes": list(grid.axes),
            "bounds": {axis: [grid.lo[i], grid.hi[i]]
                       for i, axis in enumerate(grid.axes)},
            "resolution": grid.resolution,
            "t_base": project.t_base,
            "pairs": [list(p) for p in project.cube_config.pairs],
        }

    @app.get("/v1/persistence-curve")
    def curve():
        c = project.artifact.curve
        return {"thresholds": c.thresholds.tolist(), "counts": c.counts.tolist()}

    @app.get("/v1/segments")
    def segments(t: str):
        tv = engine.check_t(t)
        groups = engine.segments_at(tv)
        out = []
        for seg in sorted(groups):
            agg = engine.aggregate(tv, [seg])
            out.append({"id": seg, "count": agg.count,
                        "f_max": float(project.selector.values(table)[seg]),
                        "leaves": [int(x) for x in groups[seg]]})
        return {"t": tv, "segments": out}

    @app.get("/v1/spine")
    def spine(t: str):
        tv = engine.check_t(t)
        return engine.spine(tv).to_json()

    @app.get("/v1/hist2d")
    def hist2d_endpoint(t: str, x: str, y: str, segments: str = None):
        tv = engine.check_t(t)
        _, scope = engine.resolve_scope(tv, segments)
        agg = engine.aggregate(tv, scope)
        try:
            grid_counts = hist2d(agg, (x, y))
        except MissingPairError:
            _missing(f"pair ({x}, {y}) is not precomputed")
        return {"t": tv, "x": x, "y": y, "segments": scope,
                "resolution": grid.resolution,
                "counts": grid_counts.astype(np.int64).tolist()}

    @app.get("/v1/pcp")
    def pcp(t: str, order: str = None, segments: str = None):
        tv = engine.check_t(t)
        _, scope = engine.resolve_scope(tv, segments)
        axis_order = list(grid.axes) if order in (None, "") else order.split(",")
        for axis in axis_order:
            if axis not in grid.axes:
                _missing(f"unknown axis {axis!r}")
        if len(axis_order) < 2:
            _bad("order needs at least two axes")
        agg = engine.aggregate(tv, scope)
        try:
            grids = pcp_pairs(agg, axis_order)
        except MissingPairError as exc:
            _missing(f"pair {exc.args[0]} is not precomputed")
        return {"t": tv, "order": axis_order, "segments": scope,
                "resolution": grid.resolution,
                "grids": [g.astype(np.int64).tolist() for g in grids]}

    @app.post("/v1/selection")
    async def selection(request: Request):
        body = await request.json()
        tv = engine.check_t(body.get("t"))
        pred_dict = body.get("predicate") or {}
        for axis in pred_dict:
            if axis not in grid.axes:
                _missing(f"unknown axis {axis!r} in predicate")
        try:
            predicate = SelectionPredicate.from_dict(pred_dict)
        except ValueError as exc:
            _bad(exc)
        segments_param = body.get("segments")
        if isinstance(segments_param, list):
            segments_param = ",".join(str(s) for s in segments_param)
        _, scope = engine.resolve_scope(tv, segments_param)
        scatter = body.get("scatter")
        scatter_pair = None
        if scatter is not None:
            if (not isinstance(scatter, (list, tuple))) or len(scatter) != 2:
                _bad("scatter must be a pair of axis names")
            scatter_pair = (str(scatter[0]), str(scatter[1]))
            try:
                project.cube_config.pair_key(*scatter_pair)
            except MissingPairError:
                _missing(f"pair {scatter_pair} is not precomputed")
        result, scan_seconds = engine.selection(tv, predicate, scope, scatter_pair)
        spine_graph = engine.spine(tv)
        shaded = shade_contours(spine_graph.contours, result)
        segs_payload = {}
        for seg in scope:
            segs_payload[str(seg)] = {
                "selected": result.selected_by_segment.get(seg, 0),
                "contours": [{"level": c.level, "count": c.count,
                              "fraction": c.fraction}
                             for c in shaded if c.owner == seg],
            }
        payload = {"t": tv, "segments": segs_payload,
                   "scan_ms": scan_seconds * 1000.0}
        if result.scatter is not None:
            payload["scatter"] = {"x": scatter_pair[0], "y": scatter_pair[1],
                                  "counts": result.scatter.astype(np.int64).tolist()}
        return payload

    return app


def serve(project, host: str = "127.0.0.1", port: int = 8080):
    import uvicorn

    uvicorn.run(create_app(project), host=host, port=port, log_level="info")
