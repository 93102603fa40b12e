"""Project manifests and the offline pipeline stages behind the CLI.

A project directory holds the packed table (``TDC1``), the topology
artifact (``TDT1``), the cube artifact (``TDQ1``) and a ``manifest.json``
tying them together with content hashes.  Artifact files contain no
timestamps, so re-running a stage with identical inputs reproduces them
byte for byte; the manifest records creation times separately.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .cubes import (CubeConfig, build_cubes, choose_base_threshold, load_cubes,
                    make_grid, save_cubes)
from .neighbors import EdgeStreamConfig, SpatialIndex
from .table import FunctionSelector, compute_bounds, load_table, save_table
from .topology import (TopologyArtifact, build_hierarchy, load_topology,
                       pass1_links, pass2_saddles, resolve_labels, save_topology,
                       segmentation_at)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class ProjectError(ValueError):
    pass


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class ProjectPaths:
    root: Path

    @property
    def manifest(self) -> Path:
        return self.root / MANIFEST_NAME

    @property
    def table(self) -> Path:
        return self.root / "table.tdc"

    @property
    def topology(self) -> Path:
        return self.root / "topology.tdt"

    @property
    def cubes(self) -> Path:
        return self.root / "cubes.tdq"


def load_manifest(root) -> dict:
    paths = ProjectPaths(Path(root))
    if not paths.manifest.exists():
        return {"engine_version": __version__, "created": {}, "artifacts": {}}
    with open(paths.manifest) as fh:
        return json.load(fh)


def save_manifest(root, manifest) -> None:
    paths = ProjectPaths(Path(root))
    paths.root.mkdir(parents=True, exist_ok=True)
    with open(paths.manifest, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _record_artifact(manifest, name, path):
    manifest.setdefault("artifacts", {})[name] = {
        "path": Path(path).name,
        "sha256": file_sha256(path),
    }
    manifest.setdefault("created", {})[name] = _now()
    manifest["engine_version"] = __version__


# -- pipeline stages ----------------------------------------------------------------


def stage_ingest(input_path, fmt, domain, measure, units, out_dir) -> dict:
    table = load_table(input_path, format=fmt, domain=domain, measure=measure, units=units)
    paths = ProjectPaths(Path(out_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    save_table(table, paths.table)
    manifest = load_manifest(out_dir)
    manifest["dataset"] = {
        "source": str(input_path),
        "format": "packed-binary",
        "rejected_rows": table.rejected_rows,
        "n_points": table.n_points,
        "domain": list(table.domain_names),
        "measures": list(table.measure_names),
    }
    _record_artifact(manifest, "table", paths.table)
    save_manifest(out_dir, manifest)
    log.info("ingested %d points (%d rejected) -> %s",
             table.n_points, table.rejected_rows, paths.table)
    return manifest


def stage_topology(table_path, selector: FunctionSelector, config: EdgeStreamConfig,
                   out_dir, gradient="difference_over_distance") -> TopologyArtifact:
    table = load_table(table_path, format="packed-binary")
    index = SpatialIndex(table)
    config.validate_for(table.n_points)
    links = pass1_links(table, index, config, selector, gradient=gradient)
    base = resolve_labels(links)
    saddles = pass2_saddles(table, index, config, selector, base)
    hierarchy = build_hierarchy(base, saddles, selector.values(table))
    artifact = TopologyArtifact(base, saddles, hierarchy)
    paths = ProjectPaths(Path(out_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    save_topology(paths.topology, artifact)
    manifest = load_manifest(out_dir)
    manifest["function"] = {"column": selector.column, "transform": selector.transform}
    manifest["edge_config"] = {"k": config.k, "beta": config.beta,
                               "witness_mode": config.witness_mode,
                               "symmetrize": config.symmetrize,
                               "gradient": gradient}
    _record_artifact(manifest, "topology", paths.topology)
    save_manifest(out_dir, manifest)
    log.info("topology: %d base maxima, %d saddles, %d events -> %s",
             len(base.maxima), len(saddles), len(hierarchy.events), paths.topology)
    return artifact


def stage_cubes(table_path, topology_path, selector: FunctionSelector, out_dir,
                resolution=64, max_leaves=64, t_base=None, extra_pairs=(),
                include_f_triples=False):
    table = load_table(table_path, format="packed-binary")
    artifact = load_topology(topology_path, mmap_labels=False)
    if t_base is None:
        t_base = choose_base_threshold(artifact.hierarchy, max_leaves=max_leaves)
    leaf_seg = segmentation_at(artifact.hierarchy, artifact.base, t_base)
    config = CubeConfig.default(table, selector, resolution=resolution,
                                extra_pairs=extra_pairs,
                                include_f_triples=include_f_triples)
    bounds = compute_bounds(table)
    leaves = build_cubes(table, leaf_seg, config, bounds, selector)
    paths = ProjectPaths(Path(out_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    save_cubes(paths.cubes, leaves, t_base)
    manifest = load_manifest(out_dir)
    manifest["cube_config"] = {"resolution": resolution, "max_leaves": max_leaves,
                               "include_f_triples": bool(include_f_triples),
                               "extra_pairs": [list(p) for p in extra_pairs]}
    manifest["t_base"] = float(t_base)
    _record_artifact(manifest, "cubes", paths.cubes)
    save_manifest(out_dir, manifest)
    log.info("cubes: %d leaves at t_base=%.6g, r=%d -> %s",
             len(leaves), t_base, resolution, paths.cubes)
    return leaves, t_base


# -- query-side project -----------------------------------------------------------------


class LoadedProject:
    """Everything the query service needs, loaded once and read-only
    (the base label array stays memory-mapped)."""

    def __init__(self, root, verify=True):
        self.root = Path(root)
        paths = ProjectPaths(self.root)
        if not paths.manifest.exists():
            raise ProjectError(f"no {MANIFEST_NAME} in {root}")
        self.manifest = load_manifest(self.root)
        needed = {"table", "topology", "cubes"}
        have = set(self.manifest.get("artifacts", {}))
        if not needed <= have:
            raise ProjectError(f"manifest missing artifacts: {sorted(needed - have)}")
        if verify:
            for name, entry in self.manifest["artifacts"].items():
                path = self.root / entry["path"]
                if not path.exists():
                    raise ProjectError(f"artifact {name} missing: {path}")
                digest = file_sha256(path)
                if digest != entry["sha256"]:
                    raise ProjectError(f"artifact {name} hash mismatch "
                                       f"({digest[:12]} != {entry['sha256'][:12]})")
        self.table = load_table(paths.table, format="packed-binary")
        self.selector = FunctionSelector(**self.manifest["function"])
        self.artifact = load_topology(paths.topology, mmap_labels=True)
        self.leaves, self.cube_config, self.grid, self.t_base = load_cubes(paths.cubes)
        self.bounds = compute_bounds(self.table)

    @property
    def hierarchy(self):
        return self.artifact.hierarchy
