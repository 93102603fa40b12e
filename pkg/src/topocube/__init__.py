"""topocube: streaming extremum-graph topology and topology-aware datacubes
for sampled high-dimensional scalar functions."""

__version__ = "0.1.0"

from .table import (SampleTable, DomainBounds, FunctionSelector, SchemaError,
                    IngestError, load_table, save_table, compute_bounds,
                    synth_gaussian_mixture, evaluate_gaussian_mixture)
from .neighbors import (SpatialIndex, EdgeStreamConfig, PrunedNeighborhood,
                        ConfigError, empty_region_keep, stream_neighborhood,
                        knn_density, append_knn_density, saturation_curve,
                        dump_edges, iter_pruned_edges)
from .topology import (SteepestLinks, Segmentation, SaddleRecord, MergeEvent,
                       MergeHierarchy, PersistenceCurve, TopologyArtifact,
                       CycleError, pass1_links, resolve_labels, pass2_saddles,
                       build_hierarchy, segmentation_at, merge_map_at,
                       persistence_curve, save_topology, load_topology)
from .cubes import (CubeConfig, AxisGrid, LeafCube, AggregateCube, CubeError,
                    MissingPairError, SelectionPredicate, SelectionResult,
                    build_cubes, merge_cubes, hist2d, pcp_pairs, contour_counts,
                    selection_scan, choose_base_threshold, make_grid,
                    save_cubes, load_cubes)
from .spine import (SpineGraph, SpineNode, SpineContour, SpineArc,
                    layout_spine, build_contours, shade_contours, build_spine,
                    contour_radius)
