import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import topocube as tc
from topocube.neighbors import ConfigError

from oracles import (beta_lune_contains, edges_from_neighborhoods, gabriel_edges,
                     scan_knn)


def _table(points):
    points = np.asarray(points, dtype=np.float64)
    return tc.SampleTable([f"x{i}" for i in range(points.shape[1])], points,
                          ["f"], np.zeros((points.shape[0], 1)))


# -- k-NN ------------------------------------------------------------------------


def test_knn_collinear_chain():
    table = _table(np.array([[0.0], [1.0], [3.0]]))
    index = tc.SpatialIndex(table)
    ids, dist = index.knn(1, 1)
    assert ids.tolist() == [0]
    assert dist.tolist() == [1.0]


def test_knn_chain_middle():
    table = _table(np.arange(5.0).reshape(-1, 1))
    index = tc.SpatialIndex(table)
    ids, _ = index.knn(2, 2)
    assert sorted(ids.tolist()) == [1, 3]


def test_knn_tie_broken_by_id():
    # unit square: from corner 0 both (1,0) and (0,1) are at distance 1
    table = _table(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    index = tc.SpatialIndex(table)
    ids, dist = index.knn(0, 2)
    assert ids.tolist() == [1, 2]
    assert dist.tolist() == [1.0, 1.0]
    # tie straddling the cut: k=1 must pick the lower id
    ids, _ = index.knn(0, 1)
    assert ids.tolist() == [1]


def test_knn_single_point_table_empty():
    table = _table(np.array([[0.5, 0.5]]))
    index = tc.SpatialIndex(table)
    ids, dist = index.knn(0, 3)
    assert ids.size == 0 and dist.size == 0


def test_knn_k_validation():
    table = _table(np.array([[0.0], [1.0]]))
    index = tc.SpatialIndex(table)
    with pytest.raises(ConfigError):
        index.knn(0, 0)


def test_knn_matches_brute_force_5d():
    rng = np.random.default_rng(1234)
    pts = rng.random((2000, 5))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    for vertex in rng.integers(0, 2000, size=50):
        ids, dist = index.knn(int(vertex), 20)
        want_ids, want_d2 = scan_knn(pts, int(vertex), 20)
        assert ids.tolist() == want_ids.tolist()
        # oracle accumulates distances in a different order: ulp tolerance
        assert np.allclose(dist, np.sqrt(want_d2), rtol=1e-12, atol=0)


def test_knn_batch_matches_single():
    rng = np.random.default_rng(5)
    pts = rng.random((300, 3))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    ids_b, d2_b = index.knn_batch(np.arange(300), 7)
    for u in (0, 13, 299):
        ids, dist = index.knn(u, 7)
        assert ids.tolist() == ids_b[u].tolist()
        assert np.array_equal(dist, np.sqrt(d2_b[u]))


def test_lattice_ties_certified():
    # 5x5 integer lattice is full of exact distance ties
    xy = np.stack(np.meshgrid(np.arange(5.0), np.arange(5.0)), -1).reshape(-1, 2)
    table = _table(xy)
    index = tc.SpatialIndex(table)
    for u in range(25):
        for k in (1, 3, 4, 8):
            ids, _ = index.knn(u, k)
            want, _ = scan_knn(xy, u, k)
            assert ids.tolist() == want.tolist()


# -- empty-region test --------------------------------------------------------------


def test_empty_region_examples():
    assert tc.empty_region_keep([0, 0], [2, 0], [[1, 0.5]], beta=1.0) is False
    assert tc.empty_region_keep([0, 0], [2, 0], [[1, 1.5]], beta=1.0) is True


def test_empty_region_no_witnesses():
    assert tc.empty_region_keep([0, 0], [1, 0], np.empty((0, 2)), beta=1.0) is True


def test_empty_region_closed_boundary():
    # witness exactly on the diameter ball boundary prunes (Gabriel convention)
    assert tc.empty_region_keep([0, 0], [1, 1], [[1.0, 0.0]], beta=1.0) is False


def test_empty_region_derived_oracle_5d():
    rng = np.random.default_rng(77)
    for _ in range(100):
        u, v, w = rng.standard_normal((3, 5))
        for beta in (1.0, 1.5, 2.0):
            keep = tc.empty_region_keep(u, v, [w], beta=beta)
            assert keep == (not beta_lune_contains(u, v, w, beta))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1.0, 1.2, 1.7, 2.0]))
def test_empty_region_matches_oracle_property(seed, beta):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 3))
    witnesses = rng.standard_normal((5, 3))
    keep = tc.empty_region_keep(u, v, witnesses, beta=beta)
    want = not any(beta_lune_contains(u, v, w, beta) for w in witnesses)
    assert keep == want


def test_relaxed_mode_keeps_far_witness_edges():
    # at beta=2 the lune reaches beyond the endpoints; a witness inside it but
    # farther from u than v is ignored in relaxed mode
    u, v = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    w = np.array([1.8, 0.0])  # inside the beta=2 lune, farther than |uv|
    assert tc.empty_region_keep(u, v, [w], beta=2.0, witness_mode="strict") is False
    assert tc.empty_region_keep(u, v, [w], beta=2.0, witness_mode="relaxed") is True


# -- streaming neighborhoods -----------------------------------------------------------


def test_square_corners_keep_sides_prune_diagonals(square_table):
    index = tc.SpatialIndex(square_table)
    config = tc.EdgeStreamConfig(k=3, beta=1.0, witness_mode="strict")
    expected = {0: [1, 2], 1: [0, 3], 2: [0, 3], 3: [1, 2]}
    for vertex, want in expected.items():
        hood = tc.stream_neighborhood(index, square_table, config, vertex)
        assert sorted(hood.neighbors.tolist()) == want


def test_two_points_keep_each_other():
    table = _table(np.array([[0.0, 0.0], [3.0, 4.0]]))
    index = tc.SpatialIndex(table)
    config = tc.EdgeStreamConfig(k=1)
    for u, v in ((0, 1), (1, 0)):
        hood = tc.stream_neighborhood(index, table, config, u)
        assert hood.neighbors.tolist() == [v]
        assert hood.distances.tolist() == [5.0]


@pytest.mark.parametrize("n,d,seed", [(60, 2, 0), (120, 3, 1), (200, 5, 2)])
def test_full_k_equals_gabriel_graph(n, d, seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, d))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    config = tc.EdgeStreamConfig(k=n - 1, beta=1.0, witness_mode="strict")
    got = edges_from_neighborhoods(index, table, config, tc.stream_neighborhood)
    assert got == gabriel_edges(pts)


def test_neighborhood_invariants():
    rng = np.random.default_rng(9)
    pts = rng.random((150, 3))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    config = tc.EdgeStreamConfig(k=10)
    for u in range(0, 150, 17):
        hood = tc.stream_neighborhood(index, table, config, u)
        assert u not in hood.neighbors
        assert len(set(hood.neighbors.tolist())) == len(hood.neighbors)
        assert np.all(hood.neighbors >= 0) and np.all(hood.neighbors < 150)


def test_symmetrized_relation_is_symmetric():
    rng = np.random.default_rng(21)
    pts = rng.random((120, 2))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    config = tc.EdgeStreamConfig(k=5, symmetrize=True)
    hoods = {u: set(tc.stream_neighborhood(index, table, config, u).neighbors.tolist())
             for u in range(120)}
    for u in range(120):
        for v in hoods[u]:
            assert u in hoods[v], f"asymmetry: {v} in pruned({u}) but not vice versa"


def test_edge_set_monotone_in_k():
    rng = np.random.default_rng(33)
    pts = rng.random((400, 5))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    previous = set()
    for k in (4, 8, 16, 64, 399):
        config = tc.EdgeStreamConfig(k=k, witness_mode="strict")
        edges = edges_from_neighborhoods(index, table, config, tc.stream_neighborhood)
        assert previous <= edges, f"edges lost when growing k to {k}"
        previous = edges
    assert previous == gabriel_edges(pts)


def test_beta_skeleton_generic_path_matches_oracle():
    from oracles import beta_skeleton_edges

    rng = np.random.default_rng(4)
    pts = rng.random((40, 2))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    for beta in (1.5, 2.0):
        config = tc.EdgeStreamConfig(k=39, beta=beta, witness_mode="strict")
        got = edges_from_neighborhoods(index, table, config, tc.stream_neighborhood)
        assert got == beta_skeleton_edges(pts, beta)


def test_beta_greater_one_prunes_more():
    rng = np.random.default_rng(14)
    pts = rng.random((80, 2))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    edges = {}
    for beta in (1.0, 2.0):
        config = tc.EdgeStreamConfig(k=79, beta=beta, witness_mode="strict")
        edges[beta] = edges_from_neighborhoods(index, table, config, tc.stream_neighborhood)
    assert edges[2.0] <= edges[1.0]
    assert len(edges[2.0]) < len(edges[1.0])


# -- density ------------------------------------------------------------------------


def test_density_two_points():
    table = _table(np.array([[0.0], [2.0]]))
    index = tc.SpatialIndex(table)
    assert tc.knn_density(index, table, k=1).tolist() == [0.5, 0.5]


def test_density_three_collinear():
    table = _table(np.array([[0.0], [1.0], [2.0]]))
    index = tc.SpatialIndex(table)
    dens = tc.knn_density(index, table, k=2)
    assert dens[1] == pytest.approx(1.0)
    assert dens[0] == pytest.approx(1.0 / 1.5)
    assert dens[2] == pytest.approx(1.0 / 1.5)


def test_density_matches_brute_force():
    rng = np.random.default_rng(6)
    pts = rng.random((3000, 5))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    dens = tc.knn_density(index, table, k=20)
    for u in rng.integers(0, 3000, size=100):
        _, d2 = scan_knn(pts, int(u), 20)
        assert dens[u] == pytest.approx(1.0 / np.sqrt(d2).mean(), rel=1e-12)


def test_density_duplicate_points_capped():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    table = _table(pts)
    index = tc.SpatialIndex(table)
    dens = tc.knn_density(index, table, k=1)
    finite_max = max(dens[2], dens[3])
    assert dens[0] == dens[1] == finite_max


def test_density_permutation_invariant():
    rng = np.random.default_rng(15)
    pts = rng.random((500, 3))
    perm = rng.permutation(500)
    t1, t2 = _table(pts), _table(pts[perm])
    d1 = tc.knn_density(tc.SpatialIndex(t1), t1, k=10)
    d2 = tc.knn_density(tc.SpatialIndex(t2), t2, k=10)
    assert np.allclose(d1[perm], d2, rtol=0, atol=0)


def test_append_density_column():
    table = _table(np.random.default_rng(0).random((50, 2)))
    index = tc.SpatialIndex(table)
    out = tc.append_knn_density(index, table, k=5)
    assert "density" in out.measure_names


# -- saturation --------------------------------------------------------------------


def test_saturation_square_full_k(square_table):
    index = tc.SpatialIndex(square_table)
    curve = tc.saturation_curve(index, square_table, [3], beta=1.0,
                                witness_mode="strict")
    assert curve == [(3, 4)]


def test_saturation_counts_non_decreasing_and_match_neighborhoods():
    rng = np.random.default_rng(10)
    pts = rng.random((250, 3))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    curve = tc.saturation_curve(index, table, [2, 4, 8, 32, 249])
    counts = [c for _, c in curve]
    assert counts == sorted(counts)
    # the counting-by-membership dedup agrees with the per-vertex API
    for k, count in curve:
        config = tc.EdgeStreamConfig(k=k)
        edges = edges_from_neighborhoods(index, table, config, tc.stream_neighborhood)
        assert count == len(edges), f"k={k}"
    assert counts[-1] == len(gabriel_edges(pts))


def test_saturation_validation():
    table = _table(np.random.default_rng(0).random((50, 2)))
    index = tc.SpatialIndex(table)
    with pytest.raises(ConfigError):
        tc.saturation_curve(index, table, [8, 4])
    with pytest.raises(ConfigError):
        tc.saturation_curve(index, table, [8, 50])


def test_edge_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    pts = rng.random((100, 2))
    table = _table(pts)
    index = tc.SpatialIndex(table)
    config = tc.EdgeStreamConfig(k=99, witness_mode="strict")
    path = tmp_path / "edges.bin"
    n_edges = tc.dump_edges(index, table, config, path)
    raw = np.fromfile(path, dtype="<u4").reshape(-1, 2)
    assert len(raw) == n_edges
    assert {(int(a), int(b)) for a, b in raw} == gabriel_edges(pts)


def test_config_validation():
    with pytest.raises(ConfigError):
        tc.EdgeStreamConfig(k=0)
    with pytest.raises(ConfigError):
        tc.EdgeStreamConfig(k=5, beta=0.5)
    with pytest.raises(ConfigError):
        tc.EdgeStreamConfig(k=5, witness_mode="loose")
    with pytest.raises(ConfigError):
        tc.EdgeStreamConfig(k=10).validate_for(10)
