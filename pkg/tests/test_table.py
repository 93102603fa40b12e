import numpy as np
import pytest

import topocube as tc
from topocube.table import IngestError, SchemaError, load_table, save_table


def test_csv_ingest_basic(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("x0,x1,err\n0.0,0.5,1.0\n1.0,0.25,2.0\n2.0,0.75,0.5\n")
    table = load_table(path, format="csv", domain=["x0", "x1"], measure=["err"])
    assert (table.n_points, table.d, table.m) == (3, 2, 1)
    assert table.rejected_rows == 0
    assert table.column("err").tolist() == [1.0, 2.0, 0.5]


def test_csv_rejects_nonfinite_rows(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("x0,err\n0.0,1.0\n1.0,NaN\n2.0,3.0\n")
    table = load_table(path, format="csv", domain=["x0"], measure=["err"])
    assert table.n_points == 2
    assert table.rejected_rows == 1


def test_csv_all_rejected_raises(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("x0,err\nnan,1.0\n1.0,inf\n")
    with pytest.raises(IngestError):
        load_table(path, format="csv", domain=["x0"], measure=["err"])


def test_csv_schema_mismatch(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        load_table(path, format="csv", domain=["x0"], measure=["err"])


def test_missing_file_raises():
    with pytest.raises(FileNotFoundError):
        load_table("/nonexistent/nope.csv", format="csv", domain=["x"], measure=["y"])


def test_packed_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    table = tc.SampleTable([f"x{i}" for i in range(5)], rng.random((1000, 5)),
                           ["err"], rng.standard_normal((1000, 1)))
    p1, p2 = tmp_path / "a.tdc", tmp_path / "b.tdc"
    save_table(table, p1)
    loaded = load_table(p1, format="packed-binary")
    assert loaded.domain_names == table.domain_names
    assert loaded.measure_names == table.measure_names
    for name in table.column_names:
        assert np.array_equal(loaded.column(name), table.column(name))
    save_table(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_unique_column_names_enforced():
    with pytest.raises(SchemaError):
        tc.SampleTable(["x", "x"], np.zeros((2, 2)), ["f"], np.zeros((2, 1)))
    with pytest.raises(SchemaError):
        tc.SampleTable(["x"], np.zeros((2, 1)), ["x"], np.zeros((2, 1)))


def test_compute_bounds_matches_brute_scan():
    rng = np.random.default_rng(11)
    table = tc.SampleTable(["a", "b"], rng.standard_normal((500, 2)),
                           ["f"], rng.random((500, 1)))
    bounds = tc.compute_bounds(table)
    for name in table.column_names:
        col = table.column(name)
        lo, hi = min(col), max(col)  # plain python scan
        assert bounds[name] == (lo, hi)


def test_compute_bounds_examples():
    table = tc.SampleTable(["x"], np.array([[0.0], [1.0], [2.0]]),
                           ["c"], np.array([[5.0], [5.0], [5.0]]))
    bounds = tc.compute_bounds(table)
    assert bounds["x"] == (0.0, 2.0)
    assert bounds["c"] == (5.0, 5.0)


def test_bounds_uniform_sample_near_endpoints():
    rng = np.random.default_rng(3)
    table = tc.SampleTable(["x"], rng.random((10_000, 1)), ["f"], np.zeros((10_000, 1)))
    lo, hi = tc.compute_bounds(table)["x"]
    assert 0.0 <= lo < 1e-2
    assert 1.0 - 1e-2 < hi < 1.0


def test_synth_mixture_matches_closed_form():
    centers = [(0.25, 0.5), (0.75, 0.5)]
    amps, widths = [1.0, 0.6], [0.1, 0.1]
    table = tc.synth_gaussian_mixture(2, centers, amps, widths, 2000, 5)
    pts = table.domain_points()
    f = table.column("f")
    # independent evaluation, accumulated per point in plain python
    for i in range(0, 2000, 97):
        want = 0.0
        for (c, a, w) in zip(centers, amps, widths):
            want += a * np.exp(-(((pts[i] - np.asarray(c)) ** 2).sum()) / (w * w))
        assert f[i] == pytest.approx(want, abs=4e-16)


def test_synth_mixture_deterministic():
    a = tc.synth_gaussian_mixture(3, [(0.5, 0.5, 0.5)], [1.0], [0.2], 500, 99)
    b = tc.synth_gaussian_mixture(3, [(0.5, 0.5, 0.5)], [1.0], [0.2], 500, 99)
    assert np.array_equal(a.domain_points(), b.domain_points())
    assert np.array_equal(a.column("f"), b.column("f"))


def test_synth_mixture_two_peaks_analytic():
    # the closed form itself has two local maxima and a deep valley between
    centers = [(0.25, 0.5), (0.75, 0.5)]
    amps, widths = [1.0, 0.6], [0.1, 0.1]
    table = tc.synth_gaussian_mixture(2, centers, amps, widths, 10_000, 8)
    peak_vals = tc.evaluate_gaussian_mixture(np.asarray(centers), centers, amps, widths)
    mid = tc.evaluate_gaussian_mixture(np.asarray([[0.5, 0.5]]), centers, amps, widths)[0]
    assert mid < 0.01
    assert mid < 0.01 + peak_vals.min()
    assert table.n_points == 10_000


def test_synth_mixture_one_center_high_region_connected():
    table = tc.synth_gaussian_mixture(2, [(0.0, 0.0)], [1.0], [0.3], 1000, 17)
    pts = table.domain_points()
    hot = pts[table.column("f") > 0.9]
    # all hot points hug the origin corner: one cluster by construction
    assert hot.size > 0
    assert np.sqrt((hot ** 2).sum(axis=1)).max() < 0.3 * np.sqrt(-np.log(0.9)) + 1e-9


def test_synth_mixture_validation():
    with pytest.raises(ValueError):
        tc.synth_gaussian_mixture(2, [(0.5, 0.5)], [1.0, 2.0], [0.1], 10, 0)
    with pytest.raises(ValueError):
        tc.synth_gaussian_mixture(2, [(0.5, 0.5)], [1.0], [0.0], 10, 0)


def test_function_selector_negate():
    table = tc.SampleTable(["x"], np.zeros((3, 1)),
                           ["f"], np.array([[1.0], [2.0], [3.0]]))
    assert tc.FunctionSelector("f").values(table).tolist() == [1.0, 2.0, 3.0]
    assert tc.FunctionSelector("f", "negate").values(table).tolist() == [-1.0, -2.0, -3.0]
    with pytest.raises(SchemaError):
        tc.FunctionSelector("nope").values(table)


def test_with_measure_appends_column():
    table = tc.SampleTable(["x"], np.zeros((3, 1)), ["f"], np.ones((3, 1)))
    bigger = table.with_measure("g", np.array([1.0, 2.0, 3.0]))
    assert bigger.measure_names == ("f", "g")
    assert table.measure_names == ("f",)  # original untouched
    assert bigger.column("g").tolist() == [1.0, 2.0, 3.0]
