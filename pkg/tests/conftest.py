import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import topocube as tc


@pytest.fixture
def chain_table():
    """1-D chain at coordinates 0..4 with f = [0, 2, 1, 3, 0]; the pruned
    graph of evenly spaced collinear points is exactly the adjacent pairs."""
    return tc.SampleTable(["x0"], np.arange(5.0).reshape(-1, 1),
                          ["f"], np.array([0.0, 2.0, 1.0, 3.0, 0.0]).reshape(-1, 1))


@pytest.fixture
def square_table():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return tc.SampleTable(["x0", "x1"], pts, ["f"], np.zeros((4, 1)))


@pytest.fixture(scope="session")
def two_gauss_table():
    return tc.synth_gaussian_mixture(2, [(0.25, 0.5), (0.75, 0.5)], [1.0, 0.6],
                                     [0.1, 0.1], 3000, 42)


@pytest.fixture(scope="session")
def two_gauss_pipeline(two_gauss_table):
    """Full in-memory pipeline over the two-Gaussian fixture."""
    table = two_gauss_table
    index = tc.SpatialIndex(table)
    selector = tc.FunctionSelector("f")
    config = tc.EdgeStreamConfig(k=16)
    base = tc.resolve_labels(tc.pass1_links(table, index, config, selector))
    saddles = tc.pass2_saddles(table, index, config, selector, base)
    hierarchy = tc.build_hierarchy(base, saddles, selector.values(table))
    return dict(table=table, index=index, selector=selector, config=config,
                base=base, saddles=saddles, hierarchy=hierarchy)


@pytest.fixture(scope="session")
def project_dir(tmp_path_factory, two_gauss_table):
    """A complete on-disk project built through the CLI (used by service tests)."""
    from click.testing import CliRunner
    from topocube.cli import main

    root = tmp_path_factory.mktemp("project")
    csv_path = root / "source.csv"
    table = two_gauss_table
    with open(csv_path, "w") as fh:
        fh.write("x0,x1,f\n")
        for i in range(table.n_points):
            fh.write(f"{table.column('x0')[i]!r},{table.column('x1')[i]!r},"
                     f"{table.column('f')[i]!r}\n")
    out = root / "proj"
    runner = CliRunner()
    steps = [
        ["ingest", "--input", str(csv_path), "--format", "csv",
         "--domain", "x0,x1", "--measure", "f", "--out", str(out)],
        ["topology", "--input", str(out / "table.tdc"), "--function", "f",
         "--k", "16", "--out", str(out)],
        ["cubes", "--input", str(out / "table.tdc"), "--topology",
         str(out / "topology.tdt"), "--function", "f", "--resolution", "32",
         "--leaves", "8", "--out", str(out)],
    ]
    for args in steps:
        result = runner.invoke(main, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
    return out
