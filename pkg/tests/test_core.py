import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binarycal.core import (BinaryField, DesignMatrix, EnsembleMatrix, GridSpec, ValidationError,
                            load_design, load_ensemble, load_grid, load_observation, save_design,
                            save_ensemble, save_grid, save_observation, to_native)


def _write(path, text):
    path.write_text(text)
    return path


def test_grid_row_major_coordinates():
    g = GridSpec(2, 3, (0.0, 10.0), (1.0, 2.0))
    xy = g.coordinates()
    assert g.n == 6
    # flat index 4 is row 1, column 1
    np.testing.assert_array_equal(xy[4], [1.0, 12.0])
    np.testing.assert_array_equal(xy[:3, 1], [10.0, 10.0, 10.0])


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValidationError):
        GridSpec(0, 3)
    with pytest.raises(ValidationError):
        GridSpec(2, 2, cell_size=(1.0, 0.0))


def test_binary_field_rejects_non_binary():
    with pytest.raises(ValidationError, match="non-binary entry"):
        BinaryField(GridSpec(1, 3), [0, 2, 1])


def test_load_zero_ensemble(tmp_path):
    save_grid(GridSpec(2, 2), tmp_path / "e.grid.json")
    _write(tmp_path / "e.csv", "cell_0,cell_1,cell_2,cell_3\n0,0,0,0\n0,0,0,0\n")
    ens = load_ensemble(tmp_path / "e.csv")
    assert (ens.p, ens.n) == (2, 4)
    assert ens.values.sum() == 0


def test_load_ensemble_reports_non_binary_cell(tmp_path):
    save_grid(GridSpec(2, 2), tmp_path / "e.grid.json")
    _write(tmp_path / "e.csv", "cell_0,cell_1,cell_2,cell_3\n0,0,0,0\n0,2,0,0\n")
    with pytest.raises(ValidationError, match=r"non-binary entry at \(1, 1\)"):
        load_ensemble(tmp_path / "e.csv")


def test_load_ensemble_dimension_mismatch(tmp_path):
    save_grid(GridSpec(2, 2), tmp_path / "e.grid.json")
    _write(tmp_path / "e.csv", "cell_0,cell_1,cell_2\n0,0,0\n0,0,0\n")
    with pytest.raises(ValidationError, match="header"):
        load_ensemble(tmp_path / "e.csv")
    _write(tmp_path / "e.csv", "cell_0,cell_1,cell_2,cell_3\n0,0,0,0\n0,0,0\n")
    with pytest.raises(ValidationError, match="row 1"):
        load_ensemble(tmp_path / "e.csv")


def test_load_ensemble_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_ensemble(tmp_path / "nope.csv")


def test_paper_scale_dimensions(tmp_path):
    rng = np.random.default_rng(0)
    grid = GridSpec(37, 86)
    design = DesignMatrix(rng.random((499, 4)))
    ens = EnsembleMatrix(design, grid, rng.integers(0, 2, (499, grid.n)))
    save_ensemble(ens, tmp_path / "big.csv")
    back = load_ensemble(tmp_path / "big.csv")
    assert (back.p, back.n) == (499, 3182)
    np.testing.assert_array_equal(back.values, ens.values)


def test_design_lattice_and_errors(tmp_path):
    u = np.linspace(0, 1, 10)
    pts = np.array([(a, b) for a in u for b in u])
    save_design(DesignMatrix(pts, ("a", "b")), tmp_path / "d.csv")
    d = load_design(tmp_path / "d.csv")
    assert (d.p, d.d) == (100, 2)

    _write(tmp_path / "bad.csv", "a,b\n0.1,0.2\n1.2,0.3\n")
    with pytest.raises(ValidationError, match="outside"):
        load_design(tmp_path / "bad.csv")
    _write(tmp_path / "one.csv", "a,b\n0.1,0.2\n")
    with pytest.raises(ValidationError, match="p >= 2"):
        load_design(tmp_path / "one.csv")
    _write(tmp_path / "dup.csv", "a,a\n0.1,0.2\n0.3,0.4\n")
    with pytest.raises(ValidationError, match="duplicate"):
        load_design(tmp_path / "dup.csv")


def test_design_meta_sidecar(tmp_path):
    d = DesignMatrix([[0.0, 0.5], [1.0, 0.25]], ("x", "y"), ((1, 6), (0.1, 10)), (False, True))
    save_design(d, tmp_path / "d.csv")
    meta = json.loads((tmp_path / "d.meta.json").read_text())
    assert meta == {"ranges": [[1.0, 6.0], [0.1, 10.0]], "log_scaled": [False, True]}
    back = load_design(tmp_path / "d.csv")
    assert back.ranges == d.ranges and back.log_scaled == d.log_scaled


def test_to_native_examples():
    d = DesignMatrix([[0, 0, 0], [1, 1, 1]], ("a", "b", "c"),
                     ((1, 6), (0.1, 10), (50, 90)), (False, True, False))
    out = to_native(d, [0.0, 0.5, 1.0])
    assert out[0] == 1.0
    assert out[1] == pytest.approx(1.0, rel=1e-14)
    assert out[2] == 90.0
    with pytest.raises(ValidationError):
        to_native(d, [0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 5), st.floats(1.01, 100),
       st.booleans())
def test_to_native_monotone_with_exact_endpoints(a, b, lo, ratio, lg):
    d = DesignMatrix([[0.0], [1.0]], ("t",), ((lo, lo * ratio),), (lg,))
    lo_v, hi_v = to_native(d, [0.0])[0], to_native(d, [1.0])[0]
    assert lo_v == lo and hi_v == lo * ratio
    x, y = sorted((a, b))
    assert to_native(d, [x])[0] <= to_native(d, [y])[0] * (1 + 1e-15)


def test_round_trips(tmp_path):
    rng = np.random.default_rng(1)
    grid = GridSpec(3, 4, (-1.5, 0.25), (0.1, 1 / 3))
    save_grid(grid, tmp_path / "g.json")
    assert load_grid(tmp_path / "g.json") == grid

    pts = rng.random((7, 3))
    save_design(DesignMatrix(pts), tmp_path / "d.csv")
    np.testing.assert_array_equal(load_design(tmp_path / "d.csv").points, pts)

    ens = EnsembleMatrix(DesignMatrix(pts), grid, rng.integers(0, 2, (7, 12)))
    save_ensemble(ens, tmp_path / "e.csv")
    back = load_ensemble(tmp_path / "e.csv")
    np.testing.assert_array_equal(back.values, ens.values)
    np.testing.assert_array_equal(back.design.points, pts)
    assert back.grid == grid

    obs = BinaryField(grid, rng.integers(0, 2, 12))
    save_observation(obs, tmp_path / "o.csv")
    np.testing.assert_array_equal(load_observation(tmp_path / "o.csv", grid).values, obs.values)


def test_observation_must_be_single_row(tmp_path):
    grid = GridSpec(1, 2)
    _write(tmp_path / "o.csv", "cell_0,cell_1\n0,1\n1,1\n")
    with pytest.raises(ValidationError, match="exactly one"):
        load_observation(tmp_path / "o.csv", grid)


def test_types_are_immutable():
    f = BinaryField(GridSpec(1, 2), [0, 1])
    with pytest.raises(ValueError):
        f.values[0] = 1
