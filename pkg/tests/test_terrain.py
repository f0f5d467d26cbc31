import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stwind import terrain
from stwind.errors import ExtentError, ParameterError, SchemaError
from stwind.grids import DemGrid, read_ascii_grid, write_ascii_grid

CS = 100.0


def grid(values, xll=0.0, yll=0.0, cs=CS):
    return DemGrid(xll, yll, cs, np.asarray(values, dtype=float))


def plane(a, b, shape=(40, 50), c=0.0):
    g = grid(np.zeros(shape))
    x, y = g.cell_centers()
    return g.like(a * x + b * y + c)


def interior(arr, pad):
    return arr[pad:-pad, pad:-pad]


# ---------------------------------------------------------------- grids

def test_ascii_round_trip_with_nodata(tmp_path):
    v = np.arange(12.0).reshape(3, 4) / 7
    v[1, 2] = np.nan
    g = grid(v, 2.5e6, 1.1e6, 250.0)
    p = str(tmp_path / "g.asc")
    write_ascii_grid(p, g)
    h = read_ascii_grid(p)
    assert h.same_geometry(g)
    np.testing.assert_array_equal(np.isnan(h.values), np.isnan(v))
    np.testing.assert_array_equal(h.values[~np.isnan(v)], v[~np.isnan(v)])


def test_ascii_bad_size(tmp_path):
    p = tmp_path / "g.asc"
    p.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n")
    with pytest.raises(SchemaError):
        read_ascii_grid(str(p))


def test_cell_index_half_open_and_extent():
    g = grid(np.zeros((2, 3)))
    r, c = g.cell_index([[0.0, 0.0], [299.999, 199.999], [100.0, 100.0]])
    assert r.tolist() == [1, 0, 0] and c.tolist() == [0, 2, 1]
    with pytest.raises(ExtentError, match="300"):
        g.cell_index([[300.0, 10.0]])


# ---------------------------------------------------------------- smoothing

def test_smooth_constant():
    out = terrain.gaussian_smooth(grid(np.full((20, 30), 500.0)), 300.0)
    np.testing.assert_allclose(out.values, 500.0, rtol=1e-14)


def test_smooth_impulse_centre_weight():
    v = np.zeros((31, 31))
    v[15, 15] = 1.0
    out = terrain.gaussian_smooth(grid(v), 2 * CS)
    w = terrain.gaussian_kernel1d(2.0)
    assert out.values[15, 15] == pytest.approx(w[w.size // 2] ** 2, rel=1e-12)


def test_smooth_ramp_interior_unchanged():
    g = plane(0.01, -0.02)
    out = terrain.gaussian_smooth(g, 2 * CS)
    np.testing.assert_allclose(interior(out.values, 7), interior(g.values, 7), rtol=1e-12)


def test_smooth_renormalizes_around_nodata():
    v = np.full((15, 15), 7.0)
    v[7, 7] = np.nan
    out = terrain.gaussian_smooth(grid(v), CS)
    np.testing.assert_allclose(out.values, 7.0, rtol=1e-14)


def test_smooth_all_nodata_neighbourhood():
    v = np.full((20, 20), np.nan)
    v[0, 0] = 1.0
    out = terrain.gaussian_smooth(grid(v), CS)
    assert np.isnan(out.values[19, 19]) and out.values[0, 0] == 1.0


def test_bandwidth_below_cellsize():
    with pytest.raises(ParameterError):
        terrain.gaussian_smooth(grid(np.zeros((5, 5))), 50.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_smooth_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    d1, d2 = rng.normal(size=(2, 25, 25))
    lhs = terrain.gaussian_smooth(grid(a * d1 + b * d2), 200.0).values
    rhs = (a * terrain.gaussian_smooth(grid(d1), 200.0).values
           + b * terrain.gaussian_smooth(grid(d2), 200.0).values)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


# ---------------------------------------------------------------- DoG, derivatives, slope

def test_dog_constant_and_ramp():
    assert np.all(terrain.difference_of_gaussians(grid(np.full((20, 20), 3.0)), 100, 300)
                  .values == 0.0)
    dog = terrain.difference_of_gaussians(plane(0.05, 0.02), 100.0, 200.0)
    assert np.abs(interior(dog.values, 7)).max() < 1e-10


def test_dog_impulse_centre_positive_ring_negative():
    v = np.zeros((41, 41))
    v[20, 20] = 1.0
    dog = terrain.difference_of_gaussians(grid(v), 100.0, 300.0).values
    assert dog[20, 20] > 0 and dog[20, 24] < 0


def test_dog_order():
    with pytest.raises(ParameterError):
        terrain.difference_of_gaussians(grid(np.zeros((5, 5))), 300, 100)


def test_derivatives_of_plane():
    g = plane(0.3, -0.7)
    ew = terrain.directional_derivative(g, 200.0, "EW").values
    ns = terrain.directional_derivative(g, 200.0, "NS").values
    np.testing.assert_allclose(interior(ew, 8), 0.3, rtol=1e-10)
    np.testing.assert_allclose(interior(ns, 8), -0.7, rtol=1e-10)


def test_derivative_constant_and_bad_direction():
    g = grid(np.full((10, 10), 9.0))
    assert np.all(terrain.directional_derivative(g, 100.0, "NS").values == 0.0)
    with pytest.raises(ParameterError):
        terrain.directional_derivative(g, 100.0, "up")


def test_slope_three_four_five():
    s = terrain.slope_norm(plane(3.0, 4.0), 200.0).values
    np.testing.assert_allclose(interior(s, 8), 5.0, rtol=1e-10)
    assert np.all(terrain.slope_norm(grid(np.ones((9, 9))), 100.0).values == 0.0)


def test_slope_composes_derivatives():
    rng = np.random.default_rng(5)
    g = grid(rng.normal(size=(30, 30)) * 50)
    s = terrain.slope_norm(g, 200.0).values
    ns = terrain.directional_derivative(g, 200.0, "NS").values
    ew = terrain.directional_derivative(g, 200.0, "EW").values
    np.testing.assert_allclose(s ** 2, ns ** 2 + ew ** 2, rtol=1e-12, atol=1e-300)
    assert (s >= 0).all()


# ---------------------------------------------------------------- stack

def test_stack_arity_and_constant_dem():
    g = grid(np.full((30, 40), 812.0))
    fs = terrain.assemble_features(g, (100.0, 200.0, 400.0))
    assert fs.grids.shape == (13, 30, 40) and len(fs.names) == 13
    assert fs.geometry.same_geometry(g)
    assert np.all(fs.grids[3:] == 0.0)
    assert np.all(fs.grids[2] == 812.0)
    x, y = g.cell_centers()
    np.testing.assert_array_equal(fs.grids[0], x)
    np.testing.assert_array_equal(fs.grids[1], y)


def test_stack_plane():
    fs = terrain.assemble_features(plane(0.03, 0.04, (60, 60)), (100.0, 200.0, 300.0))
    for name in ("slope_1", "slope_2", "slope_3"):
        np.testing.assert_allclose(interior(fs.grid(name).values, 12), 0.05, rtol=1e-9)
    for name in ("dog_1_2", "dog_2_3", "dog_1_3"):
        assert np.abs(interior(fs.grid(name).values, 12)).max() < 1e-9


@pytest.mark.parametrize("bw", [(100.0, 200.0), (100.0, 100.0, 200.0), (300.0, 200.0, 100.0)])
def test_stack_bad_bandwidths(bw):
    with pytest.raises(ParameterError):
        terrain.assemble_features(grid(np.zeros((5, 5))), bw)


def test_stack_save_load(tmp_path):
    rng = np.random.default_rng(0)
    fs = terrain.assemble_features(grid(rng.normal(size=(12, 14))), (100.0, 200.0, 300.0))
    terrain.save_feature_stack(str(tmp_path), fs)
    back = terrain.load_feature_stack(str(tmp_path))
    np.testing.assert_array_equal(back.grids, fs.grids)
    assert back.names == fs.names and back.bandwidths == fs.bandwidths


# ---------------------------------------------------------------- sampling

def test_sample_at_cell_centres_exact():
    rng = np.random.default_rng(1)
    g = grid(rng.normal(size=(6, 7)))
    x, y = g.cell_centers()
    pts = np.column_stack([x.ravel(), y.ravel()])
    np.testing.assert_array_equal(terrain.bilinear(g, pts), g.values.ravel())


def test_sample_midpoint_mean():
    rng = np.random.default_rng(2)
    g = grid(rng.normal(size=(4, 4)))
    # between the centres of row 1, columns 1 and 2
    p = [[200.0, 250.0]]
    assert terrain.bilinear(g, p)[0] == pytest.approx(g.values[1, 1:3].mean(), rel=1e-14)


def test_sample_outside():
    g = grid(np.zeros((4, 4)))
    with pytest.raises(ExtentError):
        terrain.bilinear(g, [[-1.0, 50.0]])


def test_standardizer():
    rng = np.random.default_rng(3)
    X = rng.normal(5, 3, (50, 4))
    X[:, 3] = 2.0
    Z = terrain.Standardizer().fit_transform(X)
    np.testing.assert_allclose(Z.mean(0), 0.0, atol=1e-12)
    np.testing.assert_allclose(Z[:, :3].std(0), 1.0, rtol=1e-12)
    assert np.all(Z[:, 3] == 0.0)
