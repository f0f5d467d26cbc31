import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stwind import siting
from stwind.errors import CompletenessError, DimensionError, ParameterError
from stwind.grids import DemGrid
from stwind.siting import FORESTS, OTHER, PROHIBITED, RESTRICTED, RestrictionMask


def mask(codes, xll=0.0, yll=0.0, cs=200.0):
    return RestrictionMask(DemGrid(xll, yll, cs, np.asarray(codes, dtype=float)))


def test_rectangle_four_turbines():
    # 3.2 km x 2.0 km, streamwise along x
    m = mask(np.full((10, 16), OTHER))
    lay = siting.place_turbines(m, 90.0)
    got = sorted(map(tuple, lay.positions.tolist()))
    assert got == [(0.0, 0.0), (0.0, 1000.0), (1600.0, 0.0), (1600.0, 1000.0)]
    assert lay.n == 4 and set(lay.zones.tolist()) == {OTHER}


def test_fully_prohibited_mask():
    assert siting.place_turbines(mask(np.zeros((20, 20)))).n == 0
    assert siting.place_turbines(mask(np.full((20, 20), np.nan))).n == 0


def test_mask_codes_validated():
    with pytest.raises(ParameterError):
        mask([[1, 4]])
    with pytest.raises(ParameterError):
        mask([[1, 1.5]])


def test_no_turbine_in_prohibited_cells_and_lattice_structure():
    rng = np.random.default_rng(0)
    m = mask(rng.integers(0, 4, (60, 80)))
    lay = siting.place_turbines(m, 60.0)
    assert lay.n > 0 and np.all(m.zone_at(lay.positions) == lay.zones)
    assert np.all(lay.zones != PROHIBITED)
    u, v = siting.lattice_vectors(60.0)
    rel = lay.positions - np.array(lay.origin)
    np.testing.assert_allclose(rel @ u / 1600.0, lay.lattice[:, 0], atol=1e-8)
    np.testing.assert_allclose(rel @ v / 1000.0, lay.lattice[:, 1], atol=1e-8)


def test_density_large_region():
    # 100 km x 64 km: 6400 km^2, expected 4000 turbines
    m = mask(np.full((64, 100), RESTRICTED), cs=1000.0)
    n = siting.place_turbines(m).n
    assert abs(n - 6400 / 1.6) <= 0.05 * 6400 / 1.6


def rotate_cw(points):
    return np.column_stack([points[:, 1], -points[:, 0]])


def test_rotation_consistency():
    rng = np.random.default_rng(3)
    # 4.8 km north, 3 km east; 300 m cells keep interior lattice points off cell edges
    codes = rng.integers(1, 4, (16, 10)).astype(float)
    codes[rng.uniform(size=codes.shape) < 0.2] = PROHIBITED
    codes[[0, -1], :] = PROHIBITED
    codes[:, [0, -1]] = PROHIBITED
    a = siting.place_turbines(mask(codes, cs=300.0), 0.0)
    b = siting.place_turbines(mask(np.rot90(codes, -1), 0.0, -3000.0, cs=300.0), 90.0)
    assert a.n == b.n > 0
    pa = rotate_cw(a.positions)
    oa, ob = np.lexsort(pa.T), np.lexsort(b.positions.T)
    np.testing.assert_allclose(pa[oa], b.positions[ob], atol=1e-6)
    assert np.array_equal(a.zones[oa], b.zones[ob])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 360))
def test_count_monotone_in_area(seed, direction):
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, 4, (25, 30))
    more = codes.copy()
    flip = (codes == PROHIBITED) & (rng.uniform(size=codes.shape) < 0.5)
    more[flip] = FORESTS
    n0 = siting.place_turbines(mask(codes, cs=500.0), direction).n
    n1 = siting.place_turbines(mask(more, cs=500.0), direction).n
    assert n1 >= n0


# ---------------------------------------------------------------- energy

def test_annual_energy_values():
    e, v = siting.annual_energy(np.full(8760, 500.0))
    assert e == pytest.approx(4.38, rel=1e-14) and v == 0.0
    assert siting.annual_energy(np.zeros(8760))[0] == 0.0
    with pytest.raises(DimensionError):
        siting.annual_energy(np.ones(10), np.ones(9))


def test_annual_energy_against_loop():
    rng = np.random.default_rng(1)
    mean, var = rng.uniform(0, 3000, (3, 8760)), rng.uniform(0, 1e5, (3, 8760))
    e, v = siting.annual_energy(mean, var)
    for k in range(3):
        tot_e = tot_v = 0.0
        for h in range(8760):
            tot_e += mean[k, h]
            tot_v += var[k, h]
        assert e[k] == pytest.approx(tot_e / 1e6, rel=1e-9)
        assert v[k] == pytest.approx(tot_v / 1e12, rel=1e-9)


def test_annualize():
    assert siting.annualize(1.0, 2190) == 4.0


# ---------------------------------------------------------------- summaries

def test_summary_same_zone_and_missing_energy():
    m = mask(np.full((10, 16), OTHER))
    lay = siting.place_turbines(m, 90.0)
    s = siting.summarize_potential(lay, [1.0, 2.0, 0.0, 0.0], m)
    assert s.zones["other"].energy_twh == pytest.approx(0.003, rel=1e-15)
    assert s.zones["other"].count == 4 and s.zones["restricted"].count == 0
    assert s.zones["other"].area_km2 == pytest.approx(6.4, rel=1e-14)
    with pytest.raises(CompletenessError):
        siting.summarize_potential(lay, [1.0, 2.0, 3.0], m)
    with pytest.raises(CompletenessError):
        siting.summarize_potential(lay, [1.0, 2.0, np.nan, 1.0], m)


def test_summary_table_totals():
    # one turbine per zone carrying the tabulated zone energies
    codes = np.full((10, 48), PROHIBITED)
    codes[:, 0:16], codes[:, 16:32], codes[:, 32:48] = RESTRICTED, FORESTS, OTHER
    m = mask(codes)
    lay = siting.place_turbines(m, 90.0, spacing=(3200.0, 2000.0))
    assert lay.n == 3
    gwh = {RESTRICTED: 13600.0, FORESTS: 15800.0, OTHER: 23700.0}
    s = siting.summarize_potential(lay, [gwh[int(z)] for z in lay.zones], m)
    assert s.total.energy_twh == 53.1
    assert s.total.count == sum(z.count for z in s.zones.values())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_total_is_sum_of_zones(seed):
    rng = np.random.default_rng(seed)
    m = mask(rng.integers(0, 4, (20, 30)), cs=400.0)
    lay = siting.place_turbines(m, rng.uniform(0, 180), spacing=(800.0, 500.0))
    e = rng.uniform(0, 10, lay.n)
    s = siting.summarize_potential(lay, e, m, rng.uniform(0, 1, lay.n))
    assert s.total.count == lay.n
    assert s.total.energy_twh == math.fsum(z.energy_twh for z in s.zones.values())
    assert s.total.area_km2 == pytest.approx(20 * 30 * 0.16, rel=1e-12)


def test_csv_outputs(tmp_path):
    m = mask(np.full((10, 16), FORESTS))
    lay = siting.place_turbines(m, 90.0)
    siting.write_layout_csv(str(tmp_path / "layout.csv"), lay)
    rows = list(csv.reader(open(tmp_path / "layout.csv")))
    assert rows[0] == ["turbine_id", "easting_m", "northing_m", "zone"] and len(rows) == 5
    assert rows[1][3] == "forests"
    s = siting.summarize_potential(lay, np.ones(4), m)
    siting.write_summary_csv(str(tmp_path / "summary.csv"), s)
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert [r["zone"] for r in rows] == ["prohibited", "restricted", "forests", "other", "total"]
    assert rows[2]["virtual_turbines"] == "4" and float(rows[4]["wind_potential_twh"]) == 0.004
