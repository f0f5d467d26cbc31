"""Virtual turbine placement on a restriction mask and energy aggregation.

Turbines sit on a rotated rectangular lattice: ``streamwise`` metres apart
along the prevailing direction (degrees clockwise from north) and
``spanwise`` metres apart across it. The lattice origin is the lower-left
corner of the mask, and a point is kept when the cell under it is not
prohibited.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CompletenessError, DimensionError, ParameterError
from .grids import DemGrid

PROHIBITED, RESTRICTED, FORESTS, OTHER = 0, 1, 2, 3
ZONE_NAMES = {PROHIBITED: "prohibited", RESTRICTED: "restricted", FORESTS: "forests",
              OTHER: "other"}
DEFAULT_DIRECTION = 60.0
DEFAULT_SPACING = (1600.0, 1000.0)
HOURS_PER_YEAR = 8760


@dataclass
class RestrictionMask:
    """Zone code per cell; codes outside {0, 1, 2, 3} or nodata count as prohibited."""
    grid: DemGrid

    def __post_init__(self):
        v = self.grid.values
        codes = np.where(np.isnan(v), PROHIBITED, v)
        if np.any(codes != np.round(codes)) or np.any((codes < 0) | (codes > 3)):
            raise ParameterError("mask codes must be integers in {0, 1, 2, 3}")
        self.codes = codes.astype(np.int8)

    def zone_at(self, points):
        r, c = self.grid.cell_index(points)
        return self.codes[r, c]

    def area_km2(self, zone):
        cell = self.grid.cellsize ** 2 / 1e6
        return float(np.count_nonzero(self.codes == zone)) * cell


@dataclass
class TurbineLayout:
    positions: np.ndarray     # (n, 2) easting, northing in m
    zones: np.ndarray         # (n,) zone codes
    direction_deg: float
    spacing: tuple
    origin: tuple
    lattice: np.ndarray = field(default=None)   # (n, 2) integer lattice coordinates

    @property
    def n(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class ZoneSummary:
    area_km2: float
    count: int
    energy_twh: float
    variance_twh2: float


@dataclass
class PotentialSummary:
    zones: dict                 # zone name -> ZoneSummary
    per_turbine_gwh: np.ndarray

    @property
    def total(self):
        vals = list(self.zones.values())
        return ZoneSummary(math.fsum(z.area_km2 for z in vals), sum(z.count for z in vals),
                           math.fsum(z.energy_twh for z in vals),
                           math.fsum(z.variance_twh2 for z in vals))


def lattice_vectors(direction_deg):
    """Unit streamwise ``u`` and spanwise ``v`` vectors (east, north)."""
    t = math.radians(direction_deg)
    return np.array([math.sin(t), math.cos(t)]), np.array([math.cos(t), -math.sin(t)])


def place_turbines(mask, direction_deg=DEFAULT_DIRECTION, spacing=DEFAULT_SPACING):
    """Lattice points of the mask's bounding box that fall on allowed cells.

    The box is half-open, ``[xmin, xmax) x [ymin, ymax)``. Positions are
    rounded to the micrometre so that lattice points on cell edges are
    assigned reproducibly.
    """
    su, sv = (float(s) for s in spacing)
    if not (su > 0 and sv > 0):
        raise ParameterError("spacings must be positive")
    g = mask.grid
    xmin, xmax, ymin, ymax = g.extent
    u, v = lattice_vectors(direction_deg)
    corners = np.array([[xmin, ymin], [xmax, ymin], [xmin, ymax], [xmax, ymax]]) - (xmin, ymin)
    pu, pv = corners @ u / su, corners @ v / sv
    i = np.arange(math.floor(pu.min()) - 1, math.ceil(pu.max()) + 2)
    j = np.arange(math.floor(pv.min()) - 1, math.ceil(pv.max()) + 2)
    I, J = (a.ravel() for a in np.meshgrid(i, j, indexing="ij"))
    pts = np.round(np.array([xmin, ymin]) + np.outer(I * su, u) + np.outer(J * sv, v), 6)
    inside = ((pts[:, 0] >= xmin) & (pts[:, 0] < xmax)
              & (pts[:, 1] >= ymin) & (pts[:, 1] < ymax))
    pts, lat = pts[inside], np.column_stack([I, J])[inside]
    zones = mask.zone_at(pts) if pts.size else np.zeros(0, dtype=np.int8)
    keep = zones != PROHIBITED
    return TurbineLayout(pts[keep], zones[keep], float(direction_deg), (su, sv),
                         (xmin, ymin), lat[keep])


def annual_energy(power_mean_kw, power_var_kw2=None):
    """Energy (GWh) and its variance (GWh^2) from hourly power series.

    Hours are treated as independent for the variance. The last axis is
    time, so a (turbines x hours) array gives one value per turbine.
    """
    mean = np.asarray(power_mean_kw, dtype=float)
    var = np.zeros_like(mean) if power_var_kw2 is None else np.asarray(power_var_kw2, dtype=float)
    if mean.shape != var.shape:
        raise DimensionError(f"mean series {mean.shape} and variance series {var.shape} differ")
    # kW over one hour is kWh; 1 GWh = 1e6 kWh
    return mean.sum(axis=-1) / 1e6, var.sum(axis=-1) / 1e12


def annualize(values, n_hours, hours_per_year=HOURS_PER_YEAR):
    """Scale totals over ``n_hours`` to one year (variance scaling uses the same factor)."""
    return np.asarray(values, dtype=float) * (hours_per_year / n_hours)


def summarize_potential(layout, energies_gwh, mask, variances_gwh2=None):
    """Per-zone area, turbine count, energy (TWh) and variance (TWh^2).

    Raises
    ------
    CompletenessError
        A turbine lacks an energy value.
    """
    e = np.asarray(energies_gwh, dtype=float).ravel()
    if e.size != layout.n or np.isnan(e).any():
        raise CompletenessError(f"{layout.n} turbines but {int(np.sum(~np.isnan(e)))} "
                                "energy values")
    var = np.zeros_like(e) if variances_gwh2 is None else np.asarray(variances_gwh2, float).ravel()
    if var.size != e.size:
        raise CompletenessError("energy variances do not match the turbines")
    zones = {}
    for code, name in ZONE_NAMES.items():
        sel = layout.zones == code
        zones[name] = ZoneSummary(mask.area_km2(code), int(np.count_nonzero(sel)),
                                  math.fsum(e[sel]) / 1e3, math.fsum(var[sel]) / 1e6)
    return PotentialSummary(zones, e)


def write_layout_csv(path, layout):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("turbine_id", "easting_m", "northing_m", "zone"))
        for k, ((x, y), z) in enumerate(zip(layout.positions, layout.zones)):
            w.writerow((k + 1, repr(float(x)), repr(float(y)), ZONE_NAMES[int(z)]))


def write_summary_csv(path, summary):
    total_area = summary.total.area_km2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("zone", "area_km2", "area_fraction", "virtual_turbines",
                    "wind_potential_twh", "wind_potential_var_twh2"))
        for name, z in list(summary.zones.items()) + [("total", summary.total)]:
            frac = z.area_km2 / total_area if total_area > 0 else 0.0
            w.writerow((name, repr(z.area_km2), f"{frac:.4f}", z.count,
                        repr(z.energy_twh), repr(z.variance_twh2)))
