"""Multi-scale terrain descriptors computed from a digital elevation model.

The 13 features, in order: easting, northing, elevation; three
differences of Gaussians; north-south and east-west derivatives at the two
finest scales; gradient norm at the three scales.
"""
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .grids import DemGrid, read_ascii_grid, write_ascii_grid

DEFAULT_BANDWIDTHS = (500.0, 2000.0, 8000.0)
TRUNCATE = 3.0


def gaussian_kernel1d(sigma_cells):
    radius = int(np.ceil(TRUNCATE * sigma_cells))
    k = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-0.5 * (k / sigma_cells) ** 2)
    return w / w.sum()


def gaussian_smooth(dem, bandwidth):
    """Normalized Gaussian convolution of a DEM.

    The kernel (standard deviation ``bandwidth`` metres) is truncated at three
    bandwidths and its weights are renormalized over the cells that exist
    and hold data, so no terrain is invented past edges or nodata holes.
    """
    if bandwidth < dem.cellsize:
        raise ParameterError(f"bandwidth {bandwidth} m below cell size {dem.cellsize} m")
    w = gaussian_kernel1d(bandwidth / dem.cellsize)
    valid = ~np.isnan(dem.values)
    # smoothing departures from a reference keeps constant surfaces exact
    ref = dem.values[valid][0] if valid.any() else 0.0
    num = np.where(valid, dem.values - ref, 0.0)
    den = valid.astype(float)
    for axis in (0, 1):
        num = ndimage.correlate1d(num, w, axis=axis, mode="constant", cval=0.0)
        den = ndimage.correlate1d(den, w, axis=axis, mode="constant", cval=0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 1e-12, num / den + ref, np.nan)
    return dem.like(out)


def difference_of_gaussians(dem, bw_small, bw_large):
    if not bw_small < bw_large:
        raise ParameterError("difference of Gaussians needs bw_small < bw_large")
    return dem.like(gaussian_smooth(dem, bw_small).values - gaussian_smooth(dem, bw_large).values)


def _derivative(values, cellsize, direction):
    if direction == "EW":
        if values.shape[1] < 2:
            return np.zeros_like(values)
        return np.gradient(values, cellsize, axis=1)
    if direction == "NS":
        if values.shape[0] < 2:
            return np.zeros_like(values)
        # rows run southwards
        return -np.gradient(values, cellsize, axis=0)
    raise ParameterError(f"direction must be 'NS' or 'EW', got {direction!r}")


def directional_derivative(dem, bandwidth, direction):
    """Slope (m/m) of the smoothed DEM towards north (``NS``) or east (``EW``).

    Central differences inside the grid, one-sided at the border.
    """
    smooth = gaussian_smooth(dem, bandwidth)
    return dem.like(_derivative(smooth.values, dem.cellsize, direction))


def slope_norm(dem, bandwidth):
    smooth = gaussian_smooth(dem, bandwidth).values
    return dem.like(np.hypot(_derivative(smooth, dem.cellsize, "NS"),
                             _derivative(smooth, dem.cellsize, "EW")))


FEATURE_NAMES = ("easting", "northing", "elevation",
                 "dog_1_2", "dog_2_3", "dog_1_3",
                 "ddns_1", "ddns_2", "ddew_1", "ddew_2",
                 "slope_1", "slope_2", "slope_3")


@dataclass
class FeatureStack:
    geometry: DemGrid
    grids: np.ndarray                    # (13, nrows, ncols)
    bandwidths: tuple
    names: tuple = field(default=FEATURE_NAMES)

    def grid(self, name):
        return self.geometry.like(self.grids[self.names.index(name)])


def assemble_features(dem, bandwidths=DEFAULT_BANDWIDTHS):
    bw = tuple(float(b) for b in bandwidths)
    if len(bw) != 3 or len(set(bw)) != 3:
        raise ParameterError("exactly three distinct bandwidths are required")
    if list(bw) != sorted(bw):
        raise ParameterError("bandwidths must be ascending")
    cs = dem.cellsize
    sm = [gaussian_smooth(dem, b).values for b in bw]
    ns = [_derivative(s, cs, "NS") for s in sm]
    ew = [_derivative(s, cs, "EW") for s in sm]
    x, y = dem.cell_centers()
    grids = np.stack([
        x, y, dem.values,
        sm[0] - sm[1], sm[1] - sm[2], sm[0] - sm[2],
        ns[0], ns[1], ew[0], ew[1],
        np.hypot(ns[0], ew[0]), np.hypot(ns[1], ew[1]), np.hypot(ns[2], ew[2]),
    ])
    return FeatureStack(dem.like(dem.values), grids, bw)


def bilinear(grid, points):
    """Bilinear interpolation between cell centres.

    Points between the outermost cell centres and the grid edge take the
    value of the nearest centre line.

    Raises
    ------
    ExtentError
        A point lies outside the grid.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid.cell_index(pts)        # extent check
    vals = grid.values
    fx = np.clip((pts[:, 0] - grid.xll) / grid.cellsize - 0.5, 0, grid.ncols - 1)
    fy = np.clip((grid.yll + grid.nrows * grid.cellsize - pts[:, 1]) / grid.cellsize - 0.5,
                 0, grid.nrows - 1)
    c0 = np.minimum(np.floor(fx).astype(int), max(grid.ncols - 2, 0))
    r0 = np.minimum(np.floor(fy).astype(int), max(grid.nrows - 2, 0))
    c1 = np.minimum(c0 + 1, grid.ncols - 1)
    r1 = np.minimum(r0 + 1, grid.nrows - 1)
    tx, ty = fx - c0, fy - r0
    top = vals[r0, c0] * (1 - tx) + vals[r0, c1] * tx
    bot = vals[r1, c0] * (1 - tx) + vals[r1, c1] * tx
    return top * (1 - ty) + bot * ty


def sample_features(stack, locations):
    """Raw (unstandardized) feature matrix, one row per location."""
    return np.column_stack([bilinear(stack.geometry.like(g), locations) for g in stack.grids])


class Standardizer:
    """Per-column z-scores frozen from training rows."""

    def __init__(self, mean=None, std=None):
        self.mean = None if mean is None else np.asarray(mean, dtype=float)
        self.std = None if std is None else np.asarray(std, dtype=float)

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def fit_transform(self, X):
        return self.fit(X).transform(X)


def save_feature_stack(directory, stack):
    os.makedirs(directory, exist_ok=True)
    files = []
    for name, g in zip(stack.names, stack.grids):
        fname = f"{name}.asc"
        write_ascii_grid(os.path.join(directory, fname), stack.geometry.like(g))
        files.append(fname)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump({"order": list(stack.names), "files": files,
                   "bandwidths_m": list(stack.bandwidths)}, fh, indent=2)


def load_feature_stack(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        man = json.load(fh)
    grids = [read_ascii_grid(os.path.join(directory, f)) for f in man["files"]]
    return FeatureStack(grids[2], np.stack([g.values for g in grids]),
                        tuple(man["bandwidths_m"]), tuple(man["order"]))
