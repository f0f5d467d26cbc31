"""Regular raster grids and the ESRI ASCII grid format.

Row 0 is the northernmost row, as in the file format. Nodata cells are held
as ``NaN`` in memory.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ExtentError, ParameterError, SchemaError

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
DEFAULT_NODATA = -9999.0


@dataclass
class DemGrid:
    xll: float
    yll: float
    cellsize: float
    values: np.ndarray
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ParameterError("grid values must be two-dimensional")
        if not self.cellsize > 0:
            raise ParameterError("cell size must be positive")

    @property
    def nrows(self):
        return self.values.shape[0]

    @property
    def ncols(self):
        return self.values.shape[1]

    @property
    def extent(self):
        """(xmin, xmax, ymin, ymax) of the cell edges."""
        return (self.xll, self.xll + self.ncols * self.cellsize,
                self.yll, self.yll + self.nrows * self.cellsize)

    def like(self, values):
        """New grid with this geometry and different values."""
        return DemGrid(self.xll, self.yll, self.cellsize, values, self.nodata)

    def same_geometry(self, other):
        return (self.values.shape == other.values.shape and self.xll == other.xll
                and self.yll == other.yll and self.cellsize == other.cellsize)

    def cell_centers(self):
        """Easting and northing of every cell centre, each (nrows, ncols)."""
        x = self.xll + (np.arange(self.ncols) + 0.5) * self.cellsize
        y = self.yll + (self.nrows - np.arange(self.nrows) - 0.5) * self.cellsize
        return np.meshgrid(x, y)

    def cell_index(self, points):
        """Row and column of the cell containing each point (half-open cells).

        Raises
        ------
        ExtentError
            A point lies outside the grid.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        col = np.floor((pts[:, 0] - self.xll) / self.cellsize).astype(np.int64)
        row_from_bottom = np.floor((pts[:, 1] - self.yll) / self.cellsize).astype(np.int64)
        bad = (col < 0) | (col >= self.ncols) | (row_from_bottom < 0) | (row_from_bottom >= self.nrows)
        if bad.any():
            p = pts[np.argmax(bad)]
            raise ExtentError(f"point ({p[0]}, {p[1]}) outside grid extent {self.extent}")
        return self.nrows - 1 - row_from_bottom, col


def read_ascii_grid(path):
    header = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    pos = 0
    while pos < len(lines) and len(header) < 6:
        parts = lines[pos].split()
        if not parts:
            pos += 1
            continue
        key = parts[0].lower()
        if key not in _HEADER_KEYS:
            break
        header[key] = float(parts[1])
        pos += 1
    for key in _HEADER_KEYS[:5]:
        if key not in header:
            raise SchemaError(f"{path}: missing header field {key}")
    nodata = header.get("nodata_value", DEFAULT_NODATA)
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    data = np.array(" ".join(lines[pos:]).split(), dtype=float)
    if data.size != nrows * ncols:
        raise SchemaError(f"{path}: expected {nrows * ncols} values, found {data.size}")
    values = data.reshape(nrows, ncols)
    values[values == nodata] = np.nan
    return DemGrid(header["xllcorner"], header["yllcorner"], header["cellsize"], values, nodata)


def write_ascii_grid(path, grid, fmt="%.17g"):
    vals = np.where(np.isnan(grid.values), grid.nodata, grid.values)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ncols {grid.ncols}\nnrows {grid.nrows}\n")
        fh.write(f"xllcorner {grid.xll!r}\nyllcorner {grid.yll!r}\n")
        fh.write(f"cellsize {grid.cellsize!r}\nNODATA_value {grid.nodata!r}\n")
        np.savetxt(fh, vals, fmt=fmt)
