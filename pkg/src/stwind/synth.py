"""Synthetic station networks with a known spatio-temporal truth.

Observations follow ``Z(s, t) = mu(t) + sum_k f_k(s) g_k(t) + noise`` where
``g_k`` are orthonormalized sinusoids rescaled by ``sqrt(T)`` (so they are of
order one) and ``f_k`` are products of low-frequency sinusoids of the scaled
coordinates.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .data import ObservationMatrix
from .errors import DimensionError, ParameterError
from .grids import DemGrid

START = np.datetime64("2017-01-01T00:00:00", "s")
HOUR = np.timedelta64(3600, "s")

# (x frequency, y frequency, x phase, y phase) of each spatial function
_SPATIAL = ((0.5, 0.5, 0.0, 0.25), (1.0, 0.5, 0.1, 0.0), (0.5, 1.0, 0.0, 0.3),
            (1.0, 1.0, 0.2, 0.1), (1.5, 0.5, 0.0, 0.0))
# periods in hours: daily, annual, weekly, half-daily, monthly
_PERIODS = (24.0, 8760.0, 168.0, 12.0, 730.0)


@dataclass
class SyntheticScenario:
    """Parameters of a synthetic network.

    Parameters
    ----------
    amplitudes : tuple
        Spatial amplitude of each component (m/s); its length is K.
    noise : {'homoskedastic', 'two-region'}
        Two-region noise uses ``noise_sd`` west of the box centre and
        ``noise_sd_high`` east of it.
    layout : {'uniform', 'clustered'}
    """
    amplitudes: tuple = (1.5, 1.0, 0.7)
    periods: tuple = _PERIODS[:3]
    mean_level: float = 8.0
    diurnal_mean: float = 0.5
    noise: str = "homoskedastic"
    noise_sd: float = 1.0
    noise_sd_high: float = 3.0
    layout: str = "uniform"
    n_clusters: int = 5
    extent: tuple = (2_500_000.0, 1_100_000.0, 100_000.0, 100_000.0)   # xmin, ymin, width, height
    seed: int = 0

    def __post_init__(self):
        if len(self.amplitudes) > len(_SPATIAL) or len(self.periods) < len(self.amplitudes):
            raise ParameterError(f"at most {len(_SPATIAL)} components, one period each")
        if self.noise not in ("homoskedastic", "two-region"):
            raise ParameterError(f"unknown noise model {self.noise!r}")
        if self.layout not in ("uniform", "clustered"):
            raise ParameterError(f"unknown station layout {self.layout!r}")

    @property
    def n_components(self):
        return len(self.amplitudes)

    def unit(self, points):
        """Coordinates scaled to the unit square of the extent."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x0, y0, w, h = self.extent
        return (p[:, 0] - x0) / w, (p[:, 1] - y0) / h

    def spatial(self, k, points):
        """``f_k`` at planar points."""
        u, v = self.unit(points)
        fx, fy, px, py = _SPATIAL[k]
        return self.amplitudes[k] * (np.sin(2 * np.pi * (fx * u + px))
                                     * np.cos(2 * np.pi * (fy * v + py)))

    def noise_sd_at(self, points):
        u, _ = self.unit(points)
        if self.noise == "two-region":
            return np.where(u < 0.5, self.noise_sd, self.noise_sd_high)
        return np.full(u.shape, float(self.noise_sd))


def temporal_basis(periods, T):
    """Orthonormal columns spanning the sinusoids (T x K), sign-fixed."""
    t = np.arange(T, dtype=float)
    raw = np.column_stack([np.sin(2 * np.pi * t / p + 0.3 * k) for k, p in enumerate(periods)])
    Q, R = np.linalg.qr(raw)
    return Q * np.sign(np.diag(R))


@dataclass
class GroundTruth:
    scenario: SyntheticScenario
    times: np.ndarray
    basis: np.ndarray            # (T, K), orthonormal columns
    mu: np.ndarray               # (T,)
    noise: np.ndarray = field(repr=False, default=None)   # (S, T) realized noise

    @property
    def temporal(self):
        """Order-one temporal functions ``g_k = sqrt(T) basis_k``."""
        return self.basis * math.sqrt(self.times.size)

    def spatial(self, points):
        """(P x K) spatial function values."""
        return np.column_stack([self.scenario.spatial(k, points)
                                for k in range(self.scenario.n_components)])

    def field(self, points, times=None):
        """Noise-free field (P x T) at planar points."""
        sel = slice(None) if times is None else times
        return self.mu[sel][None, :] + self.spatial(points) @ self.temporal[sel].T

    def noise_sd(self, points):
        return self.scenario.noise_sd_at(points)


def synthetic_elevation(scenario, points):
    """Smooth hills between roughly 300 and 1700 m."""
    u, v = scenario.unit(points)
    return (1000.0 + 500.0 * np.sin(2 * np.pi * (0.8 * u + 0.1)) * np.sin(2 * np.pi * 0.6 * v)
            + 200.0 * np.cos(2 * np.pi * 2.1 * u * v))


def station_layout(scenario, S, rng):
    x0, y0, w, h = scenario.extent
    if scenario.layout == "uniform":
        uv = rng.uniform(0.0, 1.0, size=(S, 2))
    else:
        centres = rng.uniform(0.15, 0.85, size=(scenario.n_clusters, 2))
        which = rng.integers(0, scenario.n_clusters, size=S)
        uv = np.clip(centres[which] + rng.normal(0.0, 0.08, size=(S, 2)), 0.0, 1.0 - 1e-9)
    return np.column_stack([x0 + uv[:, 0] * w, y0 + uv[:, 1] * h])


def generate(scenario=None, S=125, T=2000, seed=None):
    """Synthetic observation matrix and its ground truth.

    Station ids are ``SYN0001`` ... in generation order; times are hourly
    from 2017-01-01 UTC. Reproducible bit for bit from ``(scenario, seed)``.
    """
    sc = scenario or SyntheticScenario()
    if S > T:
        raise DimensionError(f"{S} stations exceed {T} time steps")
    rng = np.random.default_rng(sc.seed if seed is None else seed)
    coords = station_layout(sc, S, rng)
    times = START + np.arange(T) * HOUR
    basis = temporal_basis(sc.periods[:sc.n_components], T)
    hours = np.arange(T, dtype=float)
    mu = sc.mean_level + sc.diurnal_mean * np.sin(2 * np.pi * (hours - 9.0) / 24.0)
    truth = GroundTruth(sc, times, basis, mu)
    noise = rng.standard_normal((S, T)) * sc.noise_sd_at(coords)[:, None]
    truth.noise = noise
    values = truth.field(coords) + noise
    ids = [f"SYN{i + 1:04d}" for i in range(S)]
    m = ObservationMatrix(ids, coords, synthetic_elevation(sc, coords), times, values)
    return m, truth


def _grid(scenario, cellsize):
    x0, y0, w, h = scenario.extent
    ncols, nrows = int(math.ceil(w / cellsize)), int(math.ceil(h / cellsize))
    geo = DemGrid(x0, y0, cellsize, np.zeros((nrows, ncols)))
    x, y = geo.cell_centers()
    return geo, np.column_stack([x.ravel(), y.ravel()])


def synthetic_rasters(scenario=None, cellsize=2000.0, seed=0, dem_cellsize=500.0):
    """DEM, roughness-length grid and restriction mask covering the extent.

    The DEM has its own (finer) resolution; roughness and mask share the
    prediction grid. Roughness length varies smoothly between 0.03 and
    0.8 m. The mask is a random patchwork of 5 km blocks over the four
    zone codes.
    """
    sc = scenario or SyntheticScenario()
    dgeo, dpts = _grid(sc, dem_cellsize)
    dem = dgeo.like(synthetic_elevation(sc, dpts).reshape(dgeo.nrows, dgeo.ncols))
    geo, pts = _grid(sc, cellsize)
    nrows, ncols = geo.nrows, geo.ncols
    rng = np.random.default_rng(seed)
    u, v = sc.unit(pts)
    rough = 0.03 + 0.77 * (0.5 + 0.5 * np.sin(2 * np.pi * (1.3 * u + 0.7 * v)))
    rough = geo.like(rough.reshape(nrows, ncols))
    block = max(int(round(5000.0 / cellsize)), 1)
    nb_r, nb_c = -(-nrows // block), -(-ncols // block)
    blocks = rng.choice(4, size=(nb_r, nb_c), p=(0.5, 0.12, 0.13, 0.25))
    codes = np.kron(blocks, np.ones((block, block)))[:nrows, :ncols]
    return dem, rough, geo.like(codes.astype(float))
