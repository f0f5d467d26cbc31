"""Station ingestion, quality control, hourly aggregation and gap filling.

Timestamps are handled as ``numpy.datetime64[s]`` in UTC throughout; missing
speeds are ``NaN``.
"""
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionError, DuplicateError, ImputationError,
                     ParameterError, SchemaError)

logger = logging.getLogger(__name__)

STATION_COLUMNS = ("station_id", "easting_m", "northing_m", "elev_m",
                   "timestamp", "speed_mps")
HOUR = np.timedelta64(3600, "s")

# outlier rule
MAX_PHYSICAL_SPEED = 75.0
ROBUST_Z_LIMIT = 8.0
MAD_SCALE = 1.4826

REASON_MISSING = "missing>10%"
REASON_NEGATIVE = "negative>10%"
REASON_ZERO = "zero>10%"


def parse_timestamp(text):
    """Parse an ISO-8601 UTC timestamp such as ``2017-01-31T23:00:00Z``."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1]
    elif text.endswith("+00:00"):
        text = text[:-6]
    return np.datetime64(text, "s")


def format_timestamp(ts):
    return str(np.datetime64(ts, "s")) + "Z"


@dataclass
class StationSeries:
    """Raw or hourly time series of one station.

    ``times`` is strictly increasing; ``speeds`` holds ``NaN`` where the
    sample is missing.
    """
    station_id: str
    easting: float
    northing: float
    elevation: float
    times: np.ndarray
    speeds: np.ndarray

    def __post_init__(self):
        self.easting, self.northing = float(self.easting), float(self.northing)
        self.elevation = float(self.elevation)
        self.times = np.asarray(self.times, dtype="datetime64[s]")
        self.speeds = np.asarray(self.speeds, dtype=float)
        if self.times.shape != self.speeds.shape:
            raise DimensionError(
                f"station {self.station_id}: {self.times.size} timestamps "
                f"but {self.speeds.size} speeds")
        if self.times.size > 1 and np.any(np.diff(self.times) <= np.timedelta64(0, "s")):
            raise SchemaError(f"station {self.station_id}: timestamps not strictly increasing")

    def __len__(self):
        return self.times.size


@dataclass
class ObservationMatrix:
    """Stations x hourly times matrix with ``NaN`` marking missing cells."""
    station_ids: list
    coords: np.ndarray       # (S, 2) easting, northing in m
    elevations: np.ndarray   # (S,)
    times: np.ndarray        # (T,) datetime64[s]
    values: np.ndarray       # (S, T)

    def __post_init__(self):
        self.station_ids = list(self.station_ids)
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        self.elevations = np.asarray(self.elevations, dtype=float)
        self.times = np.asarray(self.times, dtype="datetime64[s]")
        self.values = np.asarray(self.values, dtype=float)
        S, T = self.values.shape
        if len(self.station_ids) != S or self.coords.shape[0] != S or self.elevations.size != S:
            raise DimensionError("station metadata does not match the number of matrix rows")
        if self.times.size != T:
            raise DimensionError("time grid does not match the number of matrix columns")

    @property
    def shape(self):
        return self.values.shape

    @property
    def missing(self):
        return np.isnan(self.values)

    def subset(self, indices):
        """Matrix restricted to the given station rows (order preserved)."""
        idx = np.asarray(indices, dtype=int)
        return ObservationMatrix([self.station_ids[i] for i in idx], self.coords[idx],
                                 self.elevations[idx], self.times.copy(),
                                 self.values[idx].copy())


@dataclass
class QualityReport:
    station_ids: list = field(default_factory=list)
    frac_missing: list = field(default_factory=list)
    frac_negative: list = field(default_factory=list)
    frac_zero: list = field(default_factory=list)
    removed: dict = field(default_factory=dict)   # station_id -> reason
    n_outliers: int = 0

    def rows(self):
        for sid, fm, fn, fz in zip(self.station_ids, self.frac_missing,
                                   self.frac_negative, self.frac_zero):
            yield (sid, fm, fn, fz, sid in self.removed, self.removed.get(sid, ""))


@dataclass(frozen=True)
class NetworkSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    split_fraction: float


# ---------------------------------------------------------------- ingestion

def load_station_csv(paths):
    """Read one or several station CSV files.

    Rows for the same ``station_id`` are merged across files and sorted by
    time. A speed that cannot be parsed (empty, ``NaN``, garbage) becomes a
    missing sample; a row whose timestamp cannot be parsed is dropped with a
    warning.

    Raises
    ------
    SchemaError
        Header does not match the expected columns.
    DuplicateError
        The same (station, timestamp) pair appears twice.
    """
    if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__"):
        paths = [paths]
    meta = {}
    samples = {}
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise SchemaError(f"{path}: empty file") from None
            if tuple(header) != STATION_COLUMNS:
                raise SchemaError(f"{path}: header {header!r} != {list(STATION_COLUMNS)!r}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(STATION_COLUMNS):
                    raise SchemaError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
                sid = row[0].strip()
                try:
                    ts = parse_timestamp(row[4])
                except ValueError:
                    logger.warning("%s:%d: unparseable timestamp %r, row dropped", path, lineno, row[4])
                    continue
                if sid not in meta:
                    try:
                        meta[sid] = tuple(float(v) for v in row[1:4])
                    except ValueError:
                        raise SchemaError(f"{path}:{lineno}: unparseable station location") from None
                    samples[sid] = {}
                if ts in samples[sid]:
                    raise DuplicateError(f"duplicate sample for station {sid} at {format_timestamp(ts)}")
                samples[sid][ts] = _parse_speed(row[5])
    out = []
    for sid in sorted(meta):
        times = np.array(sorted(samples[sid]), dtype="datetime64[s]")
        speeds = np.array([samples[sid][t] for t in times], dtype=float)
        e, n, z = meta[sid]
        out.append(StationSeries(sid, e, n, z, times, speeds))
    return out


def _parse_speed(text):
    try:
        v = float(text)
    except ValueError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def write_station_csv(path, series):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(STATION_COLUMNS)
        for s in series:
            for t, v in zip(s.times, s.speeds):
                w.writerow([s.station_id, repr(float(s.easting)), repr(float(s.northing)), repr(float(s.elevation)),
                            format_timestamp(t), "" if np.isnan(v) else repr(float(v))])


def matrix_to_series(m):
    return [StationSeries(sid, c[0], c[1], z, m.times, row)
            for sid, c, z, row in zip(m.station_ids, m.coords, m.elevations, m.values)]


# ---------------------------------------------------------------- cleaning

def _outlier_mask(x):
    """Fixed point of the outlier rule on one station's speeds.

    A value is an outlier above the physical bound or when its robust
    z-score exceeds the limit; the rule is re-applied on the remaining
    values until nothing new is flagged, which makes cleaning idempotent.
    """
    flagged = np.zeros(x.shape, dtype=bool)
    ok = ~np.isnan(x)
    flagged[ok] = x[ok] > MAX_PHYSICAL_SPEED
    while True:
        keep = ok & ~flagged
        if not keep.any():
            return flagged
        med = np.median(x[keep])
        mad = np.median(np.abs(x[keep] - med))
        if mad == 0.0:
            return flagged
        z = np.abs(x - med) / (MAD_SCALE * mad)
        new = keep & (z > ROBUST_Z_LIMIT)
        if not new.any():
            return flagged
        flagged |= new


def clean_network(series, thresholds=(0.10, 0.10, 0.10)):
    """Remove low-quality stations and blank suspicious samples.

    Parameters
    ----------
    series : list of StationSeries
    thresholds : (missing, negative, zero) fractions
        A station is removed when a fraction strictly exceeds its
        threshold. A station is also removed (reason ``missing>10%``) when
        the fraction of samples that end up missing after cleaning would
        exceed the missing threshold.

    Returns
    -------
    cleaned : list of StationSeries
        Survivors, with zeros, negatives and outliers set to ``NaN``.
    report : QualityReport
    """
    t_miss, t_neg, t_zero = thresholds
    report = QualityReport()
    cleaned = []
    for s in series:
        x = s.speeds
        n = max(x.size, 1)
        nan = np.isnan(x)
        neg = ~nan & (x < 0)
        zero = ~nan & (x == 0)
        fm, fn, fz = nan.sum() / n, neg.sum() / n, zero.sum() / n
        report.station_ids.append(s.station_id)
        report.frac_missing.append(float(fm))
        report.frac_negative.append(float(fn))
        report.frac_zero.append(float(fz))
        if fm > t_miss:
            report.removed[s.station_id] = REASON_MISSING
            continue
        if fn > t_neg:
            report.removed[s.station_id] = REASON_NEGATIVE
            continue
        if fz > t_zero:
            report.removed[s.station_id] = REASON_ZERO
            continue
        y = x.copy()
        y[neg | zero] = np.nan
        out = _outlier_mask(y)
        y[out] = np.nan
        if np.isnan(y).sum() / n > t_miss:
            report.removed[s.station_id] = REASON_MISSING
            continue
        report.n_outliers += int(out.sum())
        cleaned.append(StationSeries(s.station_id, s.easting, s.northing, s.elevation,
                                     s.times.copy(), y))
    return cleaned, report


def write_quality_report(path, report):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("station_id", "frac_missing", "frac_negative", "frac_zero", "removed", "reason"))
        for sid, fm, fn, fz, removed, reason in report.rows():
            w.writerow((sid, f"{fm:.6f}", f"{fn:.6f}", f"{fz:.6f}", int(removed), reason))


def downsample_hourly(series):
    """Average native samples into hourly bins ``[t, t + 1h)``.

    An hour whose samples are all missing is missing.
    """
    if len(series) == 0:
        return StationSeries(series.station_id, series.easting, series.northing,
                             series.elevation, series.times, series.speeds)
    epoch = series.times.astype("int64")
    hours = epoch // 3600
    uniq, inv = np.unique(hours, return_inverse=True)
    ok = ~np.isnan(series.speeds)
    sums = np.bincount(inv, weights=np.where(ok, series.speeds, 0.0), minlength=uniq.size)
    counts = np.bincount(inv, weights=ok.astype(float), minlength=uniq.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    times = (uniq * 3600).astype("datetime64[s]")
    return StationSeries(series.station_id, series.easting, series.northing,
                         series.elevation, times, means)


def build_matrix(series, start, end):
    """Stack hourly series onto the closed-open grid ``[start, end)``.

    Raises
    ------
    DimensionError
        More stations than time steps.
    """
    start = np.datetime64(start, "s")
    end = np.datetime64(end, "s")
    if not start < end:
        raise ParameterError("start must precede end")
    times = np.arange(start, end, HOUR)
    S, T = len(series), times.size
    if S > T:
        raise DimensionError(f"{S} stations exceed {T} time steps")
    values = np.full((S, T), np.nan)
    for i, s in enumerate(series):
        offs = (s.times - start) // HOUR
        offs = offs.astype(np.int64)
        on_grid = (s.times >= start) & (s.times < end) & ((s.times - start) % HOUR == np.timedelta64(0, "s"))
        values[i, offs[on_grid]] = s.speeds[on_grid]
    return ObservationMatrix([s.station_id for s in series],
                             [(s.easting, s.northing) for s in series],
                             [s.elevation for s in series], times, values)


# ---------------------------------------------------------------- imputation

def nearest_stations(coords, k):
    """Indices of the ``k`` nearest other stations for each station.

    Planar Euclidean distance; equidistant stations are ordered by index.
    """
    coords = np.asarray(coords, dtype=float)
    S = coords.shape[0]
    d = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :min(k, S - 1)]


def impute_missing(m, k_space=8, k_time=1):
    """Fill missing cells with the mean of spatio-temporal neighbours.

    Each missing cell takes the mean of the available original values at
    the ``k_space`` nearest other stations over times ``t - k_time`` ..
    ``t + k_time`` (24 values with the defaults). Only pre-imputation values
    are read; non-missing cells are returned unchanged.

    Raises
    ------
    ImputationError
        A missing cell has no available neighbour value.
    """
    vals = m.values
    S, T = vals.shape
    out = vals.copy()
    miss = np.isnan(vals)
    if not miss.any():
        return ObservationMatrix(m.station_ids, m.coords, m.elevations, m.times, out)
    nbrs = nearest_stations(m.coords, k_space)
    pad = np.pad(vals, ((0, 0), (k_time, k_time)), constant_values=np.nan)
    ok = ~np.isnan(pad)
    filled = np.where(ok, pad, 0.0)
    width = 2 * k_time + 1
    for i in np.flatnonzero(miss.any(axis=1)):
        cols = np.flatnonzero(miss[i])
        # (n_missing, width) window of column offsets into the padded matrix
        win = cols[:, None] + np.arange(width)[None, :]
        sums = filled[nbrs[i]][:, win].sum(axis=(0, 2))
        counts = ok[nbrs[i]][:, win].sum(axis=(0, 2))
        empty = counts == 0
        if empty.any():
            j = cols[np.argmax(empty)]
            raise ImputationError(
                f"no neighbour values for station {m.station_ids[i]} "
                f"at {format_timestamp(m.times[j])}")
        out[i, cols] = sums / counts
    return ObservationMatrix(m.station_ids, m.coords, m.elevations, m.times, out)


def split_network(n_stations, fraction=0.8, seed=0):
    """Random train/test partition of station indices.

    The training set holds ``floor(fraction * S)`` stations, clipped so that
    both sets are non-empty.
    """
    if isinstance(n_stations, ObservationMatrix):
        n_stations = n_stations.shape[0]
    S = int(n_stations)
    if not 0.0 < fraction < 1.0:
        raise ParameterError(f"split fraction {fraction} not in (0, 1)")
    if S < 2:
        raise ParameterError("at least two stations are needed for a split")
    n_train = int(math.floor(fraction * S + 1e-9))
    n_train = min(max(n_train, 1), S - 1)
    perm = np.random.default_rng(seed).permutation(S)
    return NetworkSplit(np.sort(perm[:n_train]), np.sort(perm[n_train:]), fraction)


def characteristic_scale(area_km2, n):
    """Mean station spacing ``sqrt(A / n)`` of an unclustered network, in km."""
    if area_km2 <= 0 or n < 1:
        raise ParameterError("area must be positive and n >= 1")
    return math.sqrt(area_km2 / n)
