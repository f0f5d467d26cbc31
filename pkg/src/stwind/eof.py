"""Empirical orthogonal function decomposition of a stations x times matrix.

The centred matrix is factored as ``Z~ = A Phi^T`` with orthonormal temporal
basis columns ``Phi`` (T x S) and spatial coefficient maps ``A`` (S x S).
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import CompletenessError, DimensionError, NumericError


@dataclass
class EofDecomposition:
    mu_t: np.ndarray            # (T,)
    phi: np.ndarray             # (T, S) orthonormal columns
    coeffs: np.ndarray          # (S, S) column k is the k-th coefficient map
    singular_values: np.ndarray # (S,) nonincreasing
    k_retained: int

    @property
    def n_times(self):
        return self.phi.shape[0]


@dataclass(frozen=True)
class Eq4Diagnostics:
    """Empirical checks that coefficient maps are centred, uncorrelated and
    ordered by decreasing variance."""
    max_abs_mean: float          # max_k |sum_i a_k(s_i)| / scale_k
    max_offdiag_cov: float       # relative to the largest variance
    monotonicity_violations: int
    tol: float

    @property
    def mean_ok(self):
        return self.max_abs_mean <= self.tol

    @property
    def cov_ok(self):
        return self.max_offdiag_cov <= self.tol

    @property
    def order_ok(self):
        return self.monotonicity_violations == 0

    @property
    def passed(self):
        return self.mean_ok and self.cov_ok and self.order_ok


def _values(m):
    return np.asarray(getattr(m, "values", m), dtype=float)


def temporal_mean(m):
    """Mean over stations at each time step."""
    z = _values(m)
    if np.isnan(z).any():
        raise CompletenessError("temporal mean needs a matrix without missing values")
    return z.mean(axis=0)


def center(m, mu_t):
    z = _values(m)
    mu_t = np.asarray(mu_t, dtype=float)
    if mu_t.shape != (z.shape[1],):
        raise DimensionError(f"mean of length {mu_t.size} for {z.shape[1]} time steps")
    return z - mu_t[None, :]


def decompose(ztilde, k_retained=None, mu_t=None, scale=0.0):
    """Thin SVD of the centred matrix.

    Each basis vector is flipped so that its largest-magnitude entry is
    positive. Singular values below the numerical rank tolerance are set to
    zero together with their coefficient maps. ``scale`` (the norm of the
    uncentred data) raises that tolerance so that a matrix of pure centring
    round-off counts as zero.

    Raises
    ------
    DimensionError
        More stations than time steps.
    NumericError
        Non-finite input.
    """
    z = np.asarray(ztilde, dtype=float)
    S, T = z.shape
    if S > T:
        raise DimensionError(f"{S} stations exceed {T} time steps")
    if not np.isfinite(z).all():
        raise NumericError("non-finite values in the centred matrix")
    U, s, Vt = np.linalg.svd(z, full_matrices=False)
    phi = Vt.T.copy()
    idx = np.argmax(np.abs(phi), axis=0)
    signs = np.where(phi[idx, np.arange(S)] < 0, -1.0, 1.0)
    phi *= signs
    U = U * signs
    tol = max(s[0], float(scale)) * max(S, T) * np.finfo(float).eps if S else 0.0
    s = np.where(s > tol, s, 0.0)
    coeffs = U * s
    k = S if k_retained is None else int(k_retained)
    if not 0 <= k <= S:
        raise DimensionError(f"k_retained={k} outside [0, {S}]")
    if mu_t is None:
        mu_t = np.zeros(T)
    return EofDecomposition(np.asarray(mu_t, dtype=float), phi, coeffs, s, k)


def fit_eof(m, k_retained=None):
    """Temporal mean, centring and decomposition in one call."""
    mu = temporal_mean(m)
    scale = np.linalg.norm(_values(m))
    return decompose(center(m, mu), k_retained=k_retained, mu_t=mu, scale=scale)


def reconstruct(d, coeffs_at, times=None):
    """Field ``mu_t(t) + sum_k a_k phi_k(t)`` at locations with given coefficients.

    Parameters
    ----------
    coeffs_at : array (K,) or (P, K)
        Coefficients of the first K components at each location.
    times : index array or slice, optional
        Subset of time steps; all by default.
    """
    a = np.atleast_2d(np.asarray(coeffs_at, dtype=float))
    K = a.shape[1]
    if K > d.k_retained:
        raise DimensionError(f"{K} coefficients for {d.k_retained} retained components")
    sel = slice(None) if times is None else times
    out = d.mu_t[sel][None, :] + a @ d.phi[sel, :K].T
    return out[0] if np.ndim(coeffs_at) == 1 else out


def verify_eq4(d, tol=1e-8):
    A = np.asarray(d.coeffs, dtype=float)
    S = A.shape[0]
    s = np.asarray(d.singular_values, dtype=float)
    scale = np.maximum(s, tol * (s.max() if s.size else 0.0)) + np.finfo(float).tiny
    max_mean = float(np.max(np.abs(A.sum(axis=0)) / scale)) if S else 0.0
    Ac = A - A.mean(axis=0)
    cov = Ac.T @ Ac / S
    diag = np.diag(cov)
    top = diag.max() if diag.size and diag.max() > 0 else 1.0
    off = cov - np.diag(diag)
    max_off = float(np.abs(off).max() / top) if S else 0.0
    viol = int(np.sum(diag[1:] > diag[:-1] * (1 + tol) + tol * top))
    return Eq4Diagnostics(max_mean, max_off, viol, tol)


def save_eof(prefix, d, times, station_ids):
    """Write ``<prefix>mu_t.csv``, ``phi.csv``, ``coefficients.csv``, ``singular_values.csv``."""
    from .data import format_timestamp
    K = d.k_retained
    with open(prefix + "mu_t.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("timestamp", "mean"))
        for t, v in zip(times, d.mu_t):
            w.writerow((format_timestamp(t), repr(float(v))))
    np.savetxt(prefix + "phi.csv", d.phi[:, :K], delimiter=",", fmt="%.17g")
    with open(prefix + "coefficients.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id"] + [f"a_{k + 1}" for k in range(K)])
        for sid, row in zip(station_ids, d.coeffs[:, :K]):
            w.writerow([sid] + [repr(float(v)) for v in row])
    np.savetxt(prefix + "singular_values.csv", d.singular_values, delimiter=",", fmt="%.17g")


def load_eof(prefix):
    from .data import parse_timestamp
    with open(prefix + "mu_t.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    times = np.array([parse_timestamp(r[0]) for r in rows], dtype="datetime64[s]")
    mu = np.array([float(r[1]) for r in rows])
    s = np.atleast_1d(np.loadtxt(prefix + "singular_values.csv", delimiter=","))
    phi = np.loadtxt(prefix + "phi.csv", delimiter=",", ndmin=2).reshape(mu.size, -1)
    with open(prefix + "coefficients.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    ids = [r[0] for r in rows]
    A = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), -1)
    K = phi.shape[1]
    return EofDecomposition(mu, phi, A, s, K), times, ids
