"""Regularized extreme learning machines, GCV, ensembles and their variance.

A member maps inputs through ``N`` logistic neurons with weights and biases
drawn uniformly on [-1, 1], then solves a ridge problem for the output
weights. An ensemble of ``M`` members sharing the training set is a linear
smoother ``f(x0) = lbar(x0)^T y`` with ``lbar`` the mean of the member
weight vectors ``l_m(x0) = (H_m^alpha)^T h_m(x0)``; the variance estimates
below are built from these weight vectors.
"""
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import (DegreesOfFreedomError, DimensionError, EnsembleSizeError,
                     ParameterError, SchemaError, SelectionError, SingularityError)

DEFAULT_ALPHA_GRID = np.logspace(-8, 4, 61)
MAGIC = b"STELM001"


def init_member(d, N, seed):
    """Input weights (d x N) and biases (N,), i.i.d. uniform on [-1, 1]."""
    if N < 1:
        raise ParameterError(f"number of neurons must be >= 1, got {N}")
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1.0, 1.0, size=(d, N))
    b = rng.uniform(-1.0, 1.0, size=N)
    return W, b


def hidden_matrix(X, W, b):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        X = X.reshape(-1, W.shape[0]) if W.shape[0] else np.zeros((1, 0))
    return expit(X @ W + b)


def _svd(H):
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    return U, s, Vt


def fit_ridge(H, y, alpha):
    """Output weights minimizing ``||y - H beta||^2 + alpha ||beta||^2``.

    Solved through the thin SVD of ``H``; no matrix is inverted explicitly.

    Raises
    ------
    SingularityError
        ``alpha == 0`` and ``H^T H`` is singular.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    U, s, Vt = _svd(H)
    if alpha == 0:
        n, N = H.shape
        tol = max(n, N) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        if N > n or s.size < N or s.size == 0 or s[-1] <= tol:
            raise SingularityError("H^T H is singular; use alpha > 0")
        return Vt.T @ ((U.T @ y) / s)
    return Vt.T @ (s / (s ** 2 + alpha) * (U.T @ y))


def _gcv_from_svd(U, s, y, alphas):
    n = y.size
    Uty = U.T @ y
    perp = y - U @ Uty
    rss_perp = perp @ perp
    s2 = s ** 2
    alphas = np.asarray(alphas, dtype=float)
    f = s2[None, :] / (s2[None, :] + alphas[:, None])
    rss = rss_perp + (((1.0 - f) * Uty[None, :]) ** 2).sum(axis=1)
    tr = f.sum(axis=1)
    out = np.full(alphas.size, np.nan)
    ok = (n - tr) > n * 1e-12
    out[ok] = (rss[ok] / n) / (1.0 - tr[ok] / n) ** 2
    return out


def gcv_curve(H, y, alphas):
    """GCV score for each alpha (``NaN`` where ``tr(A_alpha) >= n``)."""
    U, s, _ = _svd(np.asarray(H, dtype=float))
    return _gcv_from_svd(U, s, np.asarray(y, dtype=float), alphas)


def _select(alphas, scores):
    alphas = np.asarray(alphas, dtype=float)
    ok = np.isfinite(scores)
    if not ok.any():
        raise SelectionError("every alpha in the grid is degenerate (tr(A) >= n)")
    best = scores[ok].min()
    tied = ok & (scores <= best + abs(best) * 1e-12)
    return float(alphas[tied].max())


def gcv_select(H, y, alpha_grid=DEFAULT_ALPHA_GRID):
    """Grid alpha minimizing GCV; ties go to the larger alpha."""
    alpha_grid = np.atleast_1d(np.asarray(alpha_grid, dtype=float))
    if alpha_grid.size == 0 or np.any(alpha_grid <= 0):
        raise ParameterError("alpha grid must be nonempty and positive")
    return _select(alpha_grid, gcv_curve(H, y, alpha_grid))


@dataclass
class ElmMember:
    W: np.ndarray
    b: np.ndarray
    alpha: float
    beta: np.ndarray
    seed: int

    @property
    def n_neurons(self):
        return self.b.size

    def hidden(self, X):
        return hidden_matrix(X, self.W, self.b)

    def predict(self, X):
        return self.hidden(X) @ self.beta

    def smoother(self, X_train):
        """``H^alpha = (H^T H + alpha I)^{-1} H^T`` (N x n) and the SVD factors."""
        U, s, Vt = _svd(self.hidden(X_train))
        return (Vt.T * (s / (s ** 2 + self.alpha))) @ U.T, U, s


def fit_member(X, y, n_neurons, seed, alphas=DEFAULT_ALPHA_GRID):
    """Draw one member and fit its output weights; alpha by GCV when a grid is given."""
    X = np.asarray(X, dtype=float)
    W, b = init_member(X.shape[1], n_neurons, seed)
    H = hidden_matrix(X, W, b)
    U, s, Vt = _svd(H)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if alphas.size == 1:
        if alphas[0] <= 0:
            raise ParameterError("alpha must be positive")
        alpha = float(alphas[0])
    else:
        if np.any(alphas <= 0):
            raise ParameterError("alpha grid must be positive")
        alpha = _select(alphas, _gcv_from_svd(U, s, y, alphas))
    beta = Vt.T @ (s / (s ** 2 + alpha) * (U.T @ y))
    return ElmMember(W, b, alpha, beta, int(seed)), (U, s)


# relative slack below which n - df counts as zero (interpolation)
DOF_TOL = 1e-9


@dataclass
class VarianceEstimates:
    sigma2_S2: np.ndarray
    sigma2_BR: np.ndarray
    sigma2_eps: float


class ElmEnsemble:
    """M regularized ELMs trained on the same data.

    Parameters
    ----------
    n_neurons : int, optional
        Hidden layer size; ``floor(0.9 n)`` when omitted.
    n_members : int
        Ensemble size M (20 by default).
    alphas : float or array
        Fixed Tikhonov factor, or a grid searched by GCV per member.
    seed : int
        Master seed; member m uses ``seed ^ m``.
    threads : int
        Worker threads for member fitting. Results do not depend on it.
    """

    def __init__(self, n_neurons=None, n_members=20, alphas=DEFAULT_ALPHA_GRID,
                 seed=0, threads=1):
        self.n_neurons = n_neurons
        self.n_members = int(n_members)
        self.alphas = alphas
        self.seed = int(seed)
        self.threads = max(int(threads), 1)
        self.members = []

    # ------------------------------------------------------------ fitting
    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DimensionError("X must be (n, d) with n == len(y)")
        if self.n_members < 1:
            raise ParameterError("ensemble needs at least one member")
        N = self.n_neurons or max(int(0.9 * y.size), 1)
        seeds = [self.seed ^ m for m in range(self.n_members)]

        def job(sd):
            return fit_member(X, y, N, sd, self.alphas)

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                results = list(pool.map(job, seeds))
        else:
            results = [job(sd) for sd in seeds]
        self._set_members(X, y, [r[0] for r in results], [r[1] for r in results])
        return self

    @classmethod
    def from_members(cls, X, y, members):
        """Ensemble from already fitted members (used for loading and tests)."""
        ens = cls(n_neurons=members[0].n_neurons, n_members=len(members))
        ens.seed = members[0].seed
        X = np.asarray(X, dtype=float)
        svds = [_svd(m.hidden(X))[:2] for m in members]
        ens._set_members(X, np.asarray(y, dtype=float), list(members), svds)
        return ens

    def _set_members(self, X, y, members, svds):
        self.X_ = X
        self.y_ = y
        self.members = members
        self.n_members = len(members)
        self.n_neurons = members[0].n_neurons
        n = y.size
        hat = np.zeros((n, n))
        for m, (U, s) in zip(members, svds):
            f = s ** 2 / (s ** 2 + m.alpha)
            hat += (U * f) @ U.T
        hat /= len(members)
        self.df_ = float(2.0 * np.trace(hat) - np.sum(hat * hat))
        self.fitted_ = hat @ y
        self.residuals_ = y - self.fitted_
        self._hat_cache = hat

    @property
    def alphas_(self):
        return np.array([m.alpha for m in self.members])

    def hat_matrix(self):
        """Ensemble smoother ``Abar = (1/M) sum_m H_m H_m^alpha`` on the training set."""
        return self._hat_cache

    # ------------------------------------------------------------ prediction
    def _check(self, X0):
        X0 = np.asarray(X0, dtype=float)
        if X0.ndim == 1:
            X0 = X0.reshape(1, -1)
        if X0.shape[1] != self.X_.shape[1]:
            raise DimensionError(f"{X0.shape[1]} features given, model expects {self.X_.shape[1]}")
        return X0

    def member_predictions(self, X0):
        X0 = self._check(X0)
        return np.column_stack([m.predict(X0) for m in self.members])

    def predict(self, X0):
        """Ensemble mean prediction."""
        return self.member_predictions(X0).mean(axis=1)

    def weight_vectors(self, X0):
        """Per-member weight vectors ``l_m(x0)``, shape (P, n, M)."""
        X0 = self._check(X0)
        out = np.empty((X0.shape[0], self.y_.size, self.n_members))
        for j, m in enumerate(self.members):
            Ha, _, _ = m.smoother(self.X_)
            out[:, :, j] = m.hidden(X0) @ Ha
        return out

    # ------------------------------------------------------------ variance
    def noise_variance(self):
        """Homoskedastic noise estimate ``||y - Abar y||^2 / (n - df)``.

        ``df = tr(2 Abar - Abar Abar^T)``.

        Raises
        ------
        DegreesOfFreedomError
            ``n <= df``.
        """
        n = self.y_.size
        dof = n - self.df_
        if dof <= DOF_TOL * n:
            raise DegreesOfFreedomError(f"n={n} <= df={self.df_:.6g}")
        return max(float(self.residuals_ @ self.residuals_) / dof, 0.0)

    def noise_diagonal(self):
        """Heteroskedastic noise matrix diagonal ``r_i^2 n / (n - df)``."""
        n = self.y_.size
        dof = n - self.df_
        if dof <= DOF_TOL * n:
            raise DegreesOfFreedomError(f"n={n} <= df={self.df_:.6g}")
        return self.residuals_ ** 2 * (n / dof)

    def variances(self, X0, chunk=2048):
        """Both model-variance estimates and the noise variance.

        With member predictions ``f_m``, mean ``f`` and weight vectors
        ``l_m``, ``lbar``::

            tau2   = sum_m (f_m - f)^2 / (M (M - 1))
            BR     = max(0, tau2 - s2 * sum_m ||l_m - lbar||^2 / (M (M-1))) + s2 ||lbar||^2
            S2     = max(0, tau2 - sum_m (l_m - lbar)^T D (l_m - lbar) / (M (M-1))) + lbar^T D lbar

        where ``s2`` is :meth:`noise_variance` and ``D`` is
        :meth:`noise_diagonal`. The subtracted terms remove the share of
        the member spread caused by the noise all members see.

        Returns
        -------
        pred : array (P,)
        VarianceEstimates
        """
        X0 = self._check(X0)
        M = self.n_members
        if M < 2:
            raise EnsembleSizeError("variance estimation needs at least two members")
        s2 = self.noise_variance()
        D = self.noise_diagonal()
        P = X0.shape[0]
        smoothers = [m.smoother(self.X_)[0] for m in self.members]
        pred = np.empty(P)
        br = np.empty(P)
        s2h = np.empty(P)
        for lo in range(0, P, chunk):
            x = X0[lo:lo + chunk]
            p = x.shape[0]
            lsum = np.zeros((p, self.y_.size))
            sq = np.zeros(p)
            sqd = np.zeros(p)
            F = np.empty((p, M))
            for j, (m, Ha) in enumerate(zip(self.members, smoothers)):
                h = m.hidden(x)
                L = h @ Ha
                F[:, j] = h @ m.beta
                lsum += L
                sq += np.einsum("pi,pi->p", L, L)
                sqd += np.einsum("pi,i,pi->p", L, D, L)
            lbar = lsum / M
            nb = np.einsum("pi,pi->p", lbar, lbar)
            nbd = np.einsum("pi,i,pi->p", lbar, D, lbar)
            spread = np.maximum(sq - M * nb, 0.0)
            spread_d = np.maximum(sqd - M * nbd, 0.0)
            Fc = F - F[:, :1]
            tau2 = Fc.var(axis=1, ddof=1) / M
            denom = M * (M - 1)
            br[lo:lo + p] = np.maximum(tau2 - s2 * spread / denom, 0.0) + s2 * nb
            s2h[lo:lo + p] = np.maximum(tau2 - spread_d / denom, 0.0) + nbd
            pred[lo:lo + p] = F.mean(axis=1)
        return pred, VarianceEstimates(np.maximum(s2h, 0.0), np.maximum(br, 0.0), s2)

    def model_variance(self, X0, mode="S2"):
        """Model variance ``Var[f(x0)]`` at each point; ``mode`` is ``'S2'`` or ``'BR'``."""
        _, v = self.variances(X0)
        if mode == "S2":
            return v.sigma2_S2
        if mode == "BR":
            return v.sigma2_BR
        raise ParameterError(f"mode must be 'S2' or 'BR', got {mode!r}")


def predict_ensemble(ens, X0):
    return ens.predict(X0)


# ---------------------------------------------------------------- persistence

def _write_bin(path, *arrays):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_bin(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise SchemaError(f"{path}: bad magic header")
    return np.frombuffer(raw[8:], dtype="<f8")


def save_ensemble(directory, ens):
    """Manifest plus little-endian float64 weight files.

    ``member_XX.bin`` holds W (d x N, row-major), b and beta after the
    8-byte magic; ``train.bin`` holds X (n x d) and y.
    """
    os.makedirs(directory, exist_ok=True)
    d = ens.X_.shape[1]
    files = []
    for j, m in enumerate(ens.members):
        fname = f"member_{j:03d}.bin"
        _write_bin(os.path.join(directory, fname), m.W, m.b, m.beta)
        files.append(fname)
    _write_bin(os.path.join(directory, "train.bin"), ens.X_, ens.y_)
    manifest = {"d": d, "N": ens.n_neurons, "M": ens.n_members, "n": int(ens.y_.size),
                "seeds": [m.seed for m in ens.members],
                "alphas": [float(m.alpha).hex() for m in ens.members],
                "members": files, "train": "train.bin"}
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)


def load_ensemble(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        man = json.load(fh)
    d, N, n = man["d"], man["N"], man["n"]
    train = _read_bin(os.path.join(directory, man["train"]))
    X = train[:n * d].reshape(n, d)
    y = train[n * d:].copy()
    members = []
    for fname, seed, a in zip(man["members"], man["seeds"], man["alphas"]):
        raw = _read_bin(os.path.join(directory, fname))
        W = raw[:d * N].reshape(d, N)
        b = raw[d * N:d * N + N]
        beta = raw[d * N + N:]
        members.append(ElmMember(W.copy(), b.copy(), float.fromhex(a), beta.copy(), seed))
    return ElmEnsemble.from_members(X.copy(), y, members)

