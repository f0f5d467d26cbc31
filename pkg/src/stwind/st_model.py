"""Spatio-temporal model: EOF basis plus one ELM ensemble per component.

The field at a new location is ``mu_t(t) + sum_k a_k(s0) phi_k(t)`` where each
coefficient map ``a_k`` is regressed on terrain features. Model variance sums
the per-component ensemble variances weighted by ``phi_k(t)^2``. A second model
of the same kind, fitted to log squared training residuals, supplies the
prediction variance.
"""
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import ObservationMatrix
from .elm import DEFAULT_ALPHA_GRID, ElmEnsemble, load_ensemble, save_ensemble
from .eof import fit_eof, load_eof, save_eof
from .errors import (DimensionError, EvaluationError, NumericError, ParameterError,
                     RangeError)
from .terrain import Standardizer

CROSS_COVARIANCE_THRESHOLD = 0.2
COVERAGE_Z = 1.96


@dataclass
class StModelConfig:
    n_members: int = 20
    n_neurons: int = None
    alphas: object = field(default_factory=lambda: DEFAULT_ALPHA_GRID.copy())
    k_retained: int = None
    floor: float = 1e-6
    seed: int = 0
    threads: int = 1


def component_seed(seed, stage, k):
    """Master seed of the ensemble for component ``k`` of model ``stage``."""
    return int(np.random.SeedSequence([int(seed), int(stage), int(k)]).generate_state(1)[0])


@dataclass
class StModel:
    eof: object
    ensembles: list
    standardizer: Standardizer
    station_ids: list
    times: np.ndarray
    config: StModelConfig
    stage: int = 0

    @property
    def n_components(self):
        return len(self.ensembles)

    def time_index(self, times=None):
        """Indices into the training time grid.

        ``times`` may be ``None`` (all), integer indices or datetime64 values.

        Raises
        ------
        RangeError
            A time is not on the training grid.
        """
        T = self.times.size
        if times is None:
            return np.arange(T)
        t = np.atleast_1d(np.asarray(times))
        if np.issubdtype(t.dtype, np.datetime64):
            t = t.astype("datetime64[s]")
            pos = np.searchsorted(self.times, t)
            ok = (pos < T) & (self.times[np.minimum(pos, T - 1)] == t)
            if not ok.all():
                raise RangeError(f"time {t[np.argmin(ok)]} not in the model time grid")
            return pos
        t = t.astype(int)
        if t.size and (t.min() < 0 or t.max() >= T):
            raise RangeError(f"time index outside [0, {T})")
        return t

    def features(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.standardizer.mean.size:
            raise DimensionError(f"{X.shape[1]} features given, model expects "
                                 f"{self.standardizer.mean.size}")
        return self.standardizer.transform(X)


@dataclass
class StPrediction:
    mean: np.ndarray        # (P, T)
    var_model: np.ndarray
    var_pred: np.ndarray


@dataclass
class VarianceModel:
    model: StModel
    floor: float

    def component_br(self, X):
        return _component_estimates(self.model, X)[2]

    def component_eps(self):
        return np.array([e.noise_variance() for e in self.model.ensembles])


@dataclass(frozen=True)
class CrossCovarianceDiagnostics:
    max_abs: float
    pair: tuple
    matrix: np.ndarray
    threshold: float = CROSS_COVARIANCE_THRESHOLD

    @property
    def flagged(self):
        return self.max_abs > self.threshold


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    baseline_rmse: float
    baseline_mae: float
    n: int


def fit(train, features, config=None, stage=0):
    """EOF decomposition followed by one ensemble per nonzero component.

    Parameters
    ----------
    train : ObservationMatrix
        Complete training matrix.
    features : array (S, d)
        Raw features of the training stations, rows aligned with ``train``.
    config : StModelConfig, optional
    stage : int
        Seed stream; the variance model uses 1.
    """
    cfg = config or StModelConfig()
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[0] != train.shape[0]:
        raise DimensionError(f"{X.shape[0]} feature rows for {train.shape[0]} stations")
    std = Standardizer().fit(X)
    Xs = std.transform(X)
    d = fit_eof(train, cfg.k_retained)
    K = int(np.count_nonzero(d.singular_values[:d.k_retained] > 0))
    ensembles = []
    for k in range(K):
        ens = ElmEnsemble(n_neurons=cfg.n_neurons, n_members=cfg.n_members, alphas=cfg.alphas,
                          seed=component_seed(cfg.seed, stage, k), threads=cfg.threads)
        ensembles.append(ens.fit(Xs, d.coeffs[:, k]))
    return StModel(d, ensembles, std, list(train.station_ids), train.times.copy(), cfg, stage)


def _component_estimates(model, X):
    """Coefficient predictions, S2 and BR variances (each P x K) and noise (K,)."""
    Xs = model.features(X)
    P, K = Xs.shape[0], model.n_components
    a = np.zeros((P, K))
    s2 = np.zeros((P, K))
    br = np.zeros((P, K))
    eps = np.zeros(K)
    for k, ens in enumerate(model.ensembles):
        a[:, k], v = ens.variances(Xs)
        s2[:, k], br[:, k], eps[k] = v.sigma2_S2, v.sigma2_BR, v.sigma2_eps
    return a, s2, br, eps


def component_coefficients(model, X):
    Xs = model.features(X)
    out = np.zeros((Xs.shape[0], model.n_components))
    for k, ens in enumerate(model.ensembles):
        out[:, k] = ens.predict(Xs)
    return out


def field_from_coefficients(model, coeffs, times=None):
    """``mu_t + coeffs @ phi^T`` on the selected time steps."""
    idx = model.time_index(times)
    K = model.n_components
    return model.eof.mu_t[idx][None, :] + coeffs[:, :K] @ model.eof.phi[idx, :K].T


def weighted_component_sum(values, phi_rows):
    """``sum_k values[p, k] phi_rows[t, k]^2``, shape (P, T).

    Components with a zero basis column or zero value add nothing.
    """
    v = np.atleast_2d(np.asarray(values, dtype=float))
    ph = np.atleast_2d(np.asarray(phi_rows, dtype=float))
    return v @ (ph ** 2).T


def predict(model, X, times=None):
    """Mean field (P x T) at locations with raw features ``X``."""
    return field_from_coefficients(model, component_coefficients(model, X), times)


def component_variances(model, X):
    """Per-component S2 model variances (P x K)."""
    return _component_estimates(model, X)[1]


def model_variance(model, X, times=None):
    """Spatio-temporal model variance ``sum_k S2_k(s0) phi_k(t)^2``."""
    idx = model.time_index(times)
    s2 = component_variances(model, X)
    return weighted_component_sum(s2, model.eof.phi[idx, :model.n_components])


def training_fit(model):
    """Fitted field at the training stations (S x T)."""
    coeffs = np.column_stack([e.fitted_ for e in model.ensembles]) if model.ensembles \
        else np.zeros((len(model.station_ids), 0))
    return field_from_coefficients(model, coeffs)


def cross_covariance_check(model_or_residuals, threshold=CROSS_COVARIANCE_THRESHOLD):
    """Largest absolute correlation between component training residuals.

    Accepts a fitted model or an (n x K) residual matrix. A value above
    ``threshold`` triggers a warning, not an error.
    """
    if isinstance(model_or_residuals, StModel):
        ens = model_or_residuals.ensembles
        R = np.column_stack([e.residuals_ for e in ens]) if ens else np.zeros((0, 0))
    else:
        R = np.atleast_2d(np.asarray(model_or_residuals, dtype=float))
    K = R.shape[1] if R.ndim == 2 else 0
    if K < 2:
        return CrossCovarianceDiagnostics(0.0, (), np.eye(K), threshold)
    Rc = R - R.mean(axis=0)
    norms = np.sqrt(np.sum(Rc ** 2, axis=0))
    norms = np.where(norms > 0, norms, np.inf)
    C = (Rc.T @ Rc) / np.outer(norms, norms)
    np.fill_diagonal(C, 0.0)
    i, j = np.unravel_index(np.argmax(np.abs(C)), C.shape)
    mx = float(abs(C[i, j]))
    np.fill_diagonal(C, 1.0)
    diag = CrossCovarianceDiagnostics(mx, (int(min(i, j)), int(max(i, j))), C, threshold)
    if diag.flagged:
        warnings.warn(f"component residuals {diag.pair} correlated at {mx:.3f} "
                      f"(threshold {threshold})", RuntimeWarning, stacklevel=2)
    return diag


def fit_variance_model(model, train, features, config=None):
    """Second model fitted to ``L = log(R^2 + floor)`` of the training residuals."""
    cfg = config or model.config
    if not cfg.floor > 0:
        raise ParameterError("residual floor must be positive")
    R2 = (train.values - training_fit(model)) ** 2
    L = np.log(R2 + cfg.floor)
    target = ObservationMatrix(train.station_ids, train.coords, train.elevations,
                               train.times, L)
    return VarianceModel(fit(target, features, cfg, stage=model.stage + 1), cfg.floor)


def backtransform_variance(mu_L, sigma2_L):
    """``exp(mu_L) (1 + sigma2_L / 2)``, the second-order log-normal back-transform."""
    mu_L = np.asarray(mu_L, dtype=float)
    if not np.isfinite(mu_L).all():
        raise NumericError("non-finite log-variance prediction")
    return np.exp(mu_L) * (1.0 + 0.5 * np.asarray(sigma2_L, dtype=float))


def prediction_variance(vm, X, times=None):
    m = vm.model
    idx = m.time_index(times)
    a, _, br, eps = _component_estimates(m, X)
    phi = m.eof.phi[idx, :m.n_components]
    mu_L = field_from_coefficients(m, a, idx)
    s2_L = weighted_component_sum(br + eps[None, :], phi)
    return backtransform_variance(mu_L, s2_L)


def predict_all(model, vm, X, times=None):
    """Mean, model variance and prediction variance in one pass."""
    idx = model.time_index(times)
    a, s2, _, _ = _component_estimates(model, X)
    mean = field_from_coefficients(model, a, idx)
    var_model = weighted_component_sum(s2, model.eof.phi[idx, :model.n_components])
    var_pred = prediction_variance(vm, X, idx) if vm is not None else np.full_like(mean, np.nan)
    if not np.isfinite(mean).all():
        raise NumericError("non-finite mean prediction")
    return StPrediction(mean, var_model, var_pred)


def error_metrics(pred, obs):
    """RMSE and MAE over cells where ``obs`` is observed."""
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    ok = ~np.isnan(obs)
    if not ok.any():
        raise EvaluationError("no observed test cells")
    e = pred[ok] - obs[ok]
    return math.sqrt(float(np.mean(e ** 2))), float(np.mean(np.abs(e))), int(ok.sum())


def _test_times(model, test):
    return model.time_index(test.times)


def evaluate(model, test, features, prediction=None):
    """Test RMSE and MAE, with the temporal-mean baseline for comparison."""
    if test.shape[0] == 0:
        raise EvaluationError("empty test set")
    idx = _test_times(model, test)
    mean = prediction.mean if prediction is not None else predict(model, features, idx)
    rmse, mae, n = error_metrics(mean, test.values)
    base = np.broadcast_to(model.eof.mu_t[idx], test.values.shape)
    b_rmse, b_mae, _ = error_metrics(base, test.values)
    return Metrics(rmse, mae, b_rmse, b_mae, n)


def coverage_fraction(obs, mean, var_pred, z=COVERAGE_Z):
    obs = np.asarray(obs, dtype=float)
    ok = ~np.isnan(obs)
    if not ok.any():
        raise EvaluationError("no observed test cells")
    half = z * np.sqrt(np.asarray(var_pred, dtype=float)[ok])
    return float(np.mean(np.abs(obs[ok] - np.asarray(mean, dtype=float)[ok]) <= half))


def coverage_check(model, vm, test, features, prediction=None, z=COVERAGE_Z):
    """Fraction of test observations inside ``mean +- z sigma_P``."""
    if prediction is None:
        prediction = predict_all(model, vm, features, _test_times(model, test))
    return coverage_fraction(test.values, prediction.mean, prediction.var_pred, z)


# ---------------------------------------------------------------- persistence

def _config_json(cfg):
    out = asdict(cfg)
    # thread count is an execution setting, not part of the fitted model
    out.pop("threads")
    a = np.atleast_1d(np.asarray(cfg.alphas, dtype=float))
    out["alphas"] = [float(v).hex() for v in a]
    out["alphas_scalar"] = np.ndim(cfg.alphas) == 0
    return out


def _config_from_json(obj):
    a = [float.fromhex(v) for v in obj.pop("alphas")]
    scalar = obj.pop("alphas_scalar")
    return StModelConfig(alphas=a[0] if scalar else np.array(a), **obj)


def save_model(directory, model):
    os.makedirs(directory, exist_ok=True)
    save_eof(os.path.join(directory, "eof_"), model.eof, model.times, model.station_ids)
    meta = {"config": _config_json(model.config), "stage": model.stage,
            "k_retained": model.eof.k_retained,
            "n_components": model.n_components,
            "feature_mean": [float(v).hex() for v in model.standardizer.mean],
            "feature_std": [float(v).hex() for v in model.standardizer.std]}
    with open(os.path.join(directory, "model.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
    for k, ens in enumerate(model.ensembles):
        save_ensemble(os.path.join(directory, f"component_{k + 1:03d}"), ens)


def load_model(directory):
    with open(os.path.join(directory, "model.json")) as fh:
        meta = json.load(fh)
    d, times, ids = load_eof(os.path.join(directory, "eof_"))
    ens = [load_ensemble(os.path.join(directory, f"component_{k + 1:03d}"))
           for k in range(meta["n_components"])]
    std = Standardizer([float.fromhex(v) for v in meta["feature_mean"]],
                       [float.fromhex(v) for v in meta["feature_std"]])
    return StModel(d, ens, std, ids, times, _config_from_json(meta["config"]), meta["stage"])


def save_variance_model(directory, vm):
    save_model(directory, vm.model)
    with open(os.path.join(directory, "floor.json"), "w") as fh:
        json.dump({"floor": float(vm.floor).hex()}, fh)


def load_variance_model(directory):
    with open(os.path.join(directory, "floor.json")) as fh:
        floor = float.fromhex(json.load(fh)["floor"])
    return VarianceModel(load_model(directory), floor)
