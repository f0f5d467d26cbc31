"""From wind-speed moments at measurement height to turbine power moments.

Speeds are lifted to hub height with the logarithmic wind profile and pushed
through a logistic power curve ``P(v) = phi1 S(v)``,
``S(v) = 1 / (1 + exp(-(v - phi2) / phi3))``, with second-order (mean) and
first-order (variance) Taylor expansions.
"""
import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import FitError, GeometryError, ParameterError, SchemaError


@dataclass(frozen=True)
class TurbineConfig:
    h1: float = 10.0       # measurement height, m
    h2: float = 100.0      # hub height, m
    cutout: float = 25.0   # m/s

    def __post_init__(self):
        if not 0 < self.h1 <= self.h2:
            raise GeometryError(f"need 0 < h1 <= h2, got h1={self.h1}, h2={self.h2}")
        if not self.cutout > 0:
            raise ParameterError("cut-out speed must be positive")


@dataclass(frozen=True)
class PowerCurve:
    phi1: float   # asymptotic power, kW
    phi2: float   # inflection speed, m/s
    phi3: float   # scale, m/s

    def __post_init__(self):
        if not (self.phi1 > 0 and self.phi3 > 0):
            raise ParameterError("power curve needs phi1 > 0 and phi3 > 0")

    def __call__(self, v):
        return self.phi1 * expit((np.asarray(v, dtype=float) - self.phi2) / self.phi3)


# Logistic fit to the manufacturer curve of the 3 MW class reference turbine.
ENERCON_E101 = PowerCurve(3075.31, 8.47, 1.27)


@dataclass
class PowerMoments:
    mean: np.ndarray     # kW
    var: np.ndarray      # kW^2
    cutout: np.ndarray   # bool
    n_clamped: int = 0   # negative input variances set to zero


def loglaw_factor(h0, cfg=TurbineConfig()):
    """``ln(h2/h0) / ln(h1/h0)``.

    Raises
    ------
    GeometryError
        Some ``h0`` is not in ``(0, h1)``.
    """
    h0 = np.asarray(h0, dtype=float)
    if np.any(~(h0 > 0)) or np.any(h0 >= cfg.h1):
        raise GeometryError(f"roughness length must lie in (0, {cfg.h1}) m")
    # base 10 keeps decade ratios such as (0.1, 10, 100) exact
    return np.log10(cfg.h2 / h0) / np.log10(cfg.h1 / h0)


def loglaw(mu_z, s2_z, h0, cfg=TurbineConfig()):
    """Mean and variance of hub-height speed: ``(c mu_z, c^2 s2_z)``."""
    c = loglaw_factor(h0, cfg)
    return c * np.asarray(mu_z, dtype=float), c * c * np.asarray(s2_z, dtype=float)


def curve_derivatives(c, v):
    """``(P, P', P'')`` of the logistic curve at speeds ``v``."""
    S = expit((np.asarray(v, dtype=float) - c.phi2) / c.phi3)
    g = S * (1.0 - S)
    return c.phi1 * S, c.phi1 / c.phi3 * g, c.phi1 / c.phi3 ** 2 * g * (1.0 - 2.0 * S)


def _clamp_variance(s2):
    s2 = np.asarray(s2, dtype=float)
    neg = s2 < 0
    n = int(np.count_nonzero(neg))
    if n:
        warnings.warn(f"{n} negative speed variances clamped to zero", RuntimeWarning,
                      stacklevel=3)
        s2 = np.where(neg, 0.0, s2)
    return s2, n


def power_moments(mu_v, s2_v, c):
    """Delta-method power moments for a hub-height speed with mean ``mu_v``
    and variance ``s2_v``::

        E[P]   = phi1 S [1 + (1 - S)(1 - 2S) s2_v / (2 phi3^2)]
        Var[P] = (phi1 / phi3)^2 S^2 (1 - S)^2 s2_v

    ``E[P]`` is clipped to ``[0, phi1]``.
    """
    s2, n = _clamp_variance(s2_v)
    S = expit((np.asarray(mu_v, dtype=float) - c.phi2) / c.phi3)
    g = S * (1.0 - S)
    mean = c.phi1 * S * (1.0 + (1.0 - S) * (1.0 - 2.0 * S) * s2 / (2.0 * c.phi3 ** 2))
    var = (c.phi1 / c.phi3) ** 2 * g * g * s2
    mean = np.clip(mean, 0.0, c.phi1)
    return PowerMoments(mean, var, np.zeros(np.shape(mean), dtype=bool), n)


def apply_cutout(mu_v, result, cfg=TurbineConfig()):
    """Zero output where the mean hub-height speed exceeds the cut-out speed."""
    flag = np.asarray(mu_v, dtype=float) > cfg.cutout
    flag = np.broadcast_to(flag, np.shape(result.mean))
    return PowerMoments(np.where(flag, 0.0, result.mean), np.where(flag, 0.0, result.var),
                        flag | result.cutout, result.n_clamped)


def wind_to_power(mu_z, s2_z, h0, curve=ENERCON_E101, cfg=TurbineConfig()):
    """Log-law, delta method and cut-out in one call."""
    mu_v, s2_v = loglaw(mu_z, s2_z, h0, cfg)
    return apply_cutout(mu_v, power_moments(mu_v, s2_v, curve), cfg)


# ---------------------------------------------------------------- curve fit

def _initial_guess(v, p):
    phi1 = float(p.max())
    order = np.argsort(v)
    vs, ps = v[order], p[order]
    # first upward crossing of each level, linearly interpolated

    def crossing(level):
        i = int(np.argmax(ps >= level))
        if i == 0:
            return float(vs[0])
        return float(vs[i - 1] + (level - ps[i - 1]) * (vs[i] - vs[i - 1]) / (ps[i] - ps[i - 1]))

    phi2 = crossing(0.5 * phi1)
    rise = crossing(0.9 * phi1) - crossing(0.1 * phi1)
    spread = float(vs[-1] - vs[0])
    phi3 = rise / 4.0 if rise > 0 else max(spread, 1.0) / 8.0
    return np.array([phi1, phi2, phi3])


def _residual_jacobian(theta, v, p):
    phi1, phi2, phi3 = theta
    z = (v - phi2) / phi3
    S = expit(z)
    g = S * (1.0 - S)
    r = p - phi1 * S
    J = np.column_stack([S, -phi1 * g / phi3, -phi1 * g * z / phi3])
    return r, J


def fit_power_curve(speeds, powers, max_iter=200, tol=1e-10):
    """Least-squares logistic power curve by Gauss-Newton with backtracking.

    Starts from the maximum power, the half-maximum crossing speed and a
    quarter of the 10%-90% rise interval.

    Raises
    ------
    FitError
        Degenerate data or no convergence; carries the final residual.
    """
    v = np.asarray(speeds, dtype=float).ravel()
    p = np.asarray(powers, dtype=float).ravel()
    if v.size != p.size:
        raise ParameterError("speeds and powers differ in length")
    if v.size < 4 or np.unique(v).size < v.size:
        raise ParameterError("need at least four points with distinct speeds")
    if not (np.isfinite(v).all() and np.isfinite(p).all()):
        raise ParameterError("non-finite power curve points")
    if not p.max() > 0 or np.ptp(p) <= 1e-12 * abs(p.max()):
        raise FitError("power values do not rise; logistic curve undefined",
                       residual=float(np.sum((p - p.mean()) ** 2)))
    theta = _initial_guess(v, p)
    r, J = _residual_jacobian(theta, v, p)
    ssr = float(r @ r)
    scale = float(p @ p)
    for _ in range(max_iter):
        grad = J.T @ r
        gnorm = np.linalg.norm(grad) / (np.linalg.norm(J) * math.sqrt(scale) + 1e-300)
        if gnorm <= tol or ssr <= 1e-28 * scale:
            return PowerCurve(*map(float, theta))
        step = np.linalg.lstsq(J, r, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            cand = theta + t * step
            if cand[0] > 0 and cand[2] > 0:
                rc, Jc = _residual_jacobian(cand, v, p)
                sc = float(rc @ rc)
                if sc < ssr:
                    break
            t *= 0.5
        else:
            # no decrease left in floating point: at the minimum
            return PowerCurve(*map(float, theta))
        if np.all(np.abs(cand - theta) <= 1e-15 * np.abs(theta)):
            return PowerCurve(*map(float, cand))
        theta, r, J, ssr = cand, rc, Jc, sc
    raise FitError(f"power curve fit did not converge in {max_iter} iterations "
                   f"(residual sum of squares {ssr:.6g})", residual=ssr)


def read_power_curve_csv(path):
    """Datasheet points from a ``speed_mps,power_kw`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["speed_mps", "power_kw"]:
        raise SchemaError(f"{path}: expected header speed_mps,power_kw")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:] if a.strip()])
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return data[:, 0], data[:, 1]
