"""Propagate wind-speed uncertainty through the log law and a power curve.

Compares the second-order delta-method moments with brute-force sampling.
"""
import numpy as np

from stwind import power
from stwind.power import ENERCON_E101 as curve

rng = np.random.default_rng(0)
mu_z, s2_z, h0 = 5.0, 0.42 ** 2, 0.1    # 10 m speed (m/s), its variance, roughness (m)
mu_v, s2_v = power.loglaw(mu_z, s2_z, h0)
print(f"log-law factor {power.loglaw_factor(h0)}: hub speed {float(mu_v):.2f} m/s, "
      f"sd {np.sqrt(float(s2_v)):.3f} m/s")

for mu in (curve.phi2 - 2 * curve.phi3, curve.phi2, curve.phi2 + 2 * curve.phi3):
    est = power.power_moments(mu, s2_v, curve)
    draws = curve(rng.normal(mu, np.sqrt(s2_v), 10 ** 6))
    print(f"v = {mu:5.2f} m/s  mean {float(est.mean):7.1f} (MC {draws.mean():7.1f})  "
          f"sd {np.sqrt(float(est.var)):6.1f} (MC {draws.std():6.1f}) kW")

# recover the curve parameters from tabulated values
v = np.arange(1.0, 25.5, 0.5)
fit = power.fit_power_curve(v, curve(v) + rng.normal(0, 5.0, v.size))
print(f"refit: phi1 {fit.phi1:.1f} kW, phi2 {fit.phi2:.3f} m/s, phi3 {fit.phi3:.3f} m/s")
