"""Place virtual turbines on a restriction mask and total their energy.

Every turbine is assumed to run at a constant 1 MW, which gives 8.76 GWh a
year, so the zone totals scale directly with the turbine counts.
"""
import numpy as np

from stwind import siting
from stwind.grids import DemGrid

rng = np.random.default_rng(2)
codes = rng.choice([0, 1, 2, 3], size=(80, 120), p=[0.4, 0.2, 0.2, 0.2]).astype(float)
mask = siting.RestrictionMask(DemGrid(0.0, 0.0, 500.0, codes))

layout = siting.place_turbines(mask, direction_deg=60.0)
energy, _ = siting.annual_energy(np.full((layout.n, 8760), 1000.0))
summary = siting.summarize_potential(layout, energy, mask)

print(f"{'zone':<12}{'area km2':>10}{'turbines':>10}{'TWh':>8}")
for name, z in [*summary.zones.items(), ("total", summary.total)]:
    print(f"{name:<12}{z.area_km2:>10.1f}{z.count:>10d}{z.energy_twh:>8.2f}")
