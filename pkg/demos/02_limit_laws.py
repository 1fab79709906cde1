"""
Three regimes, three limit laws
===============================

Draw the limiting (Delta, J) pairs and evaluate E exp{h'Delta - h'Jh/2}.
It equals one in the subcritical and critical regimes. In the supercritical
regime it does not, for h = (0, 1, 0, 0), and the closed form of the gap
comes from the Laplace transform of the integrated CIR process.
"""
# %%
import numpy as np

from heston_laq.limits import cir_integral_laplace, laq_violation_value, sample_limit
from heston_laq.model import DriftParams, FixedCoeffs
from heston_laq.sde import SeedSpec, cir_end_and_integral

fixed = FixedCoeffs()
h = np.array([0.0, 1.0, 0.0, 0.0])
for b in (1.0, 0.0, -1.0):
    theta = DriftParams(1.0, 0.0, b, 0.0)
    draw = sample_limit(theta, fixed, SeedSpec(7, 0), size=50_000, n_steps=1000)
    v = draw.laqdj(h)
    print(f"{theta.regime.value:>13}: mean {v.mean():.4f} +- {v.std() / np.sqrt(v.size):.4f}")
print(f"closed form for b = -1: {laq_violation_value(DriftParams(1, 0, -1, 0), fixed):.4f}")

# %%
# The Laplace transform itself, against exact CIR sampling.
_, iy = cir_end_and_integral(1.0, 0.0, 1.0, 1.0, 1.0, 1000, SeedSpec(8), 50_000, "chi2")
mc = np.exp(-0.5 * iy)
print(f"MC {mc.mean():.4f} +- {mc.std() / np.sqrt(mc.size):.4f}, closed form {cir_integral_laplace(1, 1, 1, 1, 0.5):.4f}")

# %%
# Supercritical draws are a variance mixture: Delta_3 / sqrt(J_33) is standard normal
# even though Delta_3 alone has heavy tails.
draw = sample_limit(DriftParams(1, 0, -1, 0), fixed, SeedSpec(9), 50_000, n_steps=1000)
d3 = draw.delta[:, 2]
z = d3 / np.sqrt(draw.info[:, 2, 2])
kurt = lambda x: np.mean(((x - x.mean()) / x.std()) ** 4) - 3
print(f"excess kurtosis of Delta_3: {kurt(d3):.2f}; of the studentised version: {kurt(z):.2f}")
