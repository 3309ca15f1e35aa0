"""
Uniform points and the smoothing parameter
==========================================

When the points are spread uniformly there is nothing to smooth: the
Fellner-Schall iteration keeps increasing rho and, for many samples, the
fit runs to the cap and ends up flat at n / |L|.
"""

import numpy as np

from netspline import FitConfig, fit_intensity
from netspline.datasets import simplenet_standin
from netspline.model import prepare, sample_curve
from netspline.sim import IntensitySpec, sample_arrays

net = simplenet_standin()
config = FitConfig(delta=0.05, h=0.01)
setup = prepare(net, config)  # basis, bins and penalty are shared by all fits

n = 100
print("flat level n/|L| =", round(n / net.total_length, 3))

capped = 0
for seed in range(20):
    fit = fit_intensity(net, sample_arrays(net, IntensitySpec.uniform(), n, seed), config, setup=setup)
    lam = fit.intensity(sample_curve(fit, 0.01)[:2])
    capped += fit.rho_capped
    print(f"seed {seed:2d}  rho {fit.rho:9.3g}  capped {fit.rho_capped!s:5}  "
          f"min {lam.min():6.2f}  max {lam.max():6.2f}")

print(capped, "of 20 fits reached the cap")

# the path of rho for the last fit
print(np.array(fit.rho_path))
