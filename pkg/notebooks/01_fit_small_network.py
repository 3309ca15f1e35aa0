"""
Fitting an intensity on a small network
=======================================

Simulate points from a smooth intensity, fit the spline model and look at
what comes back.
"""

import tempfile
from pathlib import Path

import numpy as np

from netspline import fit_intensity
from netspline.datasets import simplenet_standin
from netspline.io import save_fit, write_intensity_dump
from netspline.sim import IntensitySpec, bind, ise, sample_arrays

net = simplenet_standin()
print(net.n_vertices, "vertices,", net.n_edges, "edges, total length", round(net.total_length, 4))

# the test intensity is sqrt(y) * exp(-x y), rescaled so it integrates to n
truth = bind(IntensitySpec.named("sqrt_y_exp_neg_xy"), net)
print("normaliser C =", round(truth.normalizer, 4))

n = 200
edges, offsets = sample_arrays(net, truth, n, seed=3)
print("points per edge:", np.bincount(edges, minlength=net.n_edges))

# knots every 0.05 units, bins every 0.01
fit = fit_intensity(net, (edges, offsets), delta=0.05, h=0.01)
print("rho =", f"{fit.rho:.4g}", " edf =", f"{fit.edf:.2f}", " outer steps =", fit.outer_iterations)
print("fitted mass", fit.fitted_mass, "for", n, "points")

# compare fitted and true intensity half way along every edge
mid = (np.arange(net.n_edges), net.lengths / 2)
for m, (a, b) in enumerate(zip(fit.intensity(mid), truth.intensity(*mid, n))):
    print(f"edge {m}: fitted {a:8.2f}   true {b:8.2f}")

print("ISE", f"{ise(fit, truth, n):.3e}")

out = Path(tempfile.mkdtemp())
save_fit(fit, out / "fit.json")
rows = write_intensity_dump(fit, out / "intensity.csv", step=0.01)
print(rows, "rows written to", out)
