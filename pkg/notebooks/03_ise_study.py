"""
A small simulation study
========================

Integrated squared error of the density estimate as the number of points
grows, plus a look at how much the knot distance and bin width matter.
"""

import numpy as np

from netspline import FitConfig, run_study, sensitivity_grid
from netspline.datasets import simplenet_standin
from netspline.sim import IntensitySpec

net = simplenet_standin()
spec = IntensitySpec.named("sqrt_y_exp_neg_xy")
config = FitConfig(delta=0.05, h=0.01)

report = run_study(net, spec, [10, 50, 200, 1000], S=20, config=config, seed=0)
for n, row in report.summary.items():
    print(f"n={n:5d}  mean ISE {row['mean_ise']:.3e}  sd {row['sd_ise']:.3e}  failures {row['failures']}")

n_list = np.array(list(report.summary))
means = np.array([row["mean_ise"] for row in report.summary.values()])
slope = np.polyfit(np.log(n_list), np.log(means), 1)[0]
print("log-log slope", round(slope, 2))

# knot distance against bin width; cells with h > delta are not defined
table = sensitivity_grid(net, IntensitySpec.uniform(), 100, [0.1, 0.05], [0.1, 0.05, 0.01], S=10, seed=0)
for (d, h), cell in table.cells.items():
    print(f"delta={d:<5} h={h:<5}", "-" if cell is None else f"{cell[0]:.3e}")
