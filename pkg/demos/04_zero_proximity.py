"""
Nonminimum-phase zeros near the unstable pole
=============================================

With zeros s1, s2 outside the unit disk the inverse radius says how much
headroom is left.  It shrinks as either zero approaches the pole at 1.5.
The surface is written to zeros_surface.csv for plotting elsewhere.
"""
import csv

import numpy as np

from ncstab.channel import DelayChannelSpec, statistics_from_spec
from ncstab.synthesis import ExampleFamily, optimize_gamma

channels = [statistics_from_spec(DelayChannelSpec.one_step_delay(0.4, 2 / 3)),
            statistics_from_spec(DelayChannelSpec.dropout(0.3))]
zeros = np.array([5.0, 4.0, 3.0, 2.5, 2.0])

with open("zeros_surface.csv", "w", newline="") as fh:
    out = csv.writer(fh)
    out.writerow(["s1", "s2", "rho_min_inverse"])
    for s1 in zeros:
        cells = []
        for s2 in zeros:
            inv = 1 / optimize_gamma(ExampleFamily(1.5, s1, s2), channels).rho_min
            out.writerow([s1, s2, f"{inv:.12g}"])
            cells.append(inv)
        print(f"s1={s1:3.1f}  " + "  ".join(f"{c:6.3f}" for c in cells))
