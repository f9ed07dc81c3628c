"""
Stabilization radius against input delays
==========================================

Same channels as before, but now the plant is minimum phase and each
input carries a pure delay.  Longer delays make the unstable mode harder
to reach before noise accumulates.
"""
from ncstab.channel import DelayChannelSpec, statistics_from_spec
from ncstab.synthesis import ExampleFamily, optimize_gamma

channels = [statistics_from_spec(DelayChannelSpec.one_step_delay(0.4, 2 / 3)),
            statistics_from_spec(DelayChannelSpec.dropout(0.3))]

print("tau1 \\ tau2 " + "".join(f"{t2:>8d}" for t2 in range(1, 7)))
for t1 in range(1, 7):
    row = [optimize_gamma(ExampleFamily(1.5, 0.5, 0.2, t1, t2), channels).rho_min
           for t2 in range(1, 7)]
    print(f"{t1:>11d} " + "".join(f"{r:8.3f}" for r in row))
