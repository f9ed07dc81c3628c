"""
How much packet loss can an unstable loop take?
===============================================

A single unstable pole at 1.5 sits behind a channel that drops each
packet with probability p.  We sweep p, find where the stabilization
radius reaches 1, and compare with the classical 1/lambda^2 threshold.
"""
import numpy as np
from scipy.optimize import brentq

from ncstab.channel import DelayChannelSpec, statistics_from_spec
from ncstab.synthesis import GeneralMP, optimize_gamma
from ncstab.sysrep import StateSpace

lam = 1.5
family = GeneralMP(StateSpace.from_scalar_tf([1.0], [1.0, -lam]), (1,))


def rho_min(p):
    channel = statistics_from_spec(DelayChannelSpec.dropout(p))
    return optimize_gamma(family, [channel]).rho_min


# the radius grows like p/(1-p)
for p in np.linspace(0.1, 0.6, 6):
    print(f"loss {p:.2f}  rho_min {rho_min(p):.4f}")

# where it crosses one
p_star = brentq(lambda p: rho_min(p) - 1.0, 0.05, 0.95)
print(f"\nthreshold {p_star:.6f}  vs 1/lambda^2 = {1 / lam ** 2:.6f}")
