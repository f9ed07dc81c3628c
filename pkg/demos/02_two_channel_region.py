"""
Admissible loss/delay probabilities for a two-channel plant
===========================================================

Channel 1 delivers late with probability p0 (and a late packet is
weighted by alpha), channel 2 drops with probability p1.  The plant has
one unstable pole and zeros at 3 and 4.  We print the numeric verdict on a
coarse grid next to the closed-form inequality so the two maps can be
compared by eye.
"""
import numpy as np

from ncstab.channel import DelayChannelSpec, statistics_from_spec
from ncstab.errors import WNotInvertibleError
from ncstab.synthesis import (ExampleFamily, example1_intersection, example1_region,
                              optimize_gamma)

lam, s1, s2, alpha = 1.5, 3.0, 4.0, 2 / 3
family = ExampleFamily(lam, s1, s2)
grid = np.linspace(0.05, 0.95, 19)


def numeric(p0, p1):
    try:
        chans = [statistics_from_spec(DelayChannelSpec.one_step_delay(p0, alpha)),
                 statistics_from_spec(DelayChannelSpec.dropout(p1))]
    except WNotInvertibleError:
        # once p0 >= 1/(1+alpha) the mean channel is no longer minimum phase
        return "?"
    return "#" if optimize_gamma(family, chans).rho_min < 1 else "."


# rows: p1 from high to low; columns: p0 left to right
# '#' stabilizable, '.' not, '?' outside the model's scope
print("numeric".ljust(22), "closed form")
for p1 in grid[::-1]:
    left = "".join(numeric(p0, p1) for p0 in grid)
    right = "".join("#" if example1_region(lam, s1, s2, p0, p1, alpha) else "." for p0 in grid)
    print(f"{left}   {right}   p1={p1:.2f}")

print("\nclosed-form intersection of the alpha-curves:", example1_intersection(lam, s1, s2))
