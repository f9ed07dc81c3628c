"""Central tolerance record.

Every numerical threshold used by the library lives here.  A named profile
can be selected with the ``NCSTAB_TOLERANCE_PROFILE`` environment variable
(``default``, ``strict`` or ``loose``), and individual fields can be
overridden from a problem config.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-12
    eig_residual: float = 1e-9
    lyap_residual: float = 1e-10
    lyap_kron_max_dim: int = 16
    dare_step: float = 1e-13
    dare_residual: float = 1e-10
    dare_max_iter: int = 20000
    dare_relaxation: float = 1.0
    power_iter_tol: float = 1e-14
    power_iter_max: int = 100000
    spectrum_check_points: int = 512
    spectrum_negativity: float = 1e-12
    unit_circle_margin: float = 1e-9
    rank_tol: float = 1e-9
    freq_points: int = 64
    quad_points: int = 4096
    pole_zero_coincidence: float = 1e-8
    balanced_tol: float = 1e-9
    overflow_guard: float = 1e12
    synthesis_fft_points: int = 8192
    synthesis_tap_tol: float = 1e-13

    def replace(self, **changes) -> "Tolerances":
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise KeyError(f"unknown tolerance fields: {sorted(unknown)}")
        return dataclasses.replace(self, **changes)


PROFILES = {
    "default": {},
    "strict": {"dare_residual": 1e-12, "lyap_residual": 1e-12, "rank_tol": 1e-11},
    "loose": {"dare_residual": 1e-8, "lyap_residual": 1e-8, "rank_tol": 1e-7,
              "dare_step": 1e-11},
}

ENV_VAR = "NCSTAB_TOLERANCE_PROFILE"


def profile(name: str | None = None) -> Tolerances:
    name = name or os.environ.get(ENV_VAR, "default")
    try:
        return Tolerances().replace(**PROFILES[name])
    except KeyError:
        raise KeyError(f"unknown tolerance profile {name!r}; "
                       f"choose from {sorted(PROFILES)}") from None


DEFAULT = Tolerances()
