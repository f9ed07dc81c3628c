"""Mean-square stability of a loop closed over stochastic channels.

Loop wiring (all signals vectors of length ``m`` at the plant input)::

    w = H u + d + v,     y = P w,     u = -K y

``d`` is the zero-mean part of the channel output and ``v`` white noise.
With ``G = K (I + P H K)^{-1} P`` one has ``u = -G (d + v)`` and
``T = G H``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numkit
from .config import DEFAULT, Tolerances
from .errors import DimensionError, DomainError, SingularityError
from .sysrep import StateSpace, as_ss, blockdiag, h2_norm_sq, minreal, series


@dataclass(frozen=True)
class LoopDescription:
    plant: StateSpace
    controller: StateSpace
    channels: tuple
    noise_variance: np.ndarray = None

    def __post_init__(self):
        p = as_ss(self.plant)
        k = as_ss(self.controller)
        chans = tuple(self.channels)
        m = p.n_in
        if len(chans) != m:
            raise DimensionError(f"{len(chans)} channels for a plant with {m} inputs")
        if k.n_out != m or k.n_in != p.n_out:
            raise DimensionError(f"controller shape {k.shape} does not fit plant shape {p.shape}")
        if np.any(p.d != 0):
            raise DomainError("plant must be strictly proper (relative degree >= 1)")
        nv = np.ones(m) if self.noise_variance is None else \
            np.broadcast_to(np.asarray(self.noise_variance, dtype=float), (m,)).copy()
        if np.any(nv < 0):
            raise DomainError("noise variances must be nonnegative")
        object.__setattr__(self, "plant", p)
        object.__setattr__(self, "controller", k)
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "noise_variance", nv)

    @property
    def m(self) -> int:
        return self.plant.n_in

    def nominal_channel(self) -> StateSpace:
        return blockdiag([StateSpace.from_scalar_tf(c.mu, [1.0]) for c in self.channels])

    def permuted(self, order: Sequence[int]) -> "LoopDescription":
        """Same loop with channel indices relabelled by ``order``."""
        order = list(order)
        perm = np.eye(self.m)[order]
        return LoopDescription(self.plant.scale_in(perm.T), self.controller.scale_out(perm),
                               [self.channels[i] for i in order], self.noise_variance[order])


def _closed_loop(loop: LoopDescription) -> StateSpace:
    """Map ``v -> -u`` with the full interconnection state ``[x_p, x_h, x_k]``."""
    p, k, h = loop.plant, loop.controller, loop.nominal_channel()
    # u = Ck xk - Dk Cp xp ;  w = Ch xh + Dh u + v
    u_x = np.hstack([-k.d @ p.c, np.zeros((k.n_out, h.n)), k.c])
    w_x = np.hstack([np.zeros((h.n_out, p.n)), h.c, np.zeros((h.n_out, k.n))]) + h.d @ u_x
    a = np.vstack([
        p.b @ w_x + np.hstack([p.a, np.zeros((p.n, h.n + k.n))]),
        h.b @ u_x + np.hstack([np.zeros((h.n, p.n)), h.a, np.zeros((h.n, k.n))]),
        np.hstack([-k.b @ p.c, np.zeros((k.n, h.n)), k.a]),
    ])
    b = np.vstack([p.b, np.zeros((h.n + k.n, loop.m))])
    return StateSpace(a, b, -u_x, np.zeros((loop.m, loop.m)))


def input_sensitivity(loop: LoopDescription) -> StateSpace:
    """``G = K (I + P H K)^{-1} P`` (full interconnection realization)."""
    return _closed_loop(loop)


def build_complementary_sensitivity(loop: LoopDescription, tol: Tolerances = DEFAULT) -> StateSpace:
    """Minimal realization of ``T = K (I + P H K)^{-1} P H``."""
    return minreal(series(_closed_loop(loop), loop.nominal_channel()), tol)


@dataclass(frozen=True)
class StabilityReport:
    t_hat_w: np.ndarray
    g_hat: np.ndarray
    g_phi: np.ndarray
    rho: float
    nominal_stable: bool
    ms_stable: bool
    closed_loop_radius: float
    powers: np.ndarray | None

    def to_dict(self) -> dict:
        return {
            "nominal_stable": self.nominal_stable,
            "ms_stable": self.ms_stable,
            "closed_loop_spectral_radius": self.closed_loop_radius,
            "rho": self.rho if self.nominal_stable else None,
            "t_hat_w": self.t_hat_w.tolist() if self.nominal_stable else None,
            "predicted_powers": None if self.powers is None else self.powers.tolist(),
        }


def _weighted_norms(base: StateSpace, weights: Sequence[StateSpace], tol: Tolerances) -> np.ndarray:
    m = base.n_in
    out = np.zeros((base.n_out, m))
    for i in range(base.n_out):
        for j in range(m):
            out[i, j] = h2_norm_sq(series(base.select([i], [j]), weights[j]), tol)
    return out


def stationary_powers(g_hat: np.ndarray, g_phi: np.ndarray, noise_variance: np.ndarray) -> np.ndarray:
    """Solve ``(I - G_hat_Phi) pow = G_hat sigma^2``."""
    lhs = np.eye(g_hat.shape[0]) - g_phi
    if abs(np.linalg.det(lhs)) < 1e-14:
        raise SingularityError("power balance is singular (rho = 1)")
    return np.linalg.solve(lhs, g_hat @ noise_variance)


def ms_stability_test(loop: LoopDescription, tol: Tolerances = DEFAULT) -> StabilityReport:
    cl = _closed_loop(loop)
    radius = float(numkit.spectral_radius(cl.a)) if cl.n else 0.0
    m = loop.m
    nan = np.full((m, m), np.nan)
    if radius >= 1.0 - tol.unit_circle_margin:
        return StabilityReport(nan, nan, nan, float("nan"), False, False, radius, None)
    h = loop.nominal_channel()
    t = series(cl, h)
    t_hat_w = _weighted_norms(t, [c.w for c in loop.channels], tol)
    phis = [StateSpace.from_scalar_tf(c.w_num, [1.0]) for c in loop.channels]
    g_phi = _weighted_norms(cl, phis, tol)
    g_hat = _weighted_norms(cl, [StateSpace.static([[1.0]])] * m, tol)
    rho = numkit.spectral_radius_nonneg(t_hat_w, tol)
    ms = rho < 1.0
    powers = stationary_powers(g_hat, g_phi, loop.noise_variance) if ms else None
    return StabilityReport(t_hat_w, g_hat, g_phi, float(rho), True, bool(ms), radius, powers)
