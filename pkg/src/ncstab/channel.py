"""Statistics of random-delay / dropout subchannels.

A subchannel delivers ``u_d(k) = sum_j alpha_j [chi(k-j) = j] u(k-j)`` where
``chi(k)`` is the i.i.d. transmission delay of the sample sent at time ``k``
(``chi = -1`` encodes a lost packet, probability ``1 - sum(pmf)``).  The
random impulse response has mean ``mu_j = alpha_j p_j`` and covariance
``R``; everything downstream works with

* ``H(z) = sum_j mu_j z^{-j}``, the nominal channel,
* ``S(z) = sum_l r(l) z^{-l}``, ``r(l) = sum_j R[j, j+l]``,
* ``Phi`` with ``Phi Phi~ = S`` and all zeros inside the unit disk,
* ``W = Phi / H``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import DomainError, NotASpectrumError, WNotInvertibleError
from .sysrep import LaurentPoly, StateSpace


class BoundaryMinimumPhaseWarning(UserWarning):
    """Spectral factor has a zero on the unit circle."""


@dataclass(frozen=True)
class DelayChannelSpec:
    pmf: tuple
    weights: tuple = None

    def __post_init__(self):
        pmf = tuple(float(p) for p in np.atleast_1d(self.pmf))
        weights = (1.0,) * len(pmf) if self.weights is None else \
            tuple(float(a) for a in np.atleast_1d(self.weights))
        if len(weights) != len(pmf):
            raise DomainError("pmf and weights must have the same length")
        if not pmf:
            raise DomainError("pmf must not be empty")
        if any(p < 0 or p > 1 for p in pmf) or sum(pmf) > 1 + 1e-12:
            raise DomainError(f"invalid delay pmf {pmf}")
        if any(a < 0 for a in weights):
            raise DomainError("receive weights must be nonnegative")
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def dropout(cls, loss: float) -> "DelayChannelSpec":
        """Memoryless erasure channel losing each packet with probability ``loss``."""
        return cls((1.0 - loss,))

    @classmethod
    def one_step_delay(cls, p_delay: float, alpha: float) -> "DelayChannelSpec":
        """Packets arrive on time or one step late; late packets are scaled by ``alpha``."""
        return cls((1.0 - p_delay, p_delay), (1.0, alpha))

    @property
    def max_delay(self) -> int:
        return len(self.pmf) - 1

    @property
    def drop_probability(self) -> float:
        return max(0.0, 1.0 - sum(self.pmf))

    def to_dict(self) -> dict:
        return {"pmf": list(self.pmf), "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, data: dict) -> "DelayChannelSpec":
        return cls(tuple(data["pmf"]), tuple(data["weights"]) if "weights" in data else None)


@dataclass(frozen=True)
class ChannelStatistics:
    spec: DelayChannelSpec
    mu: np.ndarray
    r: np.ndarray
    esd: LaurentPoly
    phi: LaurentPoly
    h: LaurentPoly
    w: StateSpace = field(repr=False)

    @property
    def w_num(self) -> np.ndarray:
        return self.phi.zinv_coeffs() if not self.phi.is_zero() else np.zeros(1)

    @property
    def w_den(self) -> np.ndarray:
        return self.h.zinv_coeffs()

    @property
    def is_memoryless(self) -> bool:
        return self.spec.max_delay == 0

    def w_at(self, z) -> np.ndarray:
        return self.phi(z) / self.h(z)

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "covariance": self.r.tolist(),
                "esd": self.esd.to_dict(), "phi": self.phi.to_dict(),
                "h": self.h.to_dict(),
                "w": {"num": self.w_num.tolist(), "den": self.w_den.tolist()}}


def impulse_moments(spec: DelayChannelSpec) -> tuple:
    p = np.asarray(spec.pmf)
    a = np.asarray(spec.weights)
    mu = a * p
    r = np.outer(a, a) * (np.diag(p) - np.outer(p, p))
    return mu, r


def esd_from_covariance(r: np.ndarray) -> LaurentPoly:
    n = r.shape[0] - 1
    lags = np.array([np.trace(r, offset=l) for l in range(n + 1)])
    return LaurentPoly(-n, tuple(np.concatenate([lags[:0:-1], lags])))


def _check_spectrum(esd: LaurentPoly, tol: Tolerances) -> None:
    if esd.max_abs_diff(esd.adjoint()) > tol.symmetry * (1 + max(map(abs, esd.coeffs))):
        raise NotASpectrumError("energy spectral density must be symmetric")
    theta = 2 * np.pi * np.arange(tol.spectrum_check_points) / tol.spectrum_check_points
    vals = np.real(esd(np.exp(1j * theta)))
    scale = 1.0 + max(map(abs, esd.coeffs))
    if vals.min() < -tol.spectrum_negativity * scale:
        raise NotASpectrumError(f"spectral density is negative on the circle (min {vals.min():.3e})")


def spectral_factor(esd: LaurentPoly, tol: Tolerances = DEFAULT) -> LaurentPoly:
    """Minimum-phase ``Phi`` (polynomial in z^{-1}) with ``Phi Phi~ = esd``."""
    if esd.is_zero():
        return esd
    _check_spectrum(esd, tol)
    n = esd.hi
    if n == 0:
        return LaurentPoly.constant(np.sqrt(max(esd.coeffs[0], 0.0)))
    # z^n S(z) has degree 2n; keep the n roots of smallest modulus
    roots = np.roots(np.asarray(esd.coeffs)[::-1])
    roots = roots[np.argsort(np.abs(roots))][:n]
    if np.any(np.abs(np.abs(roots) - 1.0) < 1e-6):
        warnings.warn("spectral factor has a zero on the unit circle", BoundaryMinimumPhaseWarning,
                      stacklevel=2)
    monic = np.real(np.poly(roots))            # coefficients of z^n ... z^0 == z^0 ... z^{-n}
    base = LaurentPoly.from_zinv(monic)
    prod = base * base.adjoint()
    lags = range(-n, n + 1)
    num = sum(esd.coeff(l) * prod.coeff(l) for l in lags)
    den = sum(prod.coeff(l) ** 2 for l in lags)
    return base * np.sqrt(num / den)


def reconstruction_error(phi: LaurentPoly, esd: LaurentPoly) -> float:
    return (phi * phi.adjoint()).max_abs_diff(esd)


def statistics_from_spec(spec: DelayChannelSpec, tol: Tolerances = DEFAULT) -> ChannelStatistics:
    mu, r = impulse_moments(spec)
    esd = esd_from_covariance(r)
    phi = spectral_factor(esd, tol)
    h = LaurentPoly.from_zinv(mu)
    if h.is_zero():
        raise WNotInvertibleError("nominal channel is identically zero", root=None)
    if phi.is_zero():
        w = StateSpace.static([[0.0]])
    else:
        hc = h.zinv_coeffs()
        if hc[0] == 0:
            raise WNotInvertibleError("nominal channel has no direct term (zero at infinity)",
                                      root=complex(np.inf))
        zeros = h.roots_z()
        bad = zeros[np.abs(zeros) >= 1.0 - tol.unit_circle_margin]
        if bad.size:
            raise WNotInvertibleError(f"nominal channel has a zero at z={bad[0]:.6g}; "
                                      "W is not invertible in RH-infinity", root=complex(bad[0]))
        w = StateSpace.from_scalar_tf(phi.zinv_coeffs(), hc)
    return ChannelStatistics(spec, mu, r, esd, phi, h, w)
