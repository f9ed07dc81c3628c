"""Transfer functions, state-space models and factorizations.

Conventions
-----------
* Discrete time; ``z^{-1}`` is the unit delay.
* :class:`LaurentPoly` stores coefficients for *increasing powers of z*
  starting at ``lo``; a polynomial in ``z^{-1}`` therefore has ``lo <= 0``
  and highest power ``0``.
* Models are compared by frequency response, never by realization.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.signal

from . import numkit
from .config import DEFAULT, Tolerances
from .errors import (DimensionError, FactorizationError, SingularityError, StabilityError,
                     StructuralError)


# --------------------------------------------------------------------------
# Laurent polynomials


@dataclass(frozen=True)
class LaurentPoly:
    """Finite two-sided coefficient sequence ``sum_k coeffs[k] z^(lo+k)``."""

    lo: int
    coeffs: tuple

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        nz = np.flatnonzero(c)
        if nz.size == 0:
            object.__setattr__(self, "lo", 0)
            object.__setattr__(self, "coeffs", ())
            return
        object.__setattr__(self, "lo", int(self.lo) + int(nz[0]))
        object.__setattr__(self, "coeffs", tuple(float(v) for v in c[nz[0]:nz[-1] + 1]))

    @classmethod
    def from_zinv(cls, coeffs: Sequence[float]) -> "LaurentPoly":
        """Polynomial ``sum_j coeffs[j] z^{-j}``."""
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        return cls(-(len(c) - 1), tuple(c[::-1]))

    @classmethod
    def constant(cls, value: float) -> "LaurentPoly":
        return cls(0, (value,))

    @property
    def hi(self) -> int:
        return self.lo + len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return len(self.coeffs) == 0

    def coeff(self, power: int) -> float:
        k = power - self.lo
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0.0

    def zinv_coeffs(self) -> np.ndarray:
        """Coefficients in increasing powers of ``z^{-1}`` (requires ``hi <= 0``)."""
        if self.is_zero():
            return np.zeros(1)
        if self.hi > 0:
            raise ValueError("not a polynomial in z^{-1}")
        return np.array([self.coeff(-j) for j in range(0, -self.lo + 1)])

    def adjoint(self) -> "LaurentPoly":
        """``p~(z) = p(z^{-1})`` for real scalar coefficients."""
        if self.is_zero():
            return self
        return LaurentPoly(-self.hi, tuple(reversed(self.coeffs)))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for k, c in enumerate(self.coeffs):
            out = out + c * z ** (self.lo + k)
        return out

    def __add__(self, other: "LaurentPoly") -> "LaurentPoly":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        lo = min(self.lo, other.lo)
        hi = max(self.hi, other.hi)
        return LaurentPoly(lo, tuple(self.coeff(p) + other.coeff(p) for p in range(lo, hi + 1)))

    def __neg__(self) -> "LaurentPoly":
        return LaurentPoly(self.lo, tuple(-c for c in self.coeffs))

    def __sub__(self, other: "LaurentPoly") -> "LaurentPoly":
        return self + (-other)

    def __mul__(self, other) -> "LaurentPoly":
        if not isinstance(other, LaurentPoly):
            return LaurentPoly(self.lo, tuple(float(other) * c for c in self.coeffs))
        if self.is_zero() or other.is_zero():
            return LaurentPoly(0, ())
        # fsum rounds each coefficient correctly, so the product does not
        # depend on summation order and (p q)~ == p~ q~ holds bit for bit
        a, b = self.coeffs, other.coeffs
        out = tuple(math.fsum(a[i] * b[k - i] for i in range(max(0, k - len(b) + 1), min(k, len(a) - 1) + 1))
                    for k in range(len(a) + len(b) - 1))
        return LaurentPoly(self.lo + other.lo, out)

    __rmul__ = __mul__

    def max_abs_diff(self, other: "LaurentPoly") -> float:
        lo = min(self.lo, other.lo) if not (self.is_zero() and other.is_zero()) else 0
        hi = max(self.hi if not self.is_zero() else lo, other.hi if not other.is_zero() else lo)
        return max((abs(self.coeff(p) - other.coeff(p)) for p in range(lo, hi + 1)), default=0.0)

    def roots_z(self) -> np.ndarray:
        """Finite nonzero roots in ``z`` of the polynomial."""
        if len(self.coeffs) <= 1:
            return np.zeros(0, dtype=complex)
        return np.roots(self.coeffs[::-1])

    def to_dict(self) -> dict:
        return {"lowest_power": self.lo, "coefficients": [float(c) for c in self.coeffs]}


# --------------------------------------------------------------------------
# State-space models


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _shaped(m, shape: tuple, name: str) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.size == 0 and 0 in shape:
        return np.zeros(shape)
    if arr.ndim < 2 and arr.size == shape[0] * shape[1]:
        return arr.reshape(shape)
    if arr.shape != shape:
        raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


@dataclass(frozen=True)
class StateSpace:
    """``x(k+1) = A x(k) + B u(k)``, ``y(k) = C x(k) + D u(k)``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        n = np.asarray(self.a).shape[0] if np.asarray(self.a).size else 0
        a = _shaped(self.a, (n, n), "a")
        b = _shaped(self.b, (n, d.shape[1]), "b")
        c = _shaped(self.c, (d.shape[0], n), "c")
        for name, val in zip("abcd", (a, b, c, d)):
            object.__setattr__(self, name, _frozen(val))

    # ---- construction helpers
    @classmethod
    def static(cls, gain) -> "StateSpace":
        d = numkit.as_matrix(gain)
        return cls(np.zeros((0, 0)), np.zeros((0, d.shape[1])), np.zeros((d.shape[0], 0)), d)

    @classmethod
    def delay(cls, k: int, m: int = 1) -> "StateSpace":
        """``z^{-k} I_m``."""
        if k < 0:
            raise ValueError("delay must be nonnegative")
        if k == 0:
            return cls.static(np.eye(m))
        n = k * m
        a = np.zeros((n, n))
        a[m:, :-m] = np.eye(n - m) if n > m else a[m:, :-m]
        b = np.zeros((n, m))
        b[:m] = np.eye(m)
        c = np.zeros((m, n))
        c[:, -m:] = np.eye(m)
        return cls(a, b, c, np.zeros((m, m)))

    @classmethod
    def from_scalar_tf(cls, num_zinv, den_zinv) -> "StateSpace":
        """Realize ``num(z^{-1}) / den(z^{-1})`` (coefficients in powers of z^{-1})."""
        num = np.atleast_1d(np.asarray(num_zinv, dtype=float))
        den = np.atleast_1d(np.asarray(den_zinv, dtype=float))
        if den[0] == 0:
            raise ValueError("den(∞) = 0: transfer function is improper")
        length = max(len(num), len(den))
        num = np.pad(num, (0, length - len(num)))
        den = np.pad(den, (0, length - len(den)))
        if length == 1:
            return cls.static([[num[0] / den[0]]])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.signal.BadCoefficients)
            a, b, c, d = scipy.signal.tf2ss(num, den)
        return cls(a, b, c, d)

    # ---- shape
    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_in(self) -> int:
        return self.d.shape[1]

    @property
    def n_out(self) -> int:
        return self.d.shape[0]

    @property
    def shape(self) -> tuple:
        return self.d.shape

    # ---- analysis
    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.a) if self.n else np.zeros(0, dtype=complex)

    def is_stable(self, margin: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0 - margin))

    def freqresp(self, z) -> np.ndarray:
        """Evaluate ``C (zI - A)^{-1} B + D`` at each point of ``z``; shape (len(z), q, p)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.n == 0:
            return np.broadcast_to(self.d, (z.size,) + self.d.shape).astype(complex)
        eye = np.eye(self.n)
        lhs = z[:, None, None] * eye - self.a
        rhs = np.broadcast_to(self.b.astype(complex), (z.size,) + self.b.shape)
        return self.c @ np.linalg.solve(lhs, rhs) + self.d

    def __call__(self, z) -> np.ndarray:
        return self.freqresp(np.asarray([z]))[0]

    def impulse(self, length: int) -> np.ndarray:
        """Markov parameters ``h[0] = D, h[k] = C A^{k-1} B``; shape (length, q, p)."""
        h = np.zeros((length,) + self.d.shape)
        h[0] = self.d
        if self.n == 0:
            return h
        x = self.b.copy()
        for k in range(1, length):
            h[k] = self.c @ x
            x = self.a @ x
        return h

    # ---- algebra
    def __matmul__(self, other: "StateSpace") -> "StateSpace":
        return series(self, other)

    def __add__(self, other: "StateSpace") -> "StateSpace":
        return parallel(self, other)

    def __neg__(self) -> "StateSpace":
        return StateSpace(self.a, self.b, -self.c, -self.d)

    def __sub__(self, other: "StateSpace") -> "StateSpace":
        return parallel(self, -other)

    def scale_out(self, left) -> "StateSpace":
        """``left @ G`` for a constant matrix."""
        left = numkit.as_matrix(left)
        return StateSpace(self.a, self.b, left @ self.c, left @ self.d)

    def scale_in(self, right) -> "StateSpace":
        """``G @ right`` for a constant matrix."""
        right = numkit.as_matrix(right)
        return StateSpace(self.a, self.b @ right, self.c, self.d @ right)

    def select(self, rows=None, cols=None) -> "StateSpace":
        rows = range(self.n_out) if rows is None else rows
        cols = range(self.n_in) if cols is None else cols
        rows, cols = list(np.atleast_1d(rows)), list(np.atleast_1d(cols))
        return StateSpace(self.a, self.b[:, cols], self.c[rows, :], self.d[np.ix_(rows, cols)])

    def inverse(self) -> "StateSpace":
        if self.n_in != self.n_out:
            raise DimensionError("only square systems can be inverted")
        if abs(np.linalg.det(self.d)) < 1e-14 * max(1.0, np.max(np.abs(self.d)) ** self.n_in):
            raise SingularityError("D is singular; inverse is improper")
        dinv = np.linalg.inv(self.d)
        return StateSpace(self.a - self.b @ dinv @ self.c, self.b @ dinv, -dinv @ self.c, dinv)

    def transpose(self) -> "StateSpace":
        return StateSpace(self.a.T, self.c.T, self.b.T, self.d.T)

    def similarity(self, t) -> "StateSpace":
        """Change of state coordinates ``x = T xi``."""
        t = numkit.as_matrix(t)
        ti = np.linalg.inv(t)
        return StateSpace(ti @ self.a @ t, ti @ self.b, self.c @ t, self.d)

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "b": self.b.tolist(),
                "c": self.c.tolist(), "d": self.d.tolist(),
                "states": self.n, "inputs": self.n_in, "outputs": self.n_out}

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpace":
        d = np.atleast_2d(np.asarray(data["d"], dtype=float))
        n = len(data.get("a", []))
        a = np.asarray(data.get("a", np.zeros((0, 0))), dtype=float).reshape(n, n)
        b = np.asarray(data.get("b", np.zeros((n, d.shape[1]))), dtype=float).reshape(n, d.shape[1])
        c = np.asarray(data.get("c", np.zeros((d.shape[0], n))), dtype=float).reshape(d.shape[0], n)
        return cls(a, b, c, d)


def _blkdiag(*mats) -> np.ndarray:
    return scipy.linalg.block_diag(*[np.atleast_2d(m) if np.size(m) else np.zeros(np.shape(m)) for m in mats])


def series(g2: StateSpace, g1: StateSpace) -> StateSpace:
    """Product ``g2 · g1`` (``g1`` acts first)."""
    if g2.n_in != g1.n_out:
        raise DimensionError(f"cannot cascade {g2.shape} after {g1.shape}")
    a = np.block([[g1.a, np.zeros((g1.n, g2.n))], [g2.b @ g1.c, g2.a]])
    b = np.vstack([g1.b, g2.b @ g1.d])
    c = np.hstack([g2.d @ g1.c, g2.c])
    return StateSpace(a, b, c, g2.d @ g1.d)


def parallel(g1: StateSpace, g2: StateSpace) -> StateSpace:
    if g1.shape != g2.shape:
        raise DimensionError(f"cannot add {g1.shape} and {g2.shape}")
    return StateSpace(_blkdiag(g1.a, g2.a), np.vstack([g1.b, g2.b]),
                      np.hstack([g1.c, g2.c]), g1.d + g2.d)


def hstack(models: Sequence[StateSpace]) -> StateSpace:
    """``[G1 G2 ...]`` (separate inputs, summed outputs)."""
    q = models[0].n_out
    if any(g.n_out != q for g in models):
        raise DimensionError("hstack needs equal output counts")
    return StateSpace(_blkdiag(*[g.a for g in models]), _blkdiag(*[g.b for g in models]),
                      np.hstack([g.c for g in models]), np.hstack([g.d for g in models]))


def vstack(models: Sequence[StateSpace]) -> StateSpace:
    """``[G1; G2; ...]`` (shared input)."""
    p = models[0].n_in
    if any(g.n_in != p for g in models):
        raise DimensionError("vstack needs equal input counts")
    return StateSpace(_blkdiag(*[g.a for g in models]), np.vstack([g.b for g in models]),
                      _blkdiag(*[g.c for g in models]), np.vstack([g.d for g in models]))


def blockdiag(models: Sequence[StateSpace]) -> StateSpace:
    return StateSpace(_blkdiag(*[g.a for g in models]), _blkdiag(*[g.b for g in models]),
                      _blkdiag(*[g.c for g in models]), _blkdiag(*[g.d for g in models]))


# --------------------------------------------------------------------------
# Minimal realization


def _orth(m: np.ndarray, tol: float) -> np.ndarray:
    if m.size == 0:
        return np.zeros((m.shape[0], 0))
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((m.shape[0], 0))
    return u[:, s > tol * max(1.0, s[0])]


def _reachable_basis(a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    v = _orth(b, tol)
    while True:
        grown = _orth(np.hstack([v, a @ v]), tol)
        if grown.shape[1] == v.shape[1]:
            return v
        v = grown


def minreal(g: StateSpace, tol: Tolerances = DEFAULT) -> StateSpace:
    """Kalman decomposition: keep the controllable and observable part."""
    if g.n == 0:
        return g
    scale = max(1.0, np.max(np.abs(g.a)))
    v = _reachable_basis(g.a / scale, g.b / max(1.0, np.max(np.abs(g.b))), tol.rank_tol)
    a, b, c = v.T @ g.a @ v, v.T @ g.b, g.c @ v
    if a.shape[0] == 0:
        return StateSpace.static(g.d)
    w = _reachable_basis(a.T / scale, c.T / max(1.0, np.max(np.abs(c))), tol.rank_tol)
    if w.shape[1] == 0:
        return StateSpace.static(g.d)
    return StateSpace(w.T @ a @ w, w.T @ b, c @ w, g.d)


# --------------------------------------------------------------------------
# Rational transfer matrices


@dataclass(frozen=True)
class TransferMatrix:
    """Grid of scalar rational functions in ``z^{-1}``.

    ``entries[i][j] = (num, den)`` with :class:`LaurentPoly` polynomials in
    ``z^{-1}``.  Convert with :meth:`to_ss` / :meth:`from_ss`.
    """

    entries: tuple

    @classmethod
    def from_coeffs(cls, grid) -> "TransferMatrix":
        rows = []
        for row in grid:
            rows.append(tuple((LaurentPoly.from_zinv(n), LaurentPoly.from_zinv(d)) for n, d in row))
        return cls(tuple(rows))

    @classmethod
    def scalar(cls, num_zinv, den_zinv=(1.0,)) -> "TransferMatrix":
        return cls.from_coeffs([[(num_zinv, den_zinv)]])

    @property
    def shape(self) -> tuple:
        return (len(self.entries), len(self.entries[0]))

    def freqresp(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.zeros((z.size,) + self.shape, dtype=complex)
        for i, row in enumerate(self.entries):
            for j, (num, den) in enumerate(row):
                out[:, i, j] = num(z) / den(z)
        return out

    def to_ss(self, tol: Tolerances = DEFAULT) -> StateSpace:
        rows = []
        for row in self.entries:
            rows.append(hstack([StateSpace.from_scalar_tf(n.zinv_coeffs(), d.zinv_coeffs())
                                for n, d in row]))
        return minreal(vstack(rows), tol)

    @classmethod
    def from_ss(cls, g: StateSpace) -> "TransferMatrix":
        rows = []
        for i in range(g.n_out):
            row = []
            for j in range(g.n_in):
                gij = minreal(g.select([i], [j]))
                if gij.n == 0:
                    row.append((LaurentPoly.constant(gij.d[0, 0]), LaurentPoly.constant(1.0)))
                    continue
                num, den = _ss2tf(gij)
                # descending powers of z with equal length == ascending powers of z^{-1}
                row.append((LaurentPoly.from_zinv(num[0]), LaurentPoly.from_zinv(den)))
            rows.append(tuple(row))
        return cls(tuple(rows))


def as_ss(g) -> StateSpace:
    if isinstance(g, StateSpace):
        return g
    if isinstance(g, TransferMatrix):
        return g.to_ss()
    return StateSpace.static(g)


def unit_circle_grid(n: int = DEFAULT.freq_points) -> np.ndarray:
    """``n`` unit-circle points with log-spaced frequencies mirrored about 0."""
    half = n // 2
    theta = np.pi * np.logspace(-3, 0, half, endpoint=False)
    theta = np.concatenate([theta, -theta * 0.99])
    if n % 2:
        theta = np.append(theta, 0.0)
    return np.exp(1j * theta)


def freq_distance(g1, g2, z=None) -> float:
    z = unit_circle_grid() if z is None else z
    f1 = g1.freqresp(z)
    f2 = g2.freqresp(z)
    return float(np.max(np.abs(f1 - f2)))


# --------------------------------------------------------------------------
# H2 norm


def h2_norm_sq(g, tol: Tolerances = DEFAULT) -> float:
    """Squared H2 norm ``trace(D*D + B* Xo B)`` with ``Xo = A*XoA + C*C``."""
    g = as_ss(g)
    if g.n and not g.is_stable():
        raise StabilityError("H2 norm of an unstable system is infinite")
    val = float(np.sum(g.d * g.d))
    if g.n:
        xo = numkit.solve_discrete_lyapunov(g.a, g.c.T @ g.c, form="adjoint", tol=tol)
        val += float(np.trace(g.b.T @ xo @ g.b))
    return val


def h2_norm_sq_quadrature(g, points: int = DEFAULT.quad_points) -> float:
    """``(1/2π) ∫ ||G(e^{jθ})||_F^2 dθ`` by the rectangle rule."""
    theta = 2 * np.pi * np.arange(points) / points
    f = as_ss(g).freqresp(np.exp(1j * theta))
    return float(np.mean(np.sum(np.abs(f) ** 2, axis=(1, 2))))


# --------------------------------------------------------------------------
# Coprime factorization and Youla parameterization


@dataclass(frozen=True)
class CoprimeQuadruple:
    """Stable factors of ``G = N M^{-1} = M~^{-1} N~`` with the double Bezout identity

    ``[[V~, U~], [-N~, M~]] @ [[M, -U], [N, V]] = I``.
    """

    n: StateSpace
    m: StateSpace
    n_tilde: StateSpace
    m_tilde: StateSpace
    u: StateSpace
    v: StateSpace
    u_tilde: StateSpace
    v_tilde: StateSpace
    f: np.ndarray = field(repr=False, default=None)
    l: np.ndarray = field(repr=False, default=None)

    def bezout_residual(self, z=None) -> float:
        z = unit_circle_grid() if z is None else z
        fr = {k: getattr(self, k).freqresp(z) for k in
              ("n", "m", "n_tilde", "m_tilde", "u", "v", "u_tilde", "v_tilde")}
        left = np.block([[fr["v_tilde"], fr["u_tilde"]], [-fr["n_tilde"], fr["m_tilde"]]])
        right = np.block([[fr["m"], -fr["u"]], [fr["n"], fr["v"]]])
        eye = np.eye(left.shape[-1])
        return float(max(np.max(np.abs(left @ right - eye)), np.max(np.abs(right @ left - eye))))

    def controller(self, q: StateSpace | None = None) -> StateSpace:
        """Youla controller ``K = (U + M Q)(V - N Q)^{-1}`` for negative feedback."""
        if q is None:
            return minreal(series(self.u, self.v.inverse()))
        ua = parallel(self.u, series(self.m, q))
        va = parallel(self.v, -series(self.n, q))
        return right_fraction(ua, va)


def right_fraction(num: StateSpace, den: StateSpace) -> StateSpace:
    """Realize ``num · den^{-1}`` from a joint realization of ``[num; den]``."""
    joint = vstack([num, den])
    p = num.n_out
    c1, c2 = joint.c[:p], joint.c[p:]
    d1, d2 = joint.d[:p], joint.d[p:]
    d2i = np.linalg.inv(d2)
    return StateSpace(joint.a - joint.b @ d2i @ c2, joint.b @ d2i,
                      c1 - d1 @ d2i @ c2, d1 @ d2i)


def _lqr_gain(a, b) -> np.ndarray:
    """State feedback ``F`` from the unit-weight discrete LQR."""
    n, p = b.shape
    try:
        x = scipy.linalg.solve_discrete_are(a, b, np.eye(n), np.eye(p))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise StructuralError(f"realization is not stabilizable: {exc}") from exc
    return -np.linalg.solve(np.eye(p) + b.T @ x @ b, b.T @ x @ a)


def coprime_factorize(gh: StateSpace) -> CoprimeQuadruple:
    """Doubly coprime factorization from LQR-designed ``F`` and ``L``."""
    a, b, c, d = gh.a, gh.b, gh.c, gh.d
    n, p, q = gh.n, gh.n_in, gh.n_out
    if n == 0:
        f, l = np.zeros((p, 0)), np.zeros((0, q))
    else:
        f = _lqr_gain(a, b)
        l = _lqr_gain(a.T, c.T).T
        if max(np.abs(np.linalg.eigvals(a + b @ f))) >= 1 or \
                max(np.abs(np.linalg.eigvals(a + l @ c))) >= 1:
            raise StructuralError("realization is not stabilizable/detectable")
    af, al = a + b @ f, a + l @ c
    cf = c + d @ f
    ip, iq = np.eye(p), np.eye(q)
    return CoprimeQuadruple(
        n=StateSpace(af, b, cf, d),
        m=StateSpace(af, b, f, ip),
        n_tilde=StateSpace(al, b + l @ d, c, d),
        m_tilde=StateSpace(al, l, c, iq),
        u=StateSpace(af, l, f, np.zeros((p, q))),
        v=StateSpace(af, -l, cf, iq),
        u_tilde=StateSpace(al, l, f, np.zeros((p, q))),
        v_tilde=StateSpace(al, -(b + l @ d), f, ip),
        f=f, l=l,
    )


# --------------------------------------------------------------------------
# Inner-outer factorization


def inner_residual(g: StateSpace, z=None) -> float:
    """``max ||G~G - I||`` over unit-circle points."""
    z = unit_circle_grid() if z is None else z
    f = g.freqresp(z)
    prod = np.conj(np.swapaxes(f, 1, 2)) @ f
    return float(np.max(np.abs(prod - np.eye(g.n_in))))


def _min_energy_feedback(a: np.ndarray, b: np.ndarray, tol: Tolerances) -> tuple:
    """Stabilizing solution of ``X = A*XA - A*XB(I + B*XB)^{-1}B*XA``.

    Returns ``(X, F)``.  The stable modes carry no weight; on the unstable
    block the inverse ``Y = X^{-1}`` solves a Stein equation in ``A^{-1}``.
    """
    n, p = b.shape
    if n == 0:
        return np.zeros((0, 0)), np.zeros((p, 0))
    eigs = np.linalg.eigvals(a)
    if np.min(np.abs(np.abs(eigs) - 1.0)) < tol.unit_circle_margin:
        raise FactorizationError("zero on the unit circle")
    t, z, sdim = scipy.linalg.schur(a, output="real", sort="iuc")
    x = np.zeros((n, n))
    if sdim < n:
        t22 = t[sdim:, sdim:]
        b2 = (z.T @ b)[sdim:]
        t22i = np.linalg.inv(t22)
        y = numkit.solve_discrete_lyapunov(t22i, t22i @ b2 @ b2.T @ t22i.T, tol=tol)
        if np.min(np.linalg.eigvalsh(numkit.symmetrize(y))) <= 1e-13 * max(1.0, np.max(np.abs(y))):
            raise StructuralError("unstable mode is not controllable")
        x22 = numkit.symmetrize(np.linalg.inv(y))
        x[sdim:, sdim:] = x22
        x = z @ x @ z.T
    f = -np.linalg.solve(np.eye(p) + b.T @ x @ b, b.T @ x @ a)
    return x, f


def _inv_sqrt(r: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(numkit.symmetrize(r))
    if np.min(w) <= 0:
        raise SingularityError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def inner_outer_factorize(m, tol: Tolerances = DEFAULT) -> tuple:
    """``M = M_in M_out`` with ``M_in`` inner (minimal) and ``M_out`` outer.

    ``M`` must be square, stable and biproper.  The inner factor carries the
    zeros of ``M`` outside the unit disk.  It is obtained as the inner
    denominator of a right coprime factorization ``M^{-1} = N1 M1^{-1}``;
    then ``M_in = M1`` and ``M_out = N1^{-1}``.
    """
    m = as_ss(m)
    if m.n_in != m.n_out:
        raise DimensionError("inner-outer factorization needs a square system")
    if m.n and not m.is_stable():
        raise StabilityError("inner-outer factorization needs a stable system")
    g = m.inverse()
    x, f = _min_energy_feedback(g.a, g.b, tol)
    r_isqrt = _inv_sqrt(np.eye(g.n_in) + g.b.T @ x @ g.b)
    af = g.a + g.b @ f
    inner = StateSpace(af, g.b @ r_isqrt, f, r_isqrt)
    n1 = StateSpace(af, g.b @ r_isqrt, g.c + g.d @ f, g.d @ r_isqrt)
    return minreal(inner, tol), n1.inverse()


# --------------------------------------------------------------------------
# Γ-scaled inner machinery


def gamma_inner_riccati(m_in: StateSpace, gamma, tol: Tolerances = DEFAULT) -> tuple:
    """``(X, F, R)`` for the Γ-weighted DARE of the inner ``m_in``."""
    gamma = numkit.as_matrix(gamma)
    x = numkit.solve_dare(m_in.a, m_in.b, m_in.c, m_in.d, gamma, tol)
    f = numkit.dare_gain(m_in.a, m_in.b, m_in.c, m_in.d, gamma, x)
    r = m_in.d.T @ gamma @ m_in.d + m_in.b.T @ x @ m_in.b
    return x, f, r


def gamma_inner(m_in: StateSpace, gamma, tol: Tolerances = DEFAULT) -> StateSpace:
    """Inner factor ``M_Γin`` of ``Γ^{1/2} M_in``."""
    gamma = numkit.as_matrix(gamma)
    x, f, r = gamma_inner_riccati(m_in, gamma, tol)
    r_is = _inv_sqrt(r)
    g_half = np.diag(np.sqrt(np.diag(gamma)))
    return StateSpace(m_in.a + m_in.b @ f, m_in.b @ r_is,
                      g_half @ (m_in.c + m_in.d @ f), g_half @ m_in.d @ r_is)


def gamma_inner_inverse(m_gin: StateSpace) -> StateSpace:
    """Anti-stable realization ``(Â, B̂, Ĉ, D̂)`` of ``M_Γin^{-1}``."""
    d = m_gin.d
    if abs(np.linalg.det(d)) < 1e-14:
        raise SingularityError("D of the inner factor is singular")
    di = np.linalg.inv(d)
    a_hat = m_gin.a - m_gin.b @ di @ m_gin.c
    inv = StateSpace(a_hat, -m_gin.b @ di, di @ m_gin.c, di)
    if inv.n and np.min(np.abs(np.linalg.eigvals(a_hat))) <= 1.0:
        raise FactorizationError("inverse of the inner factor is not anti-stable")
    return inv


def antistable_gramian(m_gin_inv: StateSpace, tol: Tolerances = DEFAULT) -> np.ndarray:
    """``X = sum_{k>=1} Â^{-*k} Ĉ*Ĉ Â^{-k}``."""
    if m_gin_inv.n == 0:
        return np.zeros((0, 0))
    ai = np.linalg.inv(m_gin_inv.a)
    cc = m_gin_inv.c.T @ m_gin_inv.c
    return numkit.solve_discrete_lyapunov(ai, ai.T @ cc @ ai, form="adjoint", tol=tol)


def scalar_tf_coeffs(g) -> tuple:
    """``(num, den)`` coefficient arrays in powers of z^{-1} for a scalar system."""
    if isinstance(g, TransferMatrix):
        num, den = g.entries[0][0]
        return num.zinv_coeffs(), den.zinv_coeffs()
    if isinstance(g, tuple):
        return np.atleast_1d(g[0]), np.atleast_1d(g[1])
    g = as_ss(g)
    if g.shape != (1, 1):
        raise DimensionError("expected a scalar system")
    if g.n == 0:
        return np.array([g.d[0, 0]]), np.array([1.0])
    num, den = _ss2tf(g)
    return num[0], den


def _ss2tf(g: StateSpace) -> tuple:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.signal.BadCoefficients)
        return scipy.signal.ss2tf(g.a, g.b, g.c, g.d)


def projection_norm_sq(m_gin_inv: StateSpace, column: int, tau: int, g_hat,
                       x: np.ndarray | None = None, tol: Tolerances = DEFAULT) -> float:
    """Squared H2 norm of the anti-causal part of ``(f_τ,i - M_Γin^{-1} e_i) z^τ Ĝ``.

    Closed form ``e_i* B̂* Ĝ(Â)* Â*^{τ-1} X Â^{τ-1} Ĝ(Â) B̂ e_i``.  ``x``
    defaults to the anti-stable gramian of ``m_gin_inv``, which equals the
    DARE solution used to build the inner factor.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if m_gin_inv.n == 0:
        return 0.0
    num, den = scalar_tf_coeffs(g_hat)
    if not np.any(num):
        return 0.0
    if x is None:
        x = antistable_gramian(m_gin_inv, tol)
    a_hat = m_gin_inv.a
    v = np.linalg.matrix_power(a_hat, tau - 1) @ numkit.eval_rational_at_matrix(num, den, a_hat) \
        @ m_gin_inv.b[:, column]
    return float(np.real(v.conj() @ x @ v))
