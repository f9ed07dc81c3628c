"""Mean-square stabilizability: the stabilization radius and controller synthesis.

The radius is evaluated through the inner factor ``M_in`` of the coprime
denominator of ``P H``.  With ``Â = A_in - B_in D_in^{-1} C_in`` and
``b_i = B_in D_in^{-1} e_i`` every column contributes

    q_i(Γ) = c_i* X(Γ) c_i,     c_i = F_i(Â) W_i(Â) b_i,

where ``F_i(Â)`` is ``Â^{τ_i - 1}`` for an input delay ``τ_i`` or
``(I - s_i Â)(Â - s_i I)^{-1}`` for a decoupled zero ``s_i`` outside the
unit disk.  ``μ(Γ) = max_i q_i / Γ_ii`` and ``ρ_min = inf_Γ μ(Γ)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.optimize

from . import numkit
from .channel import ChannelStatistics
from .config import DEFAULT, Tolerances
from .errors import DomainError, FactorizationError, ScopeError, SingularityError
from .sysrep import (StateSpace, TransferMatrix, blockdiag, coprime_factorize,
                     gamma_inner, gamma_inner_inverse, inner_outer_factorize,
                     minreal, series)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Plant families


def _delay_block(delays: Sequence[int]) -> StateSpace:
    return blockdiag([StateSpace.delay(int(t)) for t in delays])


@dataclass(frozen=True)
class GeneralMP:
    """``P = base · diag(z^{-τ_i})`` with ``base`` biproper and minimum phase."""

    base: StateSpace
    delays: tuple

    def __post_init__(self):
        delays = tuple(int(t) for t in self.delays)
        if len(delays) != self.base.n_in or min(delays) < 1:
            raise DomainError("one delay >= 1 per plant input is required")
        object.__setattr__(self, "delays", delays)
        d = self.base.d
        if d.shape[0] != d.shape[1] or abs(np.linalg.det(d)) < 1e-12:
            raise DomainError("base of a delay family must be square and biproper")
        zeros = np.linalg.eigvals(self.base.a - self.base.b @ np.linalg.solve(d, self.base.c)) \
            if self.base.n else np.zeros(0)
        if np.any(np.abs(zeros) >= 1.0):
            raise ScopeError("base has zeros outside the open unit disk; not minimum phase")

    kind = "general-mp"

    def plant(self) -> StateSpace:
        return series(self.base, _delay_block(self.delays))

    def column_weights(self) -> list:
        return [("delay", t) for t in self.delays]


@dataclass(frozen=True)
class DecoupledNMP:
    """``P = P0 · diag((z - s_i)/z)`` with ``P0`` strictly proper and minimum phase."""

    base: StateSpace
    zeros: tuple

    def __post_init__(self):
        zeros = tuple(float(s) for s in self.zeros)
        if len(zeros) != self.base.n_in:
            raise DomainError("one zero per plant input is required")
        if any(abs(s) <= 1.0 for s in zeros):
            raise DomainError("decoupled zeros must lie outside the closed unit disk")
        if np.any(self.base.d != 0):
            raise DomainError("P0 must have relative degree one")
        object.__setattr__(self, "zeros", zeros)

    kind = "decoupled-nmp"

    def plant(self) -> StateSpace:
        return series(self.base, blockdiag([StateSpace.from_scalar_tf([1.0, -s], [1.0])
                                            for s in self.zeros]))

    def column_weights(self) -> list:
        return [("zero", s) for s in self.zeros]


@dataclass(frozen=True)
class ExampleFamily:
    """Two-input plant with one unstable pole ``λ`` and column zeros ``s_1, s_2``.

    ``P = [[(z-s1)/(z-λ), -(z-s2)/(z-λ)], [0, (z-s2)/z]] · diag(z^{-τ1}, z^{-τ2})``.
    Columns with ``|s_i| < 1`` are handled as input delays, columns with
    ``|s_i| > 1`` as decoupled zeros (which needs ``τ_i = 1``).
    """

    lam: float
    s1: float
    s2: float
    tau1: int = 1
    tau2: int = 1

    def __post_init__(self):
        if abs(self.lam) <= 1:
            raise DomainError("lambda must lie outside the unit disk")
        for s, t in ((self.s1, self.tau1), (self.s2, self.tau2)):
            if int(t) < 1:
                raise DomainError("delays must be >= 1")
            if abs(abs(s) - 1.0) < 1e-12:
                raise DomainError("zeros on the unit circle are not supported")
            if abs(s) > 1 and int(t) != 1:
                raise ScopeError("zeros outside the disk combined with delays > 1 "
                                 "(the multi-zero extension) are not implemented")

    kind = "example"

    @property
    def delays(self) -> tuple:
        return (int(self.tau1), int(self.tau2))

    def transfer_matrix(self) -> TransferMatrix:
        lam, s1, s2 = self.lam, self.s1, self.s2
        t1, t2 = int(self.tau1), int(self.tau2)
        return TransferMatrix.from_coeffs([
            [([0.0] * t1 + [1.0, -s1], [1.0, -lam]), ([0.0] * t2 + [-1.0, s2], [1.0, -lam])],
            [([0.0], [1.0]), ([0.0] * t2 + [1.0, -s2], [1.0])],
        ])

    def plant(self) -> StateSpace:
        return self.transfer_matrix().to_ss()

    def column_weights(self) -> list:
        out = []
        for s, t in ((self.s1, self.tau1), (self.s2, self.tau2)):
            out.append(("zero", float(s)) if abs(s) > 1 else ("delay", int(t)))
        return out

    def closed_form_inner(self) -> StateSpace:
        """Inner factor of the coprime denominator, written out for the single pole."""
        lam = self.lam
        eta = np.array([lam - self.s1, -(lam - self.s2)])
        eta = eta / np.linalg.norm(eta)
        g = np.sqrt(lam ** 2 - 1) / lam
        return StateSpace([[1 / lam]], g * eta[None, :], g * eta[:, None],
                          np.eye(2) - (1 + 1 / lam) * np.outer(eta, eta))


def family_kind(family) -> str:
    kinds = {w[0] for w in family.column_weights()}
    if kinds == {"delay"}:
        return "thm2"
    if kinds == {"zero"}:
        return "thm3"
    return "mixed"


# --------------------------------------------------------------------------
# Objective


@dataclass(frozen=True)
class Prepared:
    """Γ-independent part of the objective for one (family, channels) pair."""

    m_in: StateSpace
    a_hat: np.ndarray
    b_dir: np.ndarray
    c: np.ndarray
    m: int
    coincidence: str | None = None

    @property
    def trivial(self) -> bool:
        return self.m_in.n == 0


def _weight_matrix(kind, value, a_hat, tol: Tolerances):
    n = a_hat.shape[0]
    if kind == "delay":
        return np.linalg.matrix_power(a_hat, int(value) - 1)
    s = float(value)
    eig = np.linalg.eigvals(a_hat)
    if np.min(np.abs(eig - s)) < tol.pole_zero_coincidence:
        raise SingularityError(f"zero s={s:g} coincides with an unstable pole")
    return (np.eye(n) - s * a_hat) @ np.linalg.inv(a_hat - s * np.eye(n))


def prepare(family, channels: Sequence[ChannelStatistics], tol: Tolerances = DEFAULT,
            m_in: StateSpace | None = None) -> Prepared:
    plant = family.plant()
    m = plant.n_in
    if len(channels) != m:
        raise DomainError(f"{len(channels)} channels for {m} plant inputs")
    if m_in is None:
        h = blockdiag([StateSpace.from_scalar_tf(c.mu, [1.0]) for c in channels])
        ph = minreal(series(plant, h), tol)
        if ph.n == 0 or ph.is_stable():
            m_in = StateSpace.static(np.eye(m))
        else:
            m_in, _ = inner_outer_factorize(coprime_factorize(ph).m, tol)
    if m_in.n == 0:
        return Prepared(m_in, np.zeros((0, 0)), np.zeros((0, m)), np.zeros((0, m)), m)
    d_inv = np.linalg.inv(m_in.d)
    a_hat = m_in.a - m_in.b @ d_inv @ m_in.c
    b_dir = m_in.b @ d_inv
    cols = []
    coincidence = None
    for i, ((kind, value), ch) in enumerate(zip(family.column_weights(), channels)):
        try:
            f = _weight_matrix(kind, value, a_hat, tol)
        except SingularityError as exc:
            coincidence = str(exc)
            f = np.zeros_like(a_hat)
        w = numkit.eval_rational_at_matrix(ch.w_num, ch.w_den, a_hat)
        cols.append(f @ w @ b_dir[:, i])
    c = np.array(cols).T.reshape(a_hat.shape[0], m)
    return Prepared(m_in, a_hat, b_dir, c, m, coincidence)


def _as_gamma(gamma, m) -> np.ndarray:
    g = np.asarray(gamma, dtype=float)
    if g.ndim == 2:
        g = np.diag(g)
    g = np.broadcast_to(g, (m,)).astype(float)
    if np.any(g <= 0):
        raise DomainError("gamma entries must be positive")
    return g


def evaluate(prep: Prepared, gamma, tol: Tolerances = DEFAULT) -> tuple:
    """``(μ, q, X)`` at the diagonal scaling ``gamma`` (vector of Γ_ii)."""
    g = _as_gamma(gamma, prep.m)
    if prep.coincidence:
        return float("inf"), np.full(prep.m, np.inf), None
    if prep.trivial:
        return 0.0, np.zeros(prep.m), np.zeros((0, 0))
    mi = prep.m_in
    x = numkit.solve_dare(mi.a, mi.b, mi.c, mi.d, np.diag(g), tol)
    q = np.real(np.einsum("ki,kl,li->i", prep.c.conj(), x, prep.c))
    return float(np.max(q / g)), q, x


def evaluate_by_gramians(prep: Prepared, gamma, xs: list | None = None,
                         tol: Tolerances = DEFAULT) -> float:
    """``μ(Γ)`` from ``X(Γ)^{-1} = sum_k X_k / Γ_kk`` (no Riccati iteration).

    ``X_k`` are the direction gramians of :func:`direction_gramians`; the
    identity holds because both sides solve the same Stein equation in
    ``Â^{-1}`` for ``X^{-1}``.
    """
    g = _as_gamma(gamma, prep.m)
    if prep.coincidence:
        return float("inf")
    if prep.trivial:
        return 0.0
    xs = direction_gramians(prep, tol) if xs is None else xs
    y = sum(x / gk for x, gk in zip(xs, g))
    try:
        sol = np.linalg.solve(y, prep.c)
    except np.linalg.LinAlgError:
        return float("inf")
    q = np.real(np.einsum("ki,ki->i", prep.c.conj(), sol))
    return float(np.max(q / g))


def gamma_objective(family, channels, gamma, tol: Tolerances = DEFAULT) -> tuple:
    """``(μ, q)`` for the scaling ``gamma``."""
    mu, q, _ = evaluate(prepare(family, channels, tol), gamma, tol)
    return mu, q


# --------------------------------------------------------------------------
# Γ search


@dataclass(frozen=True)
class StabilizabilityReport:
    rho_min: float
    gamma_star: np.ndarray
    per_channel_q: np.ndarray
    method: str
    converged: bool = True
    diagnosis: str | None = None
    optimizer_trace: list = field(default_factory=list, repr=False)

    @property
    def stabilizable(self) -> bool:
        return bool(self.rho_min < 1.0)

    def to_dict(self) -> dict:
        return {"rho_min": self.rho_min, "stabilizable": self.stabilizable,
                "gamma_star": self.gamma_star.tolist(),
                "per_channel_q": self.per_channel_q.tolist(), "method": self.method,
                "converged": self.converged, "diagnosis": self.diagnosis,
                "optimizer_trace": self.optimizer_trace}


def _search(fun, dim: int, starts: int, seed: int, trace: list) -> tuple:
    """Golden-section coordinate sweeps from several starts, Nelder-Mead polish of the best."""
    rng = np.random.default_rng(seed)
    best_x, best_f = np.zeros(dim), fun(np.zeros(dim))
    for k in range(starts):
        x = np.zeros(dim) if k == 0 else rng.uniform(-3.0, 3.0, dim)
        fx = fun(x)
        for _sweep in range(1 if dim == 1 else 4):
            moved = 0.0
            for j in range(dim):
                def line(t, j=j, x=x):
                    y = x.copy()
                    y[j] = t
                    return fun(y)
                res = scipy.optimize.minimize_scalar(line, bounds=(x[j] - 8, x[j] + 8),
                                                     method="bounded", options={"xatol": 1e-9})
                if res.fun < fx:
                    moved = max(moved, abs(res.x - x[j]))
                    x[j], fx = res.x, float(res.fun)
            if moved < 1e-8:
                break
        trace.append({"start": k, "value": fx})
        if fx < best_f:
            best_x, best_f = x.copy(), fx
    simplex = np.vstack([best_x] + [best_x + 1e-3 * e for e in np.eye(dim)])
    res = scipy.optimize.minimize(fun, best_x, method="Nelder-Mead",
                                  options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000 * dim,
                                           "initial_simplex": simplex})
    trace.append({"start": "polish", "value": float(res.fun), "iterations": int(res.nit)})
    if res.fun <= best_f:
        best_x, best_f = res.x, float(res.fun)
    return best_x, best_f, bool(res.success)


def optimize_gamma(family, channels, tol: Tolerances = DEFAULT, starts: int = 8,
                   seed: int = 0, prep: Prepared | None = None) -> StabilizabilityReport:
    prep = prepare(family, channels, tol) if prep is None else prep
    method = family_kind(family)
    m = prep.m
    if prep.coincidence:
        return StabilizabilityReport(float("inf"), np.ones(m), np.full(m, np.inf), method,
                                     True, prep.coincidence)
    if m == 1 or prep.trivial:
        mu, q, _ = evaluate(prep, np.ones(m), tol)
        return StabilizabilityReport(mu, np.ones(m), q, method)
    def gam(theta):
        return np.exp(np.concatenate([[0.0], theta]))

    xs = direction_gramians(prep, tol)

    def fun(theta):
        if np.max(np.abs(theta)) > 60:
            return np.inf
        return evaluate_by_gramians(prep, gam(theta), xs, tol)

    trace: list = []
    best, _, ok = _search(fun, m - 1, starts, seed, trace)
    g = gam(best)
    g = g / g[0]
    mu, q, _ = evaluate(prep, g, tol)
    if not ok:
        log.warning("gamma search stopped at its iteration limit; rho_min is an upper bound")
    return StabilizabilityReport(mu, g, q, method, ok, None, trace)


def stabilizability(family, channels, method: str = "auto", tol: Tolerances = DEFAULT,
                    **kw) -> StabilizabilityReport:
    kind = family_kind(family)
    if method in ("thm2", "thm3") and method != kind:
        raise ScopeError(f"method {method} does not apply to a {kind} plant family")
    return optimize_gamma(family, channels, tol, **kw)


# --------------------------------------------------------------------------
# Lyapunov (dual) form


def direction_gramians(prep: Prepared, tol: Tolerances = DEFAULT) -> list:
    """``X_i`` with ``X_i = Â X_i Â* - b_i b_i*`` for each input direction."""
    out = []
    for i in range(prep.m):
        b = prep.b_dir[:, [i]]
        if not np.any(b):
            out.append(np.zeros_like(prep.a_hat))
            continue
        out.append(numkit.solve_discrete_lyapunov(prep.a_hat, -b @ b.T, tol=tol))
    return out


def rho_min_lyapunov_form(family, channels, gamma, mu: float, tol: Tolerances = DEFAULT,
                          prep: Prepared | None = None) -> bool:
    """Feasibility of ``sum_k γ_k X_k ≻ (γ_i/μ) c_i c_i*`` for all ``i``, ``γ_k = 1/Γ_kk``."""
    prep = prepare(family, channels, tol) if prep is None else prep
    if prep.coincidence:
        return False
    if prep.trivial:
        return True
    g = _as_gamma(gamma, prep.m)
    xs = direction_gramians(prep, tol)
    lhs = sum(x / gk for x, gk in zip(xs, g))
    for i in range(prep.m):
        c = prep.c[:, [i]]
        if not np.any(c):
            continue
        diff = lhs - (c @ c.conj().T) / (g[i] * mu)
        if np.min(np.linalg.eigvalsh(numkit.symmetrize(np.real(diff)))) <= 0:
            return False
    return True


# --------------------------------------------------------------------------
# Sufficient test with balanced diagonal inner factors


def blaschke_inner_balanced(poles: Sequence[float]) -> StateSpace:
    """Scalar inner with zeros at ``poles`` as a cascade of orthogonal sections."""
    g = StateSpace.static([[1.0]])
    for lam in poles:
        if abs(lam) <= 1:
            raise DomainError(f"|{lam}| <= 1: inner zeros must lie outside the unit disk")
        a = 1.0 / lam
        r = np.sqrt(1 - a * a)
        g = series(StateSpace([[a]], [[r]], [[r]], [[-a]]), g)
    return g


def compound_orthogonality_residual(g: StateSpace) -> float:
    blk = np.block([[g.a, g.b], [g.c, g.d]])
    return float(np.max(np.abs(blk.T @ blk - np.eye(blk.shape[0]))))


@dataclass(frozen=True)
class Cor2Result:
    flags: tuple
    margins: tuple

    @property
    def stabilizable(self) -> bool:
        return all(self.flags)


def sufficient_check_cor2(diag_inners: Sequence[StateSpace], zeros: Sequence, channels,
                          tol: Tolerances = DEFAULT) -> Cor2Result:
    """Per-channel test ``|| W_i(Â) N̄_i(Â) B D^{-1} ||^2 < 1`` with ``Â = A^{-*}``.

    ``zeros[i]`` is ``None`` for a column without a decoupled zero.
    """
    flags, margins = [], []
    for g, s, ch in zip(diag_inners, zeros, channels):
        if g.n == 0:
            flags.append(True)
            margins.append(1.0)
            continue
        if compound_orthogonality_residual(g) > tol.balanced_tol:
            raise DomainError("diagonal inner is not balanced (compound block not orthogonal); "
                              "rebalance, e.g. with blaschke_inner_balanced")
        a_hat = np.linalg.inv(g.a).T
        v = g.b @ np.linalg.inv(g.d)
        if s is not None:
            v = _weight_matrix("zero", s, a_hat, tol) @ v
        v = numkit.eval_rational_at_matrix(ch.w_num, ch.w_den, a_hat) @ v
        margin = 1.0 - float(np.max(np.linalg.eigvalsh(numkit.symmetrize(v @ v.T))))
        flags.append(margin > 0)
        margins.append(margin)
    return Cor2Result(tuple(flags), tuple(margins))


# --------------------------------------------------------------------------
# Closed forms for the two-channel example


def n_factor(lam: float, s: float) -> float:
    """``(λ - s)/(1 - s λ)``."""
    return (lam - s) / (1 - s * lam)


def single_pole_rho_min(lam: float, weights: Sequence[float]) -> float:
    """``(λ²-1) / sum_i 1/w_i²`` for a single real unstable pole."""
    inv = sum(np.inf if w == 0 else 1.0 / (w * w) for w in weights)
    return (lam * lam - 1) / inv


def example1_rho_closed(lam, s1, s2, p0, p1, alpha) -> float:
    """Single-pole closed form with the channel weights actually derived above.

    ``w_1 = W_1(λ)/n_{s1}`` (derived sign) and ``w_2 = W_2/n_{s2}``.
    """
    r0 = p0 / (1 - p0)
    w1 = np.sqrt(r0) * (1 - alpha / lam) / (1 + alpha * r0 / lam)
    w2 = np.sqrt(p1 / (1 - p1))
    return single_pole_rho_min(lam, [w1 / n_factor(lam, s1), w2 / n_factor(lam, s2)])


def example1_region(lam, s1, s2, p0, p1, alpha) -> bool:
    """Stabilizability verdict of the reference two-channel inequality, taken literally."""
    rp0 = (1 - p0) / p0
    rp1 = (1 - p1) / p1
    rhs = n_factor(lam, s1) * rp0 * ((lam - alpha / rp0) / (lam - alpha)) ** 2 \
        + n_factor(lam, s2) * rp1
    return bool(lam * lam - 1 < rhs)


def example1_region_margin(lam, s1, s2, p0, p1, alpha) -> float:
    rp0 = (1 - p0) / p0
    rp1 = (1 - p1) / p1
    return n_factor(lam, s1) * rp0 * ((lam - alpha / rp0) / (lam - alpha)) ** 2 \
        + n_factor(lam, s2) * rp1 - (lam * lam - 1)


def example1_intersection(lam, s1, s2) -> tuple:
    """α-independent point of the reference boundary: ``(1/2, n2/(λ²-1-n1+n2))``."""
    n1, n2 = n_factor(lam, s1), n_factor(lam, s2)
    return 0.5, n2 / (lam * lam - 1 - n1 + n2)


# --------------------------------------------------------------------------
# Controller synthesis for the delay family


@dataclass(frozen=True)
class SynthesisResult:
    controller: StateSpace
    q_taps: np.ndarray
    mu: float
    gamma: np.ndarray
    anticausal_residual: float

    def to_dict(self) -> dict:
        return {"controller": self.controller.to_dict(), "mu": self.mu,
                "gamma": self.gamma.tolist(), "q_taps": int(self.q_taps.shape[0]),
                "anticausal_residual": self.anticausal_residual}


def _fir_realization(taps: np.ndarray) -> StateSpace:
    """``sum_k taps[k] z^{-k}`` for matrix taps of shape (L, p, q)."""
    length, p, q = taps.shape
    if length == 1:
        return StateSpace.static(taps[0])
    n = (length - 1) * q
    a = np.zeros((n, n))
    if length > 2:
        a[q:, :-q] = np.eye(n - q)
    b = np.zeros((n, q))
    b[:q] = np.eye(q)
    c = np.hstack([taps[k] for k in range(1, length)])
    return StateSpace(a, b, c, taps[0])


def youla_controller(cq, q: StateSpace) -> StateSpace:
    """``K = (U + M Q)(V - N Q)^{-1}`` realized on the shared state ``[x, ξ, w]``."""
    af, b, l, f = cq.m.a, cq.m.b, cq.l, cq.f
    cf, d = cq.n.c, cq.n.d
    n, nq = af.shape[0], q.n
    q_in = cf.shape[0]
    a = np.block([
        [af, np.zeros((n, nq)), np.zeros((n, n))],
        [np.zeros((nq, n)), q.a, np.zeros((nq, n))],
        [np.zeros((n, n)), b @ q.c, af],
    ])
    bb = np.vstack([l, q.b, b @ q.d])
    c1 = np.hstack([f, q.c, f])
    d1 = q.d
    c2 = np.hstack([-cf, -d @ q.c, -cf])
    d2 = np.eye(q_in) - d @ q.d
    d2i = np.linalg.inv(d2)
    return StateSpace(a - bb @ d2i @ c2, bb @ d2i, c1 - d1 @ d2i @ c2, d1 @ d2i)


def synthesize_controller(family, channels: Sequence[ChannelStatistics], gamma=None,
                          tol: Tolerances = DEFAULT) -> SynthesisResult:
    """Controller attaining ``μ(Γ)`` (up to FIR truncation of the Youla parameter).

    The optimal ``Q_Γ`` is evaluated on an FFT grid of the unit circle,
    transformed to its impulse response, checked for causality and
    truncated once the taps fall below ``synthesis_tap_tol``.
    """
    if family_kind(family) != "thm2":
        raise ScopeError("controller synthesis is only available for the input-delay family")
    plant = family.plant()
    m = plant.n_in
    h = blockdiag([StateSpace.from_scalar_tf(c.mu, [1.0]) for c in channels])
    ph = minreal(series(plant, h), tol)
    cq = coprime_factorize(ph)
    if ph.is_stable():
        m_in = StateSpace.static(np.eye(m))
    else:
        m_in, _ = inner_outer_factorize(cq.m, tol)
    prep = prepare(family, channels, tol, m_in=m_in)
    if gamma is None:
        gamma = optimize_gamma(family, channels, tol, prep=prep).gamma_star
    g = _as_gamma(gamma, m)
    mu = evaluate(prep, g, tol)[0]
    g_half, g_mhalf = np.diag(np.sqrt(g)), np.diag(1 / np.sqrt(g))
    taus = np.asarray(family.delays)

    npts = tol.synthesis_fft_points
    z = np.exp(2j * np.pi * np.arange(npts) / npts)
    zc = z[:, None, None]
    eye = np.eye(m)
    if m_in.n:
        minv_ss = gamma_inner_inverse(gamma_inner(m_in, np.diag(g), tol))
        a_hat, b_hat, c_hat, d_hat = minv_ss.a, minv_ss.b, minv_ss.c, minv_ss.d
        minv = minv_ss.freqresp(z)
    else:
        a_hat = np.zeros((0, 0))
        b_hat, c_hat, d_hat = np.zeros((0, m)), np.zeros((m, 0)), eye
        minv = np.broadcast_to(eye, (npts, m, m)).astype(complex)
    m_out = minv @ (g_half @ cq.m.freqresp(z) @ g_mhalf)
    v_t = g_half @ cq.v_tilde.freqresp(z) @ g_mhalf
    lt = np.zeros((npts, m, m), dtype=complex)
    for i, t in enumerate(taus):
        lt[:, i, i] = z ** t
    n_out = (g_half @ cq.n_tilde.freqresp(z) @ g_mhalf) @ lt
    w = np.stack([np.real_if_close(ch.w_at(z)) for ch in channels], axis=1).astype(complex)

    lbar_w = np.zeros((npts, m, m), dtype=complex)
    for i, t in enumerate(taus):
        ch = channels[i]
        wi = w[:, i] if ch.w_num.any() else np.ones(npts, dtype=complex)
        num, den = (ch.w_num, ch.w_den) if ch.w_num.any() else (np.ones(1), np.ones(1))
        # f_{τ,i} = D̂e_i + sum_{j=1}^{τ-1} Ĉ Â^{j-1} B̂ e_i z^{-j}
        f_col = np.broadcast_to(d_hat[:, i], (npts, m)).astype(complex)
        v = b_hat[:, i]
        for j in range(1, t):
            f_col = f_col + (c_hat @ v)[None, :] * z[:, None] ** (-j)
            v = a_hat @ v
        if a_hat.size:
            vz = np.linalg.matrix_power(a_hat, t - 1) @ \
                numkit.eval_rational_at_matrix(num, den, a_hat) @ b_hat[:, i]
            res = np.linalg.solve(zc * np.eye(a_hat.shape[0]) - a_hat,
                                  np.broadcast_to(vz, (npts, vz.size))[..., None])[..., 0]
            # (M^{-1} - f) z^τ = Ĉ (zI - Â)^{-1} Â^{τ-1} B̂ z exactly, so the
            # anti-causal part carries a plus sign
            z1 = (res @ c_hat.T) * z[:, None]
        else:
            z1 = np.zeros((npts, m), dtype=complex)
        z2 = (minv[:, :, i] - f_col) * (z ** t * wi)[:, None] - z1
        lbar_w[:, :, i] = z2 / wi[:, None] + (f_col - (m_out @ v_t)[:, :, i]) * (z ** t)[:, None]
    q_gam = -np.linalg.solve(m_out, lbar_w) @ np.linalg.inv(n_out)
    q_vals = g_mhalf @ q_gam @ g_half
    taps = np.fft.ifft(q_vals, axis=0)
    scale = max(np.max(np.abs(taps)), 1e-300)
    imag = float(np.max(np.abs(taps.imag)) / scale)
    taps = taps.real
    half = npts // 2
    anticausal = float(max(np.max(np.abs(taps[half:])) / scale, imag))
    big = np.flatnonzero(np.max(np.abs(taps[:half]), axis=(1, 2)) > tol.synthesis_tap_tol * scale)
    if anticausal > 1e-8 or big.size == 0 or big[-1] >= half - 1:
        raise FactorizationError(f"optimal Youla parameter is not causal/decaying "
                                 f"(anti-causal residual {anticausal:.2e})")
    taps = taps[:big[-1] + 1]
    k = youla_controller(cq, _fir_realization(taps))
    return SynthesisResult(k, taps, mu, g, anticausal)
