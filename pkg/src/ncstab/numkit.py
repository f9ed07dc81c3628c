"""Dense small-matrix kernel.

Matrices are plain :class:`numpy.ndarray` objects.  Everything here is a pure
function of its arguments.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .config import DEFAULT, Tolerances
from .errors import ConvergenceError, DimensionError, DomainError, SingularityError

MAX_EIG_DIM = 64


def as_matrix(m, dtype=float) -> np.ndarray:
    a = np.asarray(m)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    if np.iscomplexobj(a) and dtype is float:
        return a.astype(complex)
    return a.astype(dtype)


def _square(m, name="matrix") -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got {a.shape}")
    return a


def is_symmetric(m, tol: float = DEFAULT.symmetry) -> bool:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        return False
    scale = 1.0 + (np.max(np.abs(a)) if a.size else 0.0)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol * scale)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def eigenvalues(m) -> np.ndarray:
    """All eigenvalues of a square matrix (LAPACK Hessenberg + shifted QR)."""
    a = _square(m)
    if a.shape[0] > MAX_EIG_DIM:
        raise DimensionError(f"eigenvalues: dimension {a.shape[0]} exceeds {MAX_EIG_DIM}")
    if a.size == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(a).astype(complex)
    except np.linalg.LinAlgError as exc:  # QR sweeps exhausted
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc


def spectral_radius(m) -> float:
    a = _square(m)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def spectral_radius_nonneg(m, tol: Tolerances = DEFAULT) -> float:
    """Perron root of a nonnegative matrix by power iteration.

    The iteration runs on ``m + I``, which has the same Perron vector and is
    aperiodic, so periodic matrices such as ``[[0, 1], [1, 0]]`` converge.
    When the iteration stalls (nearly-equal leading moduli) the result falls
    back to the eigenvalue solver.
    """
    a = _square(m)
    if np.iscomplexobj(a) or np.any(a < 0):
        raise DomainError("spectral_radius_nonneg requires a real nonnegative matrix")
    n = a.shape[0]
    if n == 0 or not np.any(a):
        return 0.0
    shifted = a + np.eye(n)
    v = np.full(n, 1.0 / n)
    est = 0.0
    for _ in range(tol.power_iter_max):
        w = shifted @ v
        new = float(np.sum(w))  # v has unit 1-norm and is positive
        w /= new
        if abs(new - est) <= tol.power_iter_tol * new and np.max(np.abs(w - v)) <= 1e-12:
            rho = new - 1.0
            # Rayleigh-type refinement guards against slow tail convergence
            ref = spectral_radius(a)
            return rho if abs(rho - ref) <= 1e-9 * max(1.0, ref) else ref
        v, est = w, new
    return spectral_radius(a)


# --------------------------------------------------------------------------
# Stein / discrete Lyapunov equations


def _check_lyap_singularity(eigs: np.ndarray, tol: float) -> None:
    if eigs.size == 0:
        return
    prod = np.outer(eigs, eigs.conj())
    gap = np.min(np.abs(1.0 - prod))
    if gap < tol:
        raise SingularityError(
            f"Lyapunov equation is singular: eigenvalue pair with λi·conj(λj) ≈ 1 (gap {gap:.2e})")


def _smith(a: np.ndarray, q: np.ndarray, tol: float, max_iter: int = 200) -> np.ndarray:
    """X = sum_k a^k q a*^k by squared Smith iteration (``a`` stable)."""
    x = q.copy()
    ak = a.copy()
    for _ in range(max_iter):
        step = ak @ x @ ak.conj().T
        x = x + step
        ak = ak @ ak
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(x))) * 1e-3:
            return x
    raise ConvergenceError("Smith iteration did not converge")


def solve_discrete_lyapunov(a, q, form: str = "forward", tol: Tolerances = DEFAULT) -> np.ndarray:
    """Solve ``X = A X A* + Q`` (forward) or ``X = A* X A + Q`` (adjoint).

    Works whenever no eigenvalue pair satisfies ``λi·conj(λj) = 1``.  For an
    anti-stable ``A`` the equation is rewritten in ``A^{-1}``, which is where
    the series solution converges.
    """
    a = _square(a, "a")
    q = _square(q, "q")
    if a.shape != q.shape:
        raise DimensionError(f"a {a.shape} and q {q.shape} must have equal shape")
    if form not in ("forward", "adjoint"):
        raise ValueError("form must be 'forward' or 'adjoint'")
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=np.result_type(a, q))
    if form == "adjoint":
        a = a.conj().T
    eigs = np.linalg.eigvals(a)
    _check_lyap_singularity(eigs, tol.unit_circle_margin)
    hermitian_q = is_symmetric(q)
    if n <= tol.lyap_kron_max_dim:
        # column-major vec: vec(A X A*) = (conj(A) ⊗ A) vec(X)
        lhs = np.eye(n * n) - np.kron(a.conj(), a)
        x = np.linalg.solve(lhs, q.reshape(-1, order="F")).reshape(n, n, order="F")
    elif np.all(np.abs(eigs) < 1.0):
        x = _smith(a, q, tol.lyap_residual)
    elif np.all(np.abs(eigs) > 1.0):
        ai = np.linalg.inv(a)
        x = _smith(ai, -ai @ q @ ai.conj().T, tol.lyap_residual)
    else:
        x = scipy.linalg.solve_discrete_lyapunov(a, q)
    if hermitian_q:
        x = symmetrize(x)
    if not (np.iscomplexobj(a) or np.iscomplexobj(q)):
        x = np.real(x)
    return x


def lyapunov_residual(a, q, x, form: str = "forward") -> float:
    a, q, x = as_matrix(a), as_matrix(q), as_matrix(x)
    if form == "adjoint":
        a = a.conj().T
    r = x - a @ x @ a.conj().T - q
    return float(np.linalg.norm(r, np.inf) / (1.0 + np.linalg.norm(x, np.inf)))


# --------------------------------------------------------------------------
# Riccati equation for the Γ-weighted inner factor


def _dare_terms(a, b, c, d, gamma, x):
    r = d.conj().T @ gamma @ d + b.conj().T @ x @ b
    s = a.conj().T @ x @ b + c.conj().T @ gamma @ d
    return r, s


def dare_map(a, b, c, d, gamma, x) -> np.ndarray:
    """Right-hand side of the Γ-weighted DARE evaluated at ``x``."""
    r, s = _dare_terms(a, b, c, d, gamma, x)
    return (a.conj().T @ x @ a + c.conj().T @ gamma @ c
            - s @ np.linalg.solve(r, s.conj().T))


def dare_residual(a_in, b_in, c_in, d_in, gamma, x) -> float:
    a, b, c, d, g, x = (as_matrix(v) for v in (a_in, b_in, c_in, d_in, gamma, x))
    res = x - dare_map(a, b, c, d, g, x)
    return float(np.linalg.norm(res, 2) / (1.0 + np.linalg.norm(x, 2)))


def dare_gain(a_in, b_in, c_in, d_in, gamma, x) -> np.ndarray:
    """Feedback gain ``F = -(D*ΓD + B*XB)^{-1}(B*XA + D*ΓC)``."""
    a, b, c, d, g, x = (as_matrix(v) for v in (a_in, b_in, c_in, d_in, gamma, x))
    r, s = _dare_terms(a, b, c, d, g, x)
    return -np.linalg.solve(r, s.conj().T)


def _check_gamma(gamma, m):
    g = as_matrix(gamma)
    if g.shape != (m, m):
        raise DimensionError(f"gamma must be {m}x{m}, got {g.shape}")
    if np.any(np.abs(g - np.diag(np.diag(g))) > 0) or np.any(np.diag(g) <= 0):
        raise DomainError("gamma must be diagonal positive definite")
    return g


def solve_dare(a_in, b_in, c_in, d_in, gamma, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Stabilizing solution of the DARE attached to an inner ``M_in`` and scaling Γ.

    ``X = A*XA + C*ΓC - (A*XB + C*ΓD)(D*ΓD + B*XB)^{-1}(B*XA + D*ΓC)``.

    Damped fixed-point iteration from ``X0 = C*ΓC``; when it stalls the
    equation is solved by a doubling (squared Smith) iteration on ``X^{-1}``,
    which for square invertible ``D`` satisfies a Stein equation in
    ``(A - B D^{-1} C)^{-1}``.
    """
    a, b, c, d = (as_matrix(v) for v in (a_in, b_in, c_in, d_in))
    n = a.shape[0]
    g = _check_gamma(gamma, d.shape[0])
    if n == 0:
        return np.zeros((0, 0))
    ah, bh = a.conj().T, b.conj().T
    cgc, dgd, cgd = c.conj().T @ g @ c, d.conj().T @ g @ d, c.conj().T @ g @ d
    x = symmetrize(cgc)
    if np.linalg.cond(dgd + bh @ x @ b) > 1e14:
        raise SingularityError("D*ΓD + B*XB is singular at the initial iterate")
    omega = tol.dare_relaxation
    converged = False
    for _ in range(tol.dare_max_iter):
        xb = x @ b
        s = ah @ xb + cgd
        try:
            new = ah @ x @ a + cgc - s @ np.linalg.solve(dgd + bh @ xb, s.conj().T)
        except np.linalg.LinAlgError as exc:
            raise SingularityError("D*ΓD + B*XB is singular during the DARE iteration") from exc
        new = 0.5 * (new + new.conj().T)
        if omega != 1.0:
            new = (1.0 - omega) * x + omega * new
        if not np.all(np.isfinite(new)):
            break
        step = np.max(np.abs(new - x))
        x = new
        if step <= tol.dare_step * (1.0 + np.max(np.abs(x))):
            converged = True
            break
    if not converged or dare_residual(a, b, c, d, g, x) > tol.dare_residual:
        x = _dare_doubling(a, b, c, d, g, tol)
    if dare_residual(a, b, c, d, g, x) > tol.dare_residual:
        raise ConvergenceError("DARE did not converge to the requested residual")
    if np.min(np.linalg.eigvalsh(x)) <= 0:
        raise ConvergenceError("DARE solution is not positive definite")
    return x


def _dare_doubling(a, b, c, d, g, tol):
    if d.shape[0] != d.shape[1] or abs(np.linalg.det(d)) < 1e-14:
        raise ConvergenceError("DARE fixed point stalled and D is not invertible")
    a_hat = a - b @ np.linalg.solve(d, c)
    r0 = d.conj().T @ g @ d
    ai = np.linalg.inv(a_hat)
    q = ai @ b @ np.linalg.solve(r0, b.conj().T) @ ai.conj().T
    y = _smith(ai, symmetrize(q), tol.lyap_residual * 1e-3, max_iter=400)
    return symmetrize(np.linalg.inv(y))


# --------------------------------------------------------------------------
# Rational functions evaluated at a matrix argument


def _poly_coeffs_zinv(p) -> tuple[np.ndarray, int]:
    """Coefficients of ``p`` in increasing powers of z^{-1} plus power offset.

    Accepts a LaurentPoly-like object (``lo``/``coeffs`` in powers of z) or
    a plain coefficient sequence in powers of z^{-1}.
    """
    if hasattr(p, "lo") and hasattr(p, "coeffs"):
        coeffs = np.asarray(p.coeffs, dtype=float)
        hi = p.lo + len(coeffs) - 1  # highest power of z
        # reverse so index k multiplies z^{hi-k} = (z^{-1})^{k-hi}
        return coeffs[::-1], -hi
    return np.atleast_1d(np.asarray(p, dtype=float)), 0


def eval_poly_zinv(p, m) -> np.ndarray:
    """Evaluate ``sum_j p_j m^{-j}`` (Horner in ``m^{-1}``)."""
    m = _square(m)
    n = m.shape[0]
    coeffs, offset = _poly_coeffs_zinv(p)
    eye = np.eye(n, dtype=m.dtype)
    if n == 0:
        return eye
    if coeffs.size == 0:
        return np.zeros_like(eye)
    needs_inverse = coeffs.size + offset - 1 > 0
    if needs_inverse:
        if np.linalg.cond(m) > 1e13:
            raise SingularityError("matrix argument is singular (pole-uncertainty collision)")
        minv = np.linalg.inv(m)
    acc = coeffs[-1] * eye
    for c in coeffs[-2::-1]:
        acc = acc @ minv + c * eye
    if offset > 0:
        acc = acc @ np.linalg.matrix_power(minv, offset)
    elif offset < 0:
        acc = acc @ np.linalg.matrix_power(m, -offset)
    return acc


def eval_rational_at_matrix(num, den, m) -> np.ndarray:
    """``num(m) den(m)^{-1}`` with polynomials in ``z^{-1}``."""
    nm = eval_poly_zinv(num, m)
    dm = eval_poly_zinv(den, m)
    if dm.size and np.linalg.cond(dm) > 1e13:
        raise SingularityError("den(m) is singular (pole-uncertainty collision)")
    if dm.size == 0:
        return dm
    return np.linalg.solve(dm.T, nm.T).T
