"""Brute-force reference computations, independent of the library code paths."""
import numpy as np
import scipy.signal


def kron_lyapunov(a, q):
    """``X = A X A* + Q`` by a dense Kronecker solve."""
    a = np.atleast_2d(a)
    n = a.shape[0]
    vec = np.linalg.solve(np.eye(n * n) - np.kron(a, a), np.asarray(q).reshape(-1))
    return vec.reshape(n, n)


def bauer_factor(lags, size=600):
    """Minimum-phase MA coefficients from ``r(0..n)`` via Cholesky of a long Toeplitz matrix."""
    lags = np.asarray(lags, dtype=float)
    col = np.zeros(size)
    col[:lags.size] = lags
    t = col[np.abs(np.subtract.outer(np.arange(size), np.arange(size)))]
    low = np.linalg.cholesky(t)
    row = low[-1]
    return row[::-1][:lags.size]


def impulse(num, den, length):
    """Impulse response of ``num(z^-1)/den(z^-1)``."""
    x = np.zeros(length)
    x[0] = 1.0
    return scipy.signal.lfilter(num, den, x)


def laurent_projection_norm_sq(m_gin_inv, column, tau, g_num, g_den, terms=2000):
    """``||Pi_1{(f_tau - M^-1 e_i) z^tau G}||^2`` from truncated Laurent series.

    ``M^-1 = D + C (zI - A)^-1 B`` with ``A`` anti-stable expands on the
    circle as ``D - sum_{k>=0} C A^{-(k+1)} B z^k``; ``f_tau`` keeps the
    constant term and the first ``tau - 1`` Markov parameters in ``z^-1``.
    ``Pi_1`` keeps strictly positive powers of ``z``.
    """
    # the feedthrough cancels against the constant term of f_tau
    a, b, c = m_gin_inv.a, m_gin_inv.b[:, column], m_gin_inv.c
    p = c.shape[0]
    ai = np.linalg.inv(a)
    # coefficient arrays indexed by power of z, offset so index 0 is z^{-terms}
    off = terms
    size = 2 * terms + tau + 2
    h = np.zeros((size, p))
    # (f_tau - M^-1) z^tau
    v = b.copy()
    for j in range(1, tau):
        h[off + tau - j] += c @ v
        v = a @ v
    v = ai @ b
    for k in range(terms):
        h[off + tau + k] += c @ v
        v = ai @ v
    g = impulse(g_num, g_den, terms)
    # G(z) = sum_k g_k z^-k, so coefficient n of the product is sum_k g_k h[n + k]
    prod = np.zeros_like(h)
    for k in range(terms):
        prod[:size - k] += g[k] * h[k:]
    powers = np.arange(size) - off
    return float(np.sum(prod[powers >= 1] ** 2))
