import numpy as np
import pytest

from ncstab import numkit
from ncstab.channel import DelayChannelSpec, statistics_from_spec
from ncstab.errors import ConvergenceError, DimensionError, DomainError, SingularityError
from ncstab.synthesis import blaschke_inner_balanced
from ncstab.sysrep import blockdiag

from oracles import kron_lyapunov


def sorted_eigs(m):
    return np.sort_complex(numkit.eigenvalues(m))


def test_eigenvalues_small_cases():
    assert np.allclose(sorted_eigs([[0.5]]), [0.5])
    assert np.allclose(sorted_eigs([[0.2, 0.3], [0.1, 0.4]]), [0.1, 0.5])
    companion = np.array([[3.0, -2.0], [1.0, 0.0]])
    assert np.allclose(sorted_eigs(companion), [1.0, 2.0])


def test_eigenvalues_trace_det_and_similarity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 9))
        m = rng.normal(size=(n, n))
        e = numkit.eigenvalues(m)
        assert abs(np.sum(e) - np.trace(m)) <= 1e-8 * (1 + abs(np.trace(m)))
        assert abs(np.prod(e) - np.linalg.det(m)) <= 1e-8 * (1 + abs(np.linalg.det(m)))
        t = rng.normal(size=(n, n)) + 3 * np.eye(n)
        e2 = numkit.eigenvalues(np.linalg.solve(t, m @ t))
        assert np.allclose(np.sort_complex(e), np.sort_complex(e2), atol=1e-8)


def test_eigenvalues_errors():
    with pytest.raises(DimensionError):
        numkit.eigenvalues(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        numkit.eigenvalues(np.eye(65))
    assert issubclass(ConvergenceError, Exception)


def test_lyapunov_examples():
    assert np.allclose(numkit.solve_discrete_lyapunov([[0.5]], [[1.0]]), [[4 / 3]])
    q = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(numkit.solve_discrete_lyapunov(np.zeros((2, 2)), q), q)
    b = 0.7
    x = numkit.solve_discrete_lyapunov([[2.0]], [[-b * b]])
    assert np.isclose(x[0, 0], b * b / 3)
    # same value from the convergent series in 1/2
    series = sum(2.0 ** (-2 * k) * b * b / 4 for k in range(200))
    assert np.isclose(x[0, 0], series)


def test_lyapunov_random_residual_and_kron_oracle():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        a = rng.normal(size=(n, n))
        a *= rng.uniform(0.1, 0.95) / max(numkit.spectral_radius(a), 1e-12)
        g = rng.normal(size=(n, n))
        q = g @ g.T
        x = numkit.solve_discrete_lyapunov(a, q)
        assert numkit.lyapunov_residual(a, q, x) <= 1e-10
        assert numkit.is_symmetric(x)
    assert np.allclose(x, kron_lyapunov(a, q))


def test_lyapunov_adjoint_and_large_paths():
    rng = np.random.default_rng(2)
    for n in (3, 20):
        a = rng.normal(size=(n, n))
        a *= 0.8 / numkit.spectral_radius(a)
        q = np.eye(n)
        xf = numkit.solve_discrete_lyapunov(a, q)
        xa = numkit.solve_discrete_lyapunov(a, q, form="adjoint")
        assert numkit.lyapunov_residual(a, q, xf) <= 1e-10
        assert numkit.lyapunov_residual(a, q, xa, form="adjoint") <= 1e-10
        # anti-stable: series in the inverse
        au = np.linalg.inv(a)
        xu = numkit.solve_discrete_lyapunov(au, -q)
        assert numkit.lyapunov_residual(au, -q, xu) <= 1e-10


def test_lyapunov_singular_and_shape_errors():
    with pytest.raises(SingularityError):
        numkit.solve_discrete_lyapunov([[1.0]], [[1.0]])
    with pytest.raises(SingularityError):
        numkit.solve_discrete_lyapunov([[2.0, 0], [0, 0.5]], np.eye(2))
    with pytest.raises(DimensionError):
        numkit.solve_discrete_lyapunov(np.eye(2), np.eye(3))


def scalar_inner(lam):
    return blaschke_inner_balanced([lam])


def test_dare_siso_reduction():
    lam = 1.5
    g = scalar_inner(lam)
    x = numkit.solve_dare(g.a, g.b, g.c, g.d, [[1.0]])
    assert numkit.dare_residual(g.a, g.b, g.c, g.d, [[1.0]], x) <= 1e-10
    a_hat = g.a - g.b @ np.linalg.inv(g.d) @ g.c
    b_hat = g.b @ np.linalg.inv(g.d)
    assert np.isclose(a_hat[0, 0], lam)
    # |b|^2 x reproduces lambda^2 - 1, the classical unit-weight radius
    assert np.isclose((b_hat.T @ x @ b_hat)[0, 0], lam ** 2 - 1)


def test_dare_homogeneous_and_definite():
    rng = np.random.default_rng(3)
    for _ in range(20):
        poles = list(rng.choice([-1, 1], 2) * rng.uniform(1.1, 3.0, 2))
        g1, g2 = scalar_inner(poles[0]), scalar_inner(poles[1])
        g = blockdiag([g1, g2])
        gam = np.diag(rng.uniform(0.2, 5.0, 2))
        x = numkit.solve_dare(g.a, g.b, g.c, g.d, gam)
        x2 = numkit.solve_dare(g.a, g.b, g.c, g.d, 2 * gam)
        assert np.allclose(x2, 2 * x, rtol=1e-9)
        assert numkit.is_symmetric(x)
        assert np.min(np.linalg.eigvalsh(x)) > 0


def test_dare_rejects_bad_gamma():
    g = scalar_inner(2.0)
    with pytest.raises(DomainError):
        numkit.solve_dare(g.a, g.b, g.c, g.d, [[-1.0]])
    with pytest.raises(DimensionError):
        numkit.solve_dare(g.a, g.b, g.c, g.d, np.eye(2))


def test_spectral_radius_nonneg():
    assert np.isclose(numkit.spectral_radius_nonneg([[0.2, 0.3], [0.1, 0.4]]), 0.5)
    assert numkit.spectral_radius_nonneg(np.zeros((3, 3))) == 0.0
    assert np.isclose(numkit.spectral_radius_nonneg([[0.0, 1.0], [1.0, 0.0]]), 1.0)
    rng = np.random.default_rng(4)
    for _ in range(100):
        m = rng.uniform(0, 1, (4, 4)) * (rng.uniform(size=(4, 4)) > 0.3)
        ref = np.max(np.abs(numkit.eigenvalues(m)))
        assert abs(numkit.spectral_radius_nonneg(m) - ref) <= 1e-9
    with pytest.raises(DomainError):
        numkit.spectral_radius_nonneg([[0.1, -0.1], [0.0, 0.2]])


def test_eval_rational_examples():
    m = np.array([[2.0, 0.3], [0.0, 1.7]])
    assert np.allclose(numkit.eval_rational_at_matrix([0.8], [1.0], m), 0.8 * np.eye(2))
    assert np.allclose(numkit.eval_rational_at_matrix([1.0, -0.5], [1.0], [[2.0]]), [[0.75]])
    ch = statistics_from_spec(DelayChannelSpec.one_step_delay(0.4, 2 / 3))
    val = numkit.eval_rational_at_matrix(ch.w_num, ch.w_den, [[1.5]])
    assert np.isclose(val[0, 0], np.real(ch.w_at(1.5)))


def test_eval_rational_eigenbasis():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        ev = rng.choice([-1, 1], n) * rng.uniform(1.2, 3, n)
        t = rng.normal(size=(n, n)) + 2 * np.eye(n)
        m = t @ np.diag(ev) @ np.linalg.inv(t)
        num, den = rng.normal(size=3), np.array([1.0, rng.uniform(-0.5, 0.5)])
        got = numkit.eval_rational_at_matrix(num, den, m)
        f = np.polyval(num[::-1], 1 / ev) / np.polyval(den[::-1], 1 / ev)
        assert np.allclose(got, t @ np.diag(f) @ np.linalg.inv(t), atol=1e-8)
        assert np.allclose(got @ numkit.eval_poly_zinv(den, m), numkit.eval_poly_zinv(den, m) @ got)


def test_eval_rational_singular():
    with pytest.raises(SingularityError):
        numkit.eval_rational_at_matrix([1.0, 1.0], [1.0], [[0.0]])
    with pytest.raises(SingularityError):
        numkit.eval_rational_at_matrix([1.0], [1.0, -0.5], [[0.5]])
