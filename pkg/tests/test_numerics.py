import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrdlab.errors import InvalidArgumentError, NumericalError
from lrdlab.numerics import (
    GENERATOR_NAME,
    NORMAL_TRANSFORM_NAME,
    RandomStream,
    gauss_hermite_expectation,
    gauss_hermite_rule,
    largest_eigenvalue_real,
    matrix_exp,
    random_orthogonal,
    random_stable_matrix,
    sample_standard_normal,
)


def taylor_exp(m, terms=60):
    out = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for n in range(1, terms):
        term = term @ m / n
        out = out + term
    return out


def power_iteration_max(m, iters=20000):
    """Largest eigenvalue of a symmetric matrix via power iteration on m + shift I."""
    shift = np.abs(m).sum(axis=1).max()  # Gershgorin: m + shift I is PSD
    shifted = m + shift * np.eye(m.shape[0])
    v = np.ones(m.shape[0]) / math.sqrt(m.shape[0])
    for _ in range(iters):
        v = shifted @ v
        v /= np.linalg.norm(v)
    return float(v @ m @ v)


class TestMatrixExp:
    def test_zero_is_identity(self):
        assert np.array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        out = matrix_exp(np.diag([-1.0, math.log(0.5)]))
        np.testing.assert_allclose(out, np.diag([math.exp(-1), 0.5]), rtol=1e-14, atol=1e-15)

    def test_matches_taylor_series(self, rng):
        for _ in range(20):
            m = rng.standard_normal((3, 3))
            m /= np.linalg.norm(m, 2)
            ref = taylor_exp(m)
            assert np.linalg.norm(matrix_exp(m) - ref) / np.linalg.norm(ref) < 1e-10

    @pytest.mark.parametrize("bad", [np.zeros((2, 3)), np.array([[np.nan]]), np.zeros((0, 0))])
    def test_rejects_bad_input(self, bad):
        with pytest.raises(InvalidArgumentError):
            matrix_exp(bad)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.floats(0.01, 10.0), st.integers(0, 2**32))
    def test_inverse(self, n, norm, seed):
        m = np.random.default_rng(seed).standard_normal((n, n))
        m *= norm / np.linalg.norm(m, 2)
        np.testing.assert_allclose(matrix_exp(m) @ matrix_exp(-m), np.eye(n), atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**32))
    def test_semigroup(self, n, s, t, seed):
        m = np.random.default_rng(seed).standard_normal((n, n))
        m /= max(1.0, np.linalg.norm(m, 2))
        lhs = matrix_exp((s + t) * m)
        np.testing.assert_allclose(lhs, matrix_exp(s * m) @ matrix_exp(t * m), atol=1e-9 * max(1, np.abs(lhs).max()))


class TestLargestEigenvalue:
    def test_diagonal(self):
        assert largest_eigenvalue_real(np.diag([-1.0, -2.0])) == -1.0

    def test_similarity_invariance(self, stream):
        p = random_orthogonal(2, stream)
        m = p @ np.diag([-0.3, -0.7]) @ p.T
        assert abs(largest_eigenvalue_real(m) + 0.3) < 1e-10

    def test_power_iteration_oracle(self, rng):
        for _ in range(5):
            a = rng.standard_normal((5, 5))
            m = (a + a.T) / 2
            assert abs(largest_eigenvalue_real(m) - power_iteration_max(m)) < 1e-8


class TestRandomStableMatrix:
    def test_degenerate_interval(self, stream):
        out = random_stable_matrix(1, (-1.0, -1.0), stream)
        np.testing.assert_allclose(out.matrix, [[-1.0]], atol=1e-15)

    def test_determinism(self):
        a = random_stable_matrix(4, (-1.0, -0.05), RandomStream(7)).matrix
        b = random_stable_matrix(4, (-1.0, -0.05), RandomStream(7)).matrix
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("rng_", [(-1.0, 0.5), (0.0, -1.0)])
    def test_rejects_bad_interval(self, rng_, stream):
        with pytest.raises(InvalidArgumentError):
            random_stable_matrix(3, rng_, stream)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.floats(-5, 0), st.floats(0, 5), st.integers(0, 2**63))
    def test_spectrum_in_range(self, dim, hi, width, seed):
        lo = hi - width
        out = random_stable_matrix(dim, (lo, hi), RandomStream(seed))
        eig = np.linalg.eigvalsh((out.matrix + out.matrix.T) / 2)
        assert eig.min() >= lo - 1e-10 and eig.max() <= hi + 1e-10
        assert largest_eigenvalue_real(out.matrix) <= 1e-10
        np.testing.assert_allclose(out.basis.T @ out.basis, np.eye(dim), atol=1e-12)
        np.testing.assert_allclose(np.sort(eig), np.sort(out.eigenvalues), atol=1e-10)


class TestSampling:
    def test_empty(self, stream):
        assert len(sample_standard_normal(stream, 0)) == 0

    def test_odd_length(self, stream):
        assert sample_standard_normal(stream, 7).shape == (7,)

    def test_moments(self):
        x = sample_standard_normal(RandomStream(1), 10**6)
        assert abs(x.mean()) < 4 / math.sqrt(10**6)
        assert abs(x.var() - 1) < 0.01

    def test_deterministic(self):
        a = sample_standard_normal(RandomStream(5, 3), 1001)
        b = sample_standard_normal(RandomStream(5, 3), 1001)
        assert a.tobytes() == b.tobytes()

    def test_streams_differ(self):
        base = RandomStream(5)
        a = sample_standard_normal(base.child(0), 100)
        b = sample_standard_normal(base.child(1), 100)
        c = sample_standard_normal(RandomStream(5, 1), 100)
        assert not np.array_equal(a, b)
        assert not np.array_equal(b, c)  # child(1) lives under path (0,), RandomStream(5, 1) does not

    def test_thread_independent(self):
        expected = sample_standard_normal(RandomStream(9, 2), 5000)
        results = []
        threads = [threading.Thread(target=lambda: results.append(sample_standard_normal(RandomStream(9, 2), 5000)))
                   for _ in range(4)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert all(r.tobytes() == expected.tobytes() for r in results)

    def test_metadata_names(self):
        assert "Philox" in GENERATOR_NAME and NORMAL_TRANSFORM_NAME == "Box-Muller"

    def test_rejects_bad_seed(self):
        with pytest.raises(InvalidArgumentError):
            RandomStream(-1)
        with pytest.raises(InvalidArgumentError):
            RandomStream(2**64)


class TestQuadrature:
    def test_rule_invariants(self):
        rule = gauss_hermite_rule(96)
        assert abs(rule.weights.sum() - math.sqrt(math.pi)) / math.sqrt(math.pi) < 1e-12
        np.testing.assert_allclose(np.sort(rule.nodes), np.sort(-rule.nodes), atol=1e-12)
        assert np.all(rule.weights > 0)

    def test_constant_and_variance(self):
        assert abs(gauss_hermite_expectation(lambda x: np.ones_like(x)) - 1) < 1e-12
        assert abs(gauss_hermite_expectation(lambda x: x**2) - 1) < 1e-10

    def test_scalar_callable(self):
        assert abs(gauss_hermite_expectation(lambda x: math.cos(x)) - math.exp(-0.5)) < 1e-12

    def test_log_against_monte_carlo(self):
        # 1e7-sample Monte Carlo mean and standard error (numpy default_rng seed 20261015)
        mc_mean, mc_se = -0.00915380549530986, 3.850344355720176e-05
        quad = gauss_hermite_expectation(lambda x: np.log(0.9 + 0.099 * x * x))
        assert abs(quad - mc_mean) < 3 * mc_se

    @pytest.mark.parametrize("order", [4, 10, 20])
    def test_polynomial_exactness(self, order):
        rule = gauss_hermite_rule(order)
        for deg in range(0, 2 * order):
            exact = 0.0 if deg % 2 else float(math.prod(range(deg - 1, 0, -2)))  # (deg-1)!!
            # odd moments cancel terms of the size of the next even moment
            scale = float(math.prod(range(deg + (deg % 2) - 1, 0, -2)))
            got = gauss_hermite_expectation(lambda x: x**deg, rule)
            assert abs(got - exact) <= 1e-10 * max(1.0, scale)

    def test_non_finite_names_node(self):
        with pytest.raises(NumericalError, match="node"):
            gauss_hermite_expectation(lambda x: np.where(x > 5, np.inf, 0.0))
