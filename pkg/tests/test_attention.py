import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrdlab.attention import AttentionParams, Masking, attention_forward, attention_lrd
from lrdlab.errors import InvalidArgumentError, NumericalError
from lrdlab.lrd import AttentionModel, LrdQuery, lrd_finite_difference


def params(d, seed, beta=None):
    return AttentionParams.random(d, np.random.default_rng(seed), beta=beta)


class TestForward:
    def test_single_token(self):
        p = params(3, 0)
        x = np.array([[0.5, -1.0, 2.0]])
        state = attention_forward(x, p)
        np.testing.assert_array_equal(state.weights, [[1.0]])
        np.testing.assert_allclose(state.hidden[0], p.w_v @ x[0])

    def test_identical_inputs_uniform(self):
        p = params(2, 1)
        x = np.tile([0.3, -0.8], (5, 1))
        state = attention_forward(x, p)
        np.testing.assert_allclose(state.weights, np.full((5, 5), 0.2), atol=1e-15)
        np.testing.assert_allclose(state.hidden, np.tile(p.w_v @ x[0], (5, 1)), atol=1e-14)

    def test_zero_beta_uniform(self, rng):
        p = params(3, 2, beta=0.0)
        state = attention_forward(rng.standard_normal((6, 3)), p)
        np.testing.assert_allclose(state.weights, np.full((6, 6), 1 / 6), atol=1e-15)

    def test_default_beta(self):
        assert params(4, 0).beta == pytest.approx(0.5)

    @pytest.mark.parametrize("masking", list(Masking))
    def test_columns_stochastic(self, masking, rng):
        state = attention_forward(3 * rng.standard_normal((9, 4)), params(4, 3), masking)
        np.testing.assert_allclose(state.weights.sum(axis=0), 1.0, atol=1e-12)
        assert np.all(state.weights >= 0)
        if masking is Masking.CAUSAL:
            assert np.all(np.tril(state.weights, -1) == 0)
        else:
            assert np.all(state.weights > 0)

    def test_large_logits_stay_finite(self):
        p = AttentionParams(np.eye(2), np.eye(2), np.eye(2), beta=1.0)
        x = np.array([[30.0, 0.0], [0.0, 30.0], [30.0, 30.0]])
        state = attention_forward(x, p)
        assert np.all(np.isfinite(state.weights))

    def test_non_finite_logits(self):
        p = AttentionParams(np.eye(1), np.eye(1), np.eye(1), beta=1.0)
        with pytest.raises(NumericalError, match=r"\(i=1, t=1\)"):
            attention_forward(np.array([[1e200], [1.0]]), p)

    def test_permutation_equivariance(self, rng):
        p = params(3, 4)
        x = rng.standard_normal((7, 3))
        perm = rng.permutation(7)
        h = attention_forward(x, p).hidden
        np.testing.assert_allclose(attention_forward(x[perm], p).hidden, h[perm], atol=1e-13)


class TestJacobian:
    def test_single_token_is_value_matrix(self):
        p = params(3, 5)
        np.testing.assert_array_equal(attention_lrd(np.ones((1, 3)), p, Masking.FULL, 1, 0), p.w_v)

    def test_zero_beta(self, rng):
        p = params(3, 6, beta=0.0)
        x = rng.standard_normal((4, 3))
        for k in range(4):
            np.testing.assert_allclose(attention_lrd(x, p, Masking.FULL, 1, k), p.w_v / 4, atol=1e-16)

    def test_index_errors(self):
        x = np.ones((3, 2))
        for t, k in [(0, 0), (2, 2), (1, -1)]:
            with pytest.raises(InvalidArgumentError):
                attention_lrd(x, params(2, 0), Masking.FULL, t, k)

    @pytest.mark.parametrize("masking", list(Masking))
    def test_random_against_fd(self, masking, rng):
        x = rng.standard_normal((8, 4))
        p = params(4, 7)
        J = attention_lrd(x, p, masking, 3, 4)
        F = lrd_finite_difference(LrdQuery(AttentionModel(p, x, masking), 3, 4))
        assert np.linalg.norm(J - F) / np.linalg.norm(J) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 4), st.sampled_from(list(Masking)), st.integers(0, 2**32))
    def test_every_query_matches_fd(self, T, d, masking, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((T, d))
        p = AttentionParams.random(d, rng)
        for t in range(1, T + 1):
            for k in range(T - t + 1):
                J = attention_lrd(x, p, masking, t, k)
                F = lrd_finite_difference(LrdQuery(AttentionModel(p, x, masking), t, k), scale_step=False)
                assert np.abs(J - F).max() <= max(1e-6, 1e-4 * np.linalg.norm(J))

    def test_fd_converges_second_order(self, rng):
        x = rng.standard_normal((6, 3))
        p = params(3, 8, beta=1.0)
        J = attention_lrd(x, p, Masking.FULL, 2, 3)
        q = LrdQuery(AttentionModel(p, x), 2, 3)
        errs = [np.abs(lrd_finite_difference(q, h, scale_step=False) - J).max() for h in (1e-3, 5e-4, 2.5e-4)]
        for coarse, fine in zip(errs, errs[1:]):
            assert 3.0 < coarse / fine < 5.0


def test_lrd_can_grow_with_gap():
    """Seeded search for ||LRD(t+k+1, t)|| > ||LRD(t+k, t)||: no forced decay in k."""
    found = None
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((8, 3))
        p = AttentionParams.random(3, rng, beta=1.0)
        norms = [np.linalg.norm(attention_lrd(x, p, Masking.FULL, 1, k), 2) for k in range(8)]
        grows = [k for k in range(1, 7) if norms[k + 1] > norms[k]]
        if grows:
            found = (seed, grows[0])
            break
    assert found is not None
