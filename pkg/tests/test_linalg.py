import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leakyuq.exceptions import FactorizationError, ValidationError
from leakyuq.linalg import cholesky, face_split, nearest_correlation, spectral_norm, sym_eig


def random_symmetric(rng, n):
    X = rng.standard_normal((n, n))
    return 0.5 * (X + X.T)


class TestFaceSplit:
    def test_matches_row_kronecker(self, rng):
        X = rng.standard_normal((4, 2))
        Y = rng.standard_normal((4, 3))
        out = face_split(X, Y)
        for i in range(4):
            np.testing.assert_array_equal(out[i], np.kron(X[i], Y[i]))

    def test_column_vector_is_diagonal_scaling(self, rng):
        d = rng.standard_normal((5, 1))
        W = rng.standard_normal((5, 7))
        np.testing.assert_allclose(face_split(d, W), d * W, rtol=0, atol=0)

    def test_row_mismatch(self):
        with pytest.raises(ValueError):
            face_split(np.ones((2, 1)), np.ones((3, 1)))


class TestSymEig:
    @pytest.mark.parametrize("n", [1, 2, 8, 31, 64])
    def test_reconstruction_and_orthonormality(self, rng, n):
        S = random_symmetric(rng, n)
        w, V = sym_eig(S)
        scale = np.linalg.norm(S)
        assert np.linalg.norm(V @ np.diag(w) @ V.T - S) / scale < 1e-10
        assert np.linalg.norm(V.T @ V - np.eye(n)) < 1e-10
        assert np.all(np.diff(w) >= 0)

    def test_diagonal_input(self):
        w, V = sym_eig(np.diag([3.0, -1.0, 2.0]))
        np.testing.assert_array_equal(w, [-1.0, 2.0, 3.0])

    def test_against_numpy(self, rng):
        S = random_symmetric(rng, 12)
        np.testing.assert_allclose(sym_eig(S)[0], np.linalg.eigvalsh(S), atol=1e-12)

    def test_ill_scaled_gram(self, rng):
        # Gram matrices with a large dominant eigenvalue once stalled the sweep test.
        W = rng.uniform(-1, 1, (32, 32)) * 3.0 + 5.0
        w, _ = sym_eig(W.T @ W)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(W.T @ W), rtol=1e-10, atol=1e-9)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValidationError):
            sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=1, max_value=10), st.integers(min_value=0, max_value=2**31))
    def test_trace_preserved(self, n, seed):
        S = random_symmetric(np.random.default_rng(seed), n)
        w, _ = sym_eig(S)
        assert abs(w.sum() - np.trace(S)) <= 1e-10 * max(1.0, np.abs(S).sum())


class TestCholesky:
    def test_reconstructs(self, rng):
        X = rng.standard_normal((6, 6))
        R = X @ X.T + 6 * np.eye(6)
        L = cholesky(R)
        np.testing.assert_allclose(L @ L.T, R, atol=1e-12)
        assert np.allclose(L, np.tril(L))

    def test_rejects_indefinite_with_index(self):
        R = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(FactorizationError) as info:
            cholesky(R)
        assert info.value.index == 1

    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))


class TestNearestCorrelation:
    def test_valid_input_unchanged(self):
        R = np.array([[1.0, 0.3], [0.3, 1.0]])
        np.testing.assert_array_equal(nearest_correlation(R), R)

    def test_repairs_indefinite(self):
        R = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
        out = nearest_correlation(R)
        np.testing.assert_allclose(np.diag(out), 1.0, atol=0)
        assert np.linalg.eigvalsh(out).min() >= -1e-12
        np.testing.assert_allclose(out, out.T, atol=0)

    def test_floor_makes_factorizable(self):
        R = np.array([[1.0, 1.0 + 1e-9], [1.0 + 1e-9, 1.0]])
        out = nearest_correlation(R, min_eigenvalue=1e-10)
        cholesky(out)

    def test_degenerate_row_pinned(self):
        out = nearest_correlation(np.array([[0.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_array_equal(out, np.eye(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=2**31))
    def test_output_is_correlation(self, n, seed):
        gen = np.random.default_rng(seed)
        R = gen.uniform(-1, 1, (n, n))
        R = 0.5 * (R + R.T)
        np.fill_diagonal(R, 1.0)
        out = nearest_correlation(R)
        assert np.all(np.diag(out) == 1.0)
        assert np.linalg.eigvalsh(out).min() >= -1e-12
        assert np.all(np.abs(out) <= 1.0 + 1e-12)


class TestSpectralNorm:
    @pytest.mark.parametrize("shape", [(3, 5), (32, 31), (80, 70)])
    def test_matches_svd(self, rng, shape):
        W = rng.standard_normal(shape)
        assert spectral_norm(W) == pytest.approx(np.linalg.norm(W, 2), rel=1e-10)

    def test_zero(self):
        assert spectral_norm(np.zeros((3, 3))) == 0.0
