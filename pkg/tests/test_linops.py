import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irpnm.linops import (ConvergenceWarning, DenseOperator, HaarBlurOperator,
                          IdentityOperator, PartialDCT, blur_matrix_1d, gaussian_kernel_1d,
                          haar2d_forward, haar2d_inverse, read_matrix, spectral_norm,
                          transpose, write_matrix)

from oracles import dct_matrix, jacobi_singular_values


def _ops(rng):
    return {
        "identity": IdentityOperator(6),
        "dense": DenseOperator(rng.standard_normal((7, 4))),
        "partial-dct": PartialDCT(32, rng.permutation(32)[:11]),
        "haar-composite": HaarBlurOperator(16, 2),
    }


class TestApply:
    def test_identity(self):
        np.testing.assert_array_equal(IdentityOperator(3).apply(np.array([1.0, 2, 3])), [1, 2, 3])
        np.testing.assert_array_equal(IdentityOperator(2).adjoint(np.array([4.0, 5])), [4, 5])

    def test_dense_hand_arithmetic(self):
        op = DenseOperator([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(op.apply(np.ones(2)), [3.0, 7.0])
        np.testing.assert_array_equal(op.adjoint(np.array([1.0, 0.0])), [1.0, 2.0])

    def test_dense_copies_its_input(self):
        M = np.eye(2)
        op = DenseOperator(M)
        M[0, 0] = 5.0
        np.testing.assert_array_equal(op.apply(np.ones(2)), [1.0, 1.0])

    @pytest.mark.parametrize("what", ["apply", "adjoint"])
    def test_dimension_mismatch(self, what):
        op = DenseOperator(np.ones((3, 2)))
        with pytest.raises(ValueError):
            getattr(op, what)(np.ones(5))

    @pytest.mark.parametrize("n", [1, 2, 7, 16, 33])
    def test_partial_dct_matches_cosine_sum(self, n, rng):
        J = np.sort(rng.permutation(n)[: max(1, n // 2)])
        op = PartialDCT(n, J)
        C = dct_matrix(n)[J]
        x = rng.standard_normal(n)
        y = rng.standard_normal(len(J))
        np.testing.assert_allclose(op.apply(x), C @ x, atol=1e-12)
        np.testing.assert_allclose(op.adjoint(y), C.T @ y, atol=1e-12)

    def test_partial_dct_sorts_index(self, rng):
        op = PartialDCT(8, [5, 1, 3])
        np.testing.assert_array_equal(op.index, [1, 3, 5])
        x = rng.standard_normal(8)
        np.testing.assert_allclose(op.apply(x), dct_matrix(8)[[1, 3, 5]] @ x, atol=1e-13)

    def test_full_dct_is_orthogonal(self, rng):
        op = PartialDCT(64, np.arange(64))
        x = rng.standard_normal(64)
        assert abs(np.linalg.norm(op.apply(x)) / np.linalg.norm(x) - 1) <= 1e-12


class TestAdjoint:
    @pytest.mark.parametrize("kind", ["identity", "dense", "partial-dct", "haar-composite"])
    def test_inner_product_identity(self, kind, rng):
        op = _ops(rng)[kind]
        for _ in range(100):
            x = rng.standard_normal(op.cols)
            y = rng.standard_normal(op.rows)
            lhs, rhs = op.apply(x) @ y, x @ op.adjoint(y)
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1e-300)

    def test_dense_5x3(self, rng):
        op = DenseOperator(rng.standard_normal((5, 3)))
        x, y = rng.standard_normal(3), rng.standard_normal(5)
        assert abs(op.apply(x) @ y - x @ op.adjoint(y)) <= 1e-12

    def test_transpose_view(self, rng):
        M = rng.standard_normal((4, 3))
        t = transpose(DenseOperator(M))
        np.testing.assert_allclose(t.to_dense(), M.T)
        assert t.shape == (3, 4)


class TestHaar:
    @pytest.mark.parametrize("level", [0, 1, 2, 3])
    def test_constant_image_energy_in_coarsest_block(self, level):
        side = 16
        coef = haar2d_forward(np.full(side * side, 2.5), level).reshape(side, side)
        h = side >> level
        detail = coef.copy()
        detail[:h, :h] = 0.0
        assert np.max(np.abs(detail)) <= 1e-13
        # orthonormal: each coarse coefficient carries 2^level times the value
        np.testing.assert_allclose(coef[:h, :h], 2.5 * 2 ** level, rtol=1e-14)

    def test_roundtrip(self, rng):
        x = rng.standard_normal(256)
        np.testing.assert_allclose(haar2d_inverse(haar2d_forward(x, 4), 4), x, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 3))
    def test_isometry(self, seed, level):
        x = np.random.default_rng(seed).standard_normal(64)
        ratio = np.linalg.norm(haar2d_forward(x, level)) / np.linalg.norm(x)
        assert abs(ratio - 1) <= 1e-12

    def test_inverse_is_adjoint(self, rng):
        x, y = rng.standard_normal(64), rng.standard_normal(64)
        assert abs(haar2d_forward(x, 2) @ y - x @ haar2d_inverse(y, 2)) <= 1e-12

    @pytest.mark.parametrize("n,level", [(15, 1), (36, 2), (64, 4)])
    def test_bad_dimensions(self, n, level):
        with pytest.raises(ValueError):
            haar2d_forward(np.zeros(n), level)

    def test_synthesis_times_analysis_is_identity(self, rng):
        n = 64
        B = np.column_stack([haar2d_forward(e, 2) for e in np.eye(n)])
        np.testing.assert_allclose(B @ B.T, np.eye(n), atol=1e-13)


class TestBlur:
    def test_kernel_normalized_and_symmetric(self):
        k = gaussian_kernel_1d(9, 4.0)
        assert k.size == 9 and abs(k.sum() - 1) < 1e-15
        np.testing.assert_allclose(k, k[::-1])

    def test_rows_sum_to_one(self):
        # symmetric extension keeps constants constant
        K = blur_matrix_1d(12, gaussian_kernel_1d())
        np.testing.assert_allclose(K.sum(axis=1), 1.0, rtol=1e-14)

    def test_reflection_at_left_edge(self):
        K = blur_matrix_1d(5, np.array([0.25, 0.5, 0.25]))
        # x[-1] reflects onto x[0]
        np.testing.assert_allclose(K[0], [0.75, 0.25, 0, 0, 0])
        np.testing.assert_allclose(K[-1], [0, 0, 0, 0.25, 0.75])

    def test_operator_is_blur_after_synthesis(self, rng):
        op = HaarBlurOperator(8, 1)
        y = rng.standard_normal(64)
        np.testing.assert_allclose(op.apply(y), op.blur(haar2d_inverse(y, 1)))


class TestSpectralNorm:
    def test_identity(self):
        assert abs(spectral_norm(IdentityOperator(9)) - 1.0) <= 1e-6

    def test_diagonal(self):
        assert abs(spectral_norm(DenseOperator(np.diag([1.0, 2.0, 5.0]))) - 5.0) <= 5e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_jacobi_svd(self, seed):
        M = np.random.default_rng(seed).standard_normal((10, 6))
        sigma = jacobi_singular_values(M)[0]
        assert abs(spectral_norm(DenseOperator(M), tol=1e-10, max_iter=5000) - sigma) <= 1e-6

    def test_jacobi_oracle_agrees_with_lapack(self, rng):
        M = rng.standard_normal((8, 5))
        np.testing.assert_allclose(jacobi_singular_values(M), np.linalg.svd(M, compute_uv=False),
                                   rtol=1e-12)

    def test_transpose_invariance(self, rng):
        op = DenseOperator(rng.standard_normal((9, 4)))
        a = spectral_norm(op, tol=1e-10, max_iter=5000)
        b = spectral_norm(transpose(op), tol=1e-10, max_iter=5000)
        assert abs(a - b) <= 1e-6 * a

    def test_deterministic(self, rng):
        op = DenseOperator(rng.standard_normal((6, 6)))
        assert spectral_norm(op, seed=3) == spectral_norm(op, seed=3)

    def test_warns_at_cap(self, rng):
        op = DenseOperator(np.diag([1.0, 0.999999, 0.5]))
        with pytest.warns(ConvergenceWarning):
            est = spectral_norm(op, tol=1e-14, max_iter=3)
        assert 0.5 < est <= 1.0 + 1e-12

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            spectral_norm(IdentityOperator(2), tol=0.0)

    def test_partial_dct_norm_is_one(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert abs(spectral_norm(PartialDCT(64, np.arange(0, 64, 3))) - 1.0) <= 1e-6


class TestBinaryFormat:
    def test_roundtrip(self, tmp_path, rng):
        M = rng.standard_normal((3, 5))
        write_matrix(tmp_path / "m.bin", M)
        np.testing.assert_array_equal(read_matrix(tmp_path / "m.bin"), M)

    def test_layout(self, tmp_path):
        write_matrix(tmp_path / "m.bin", np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
        raw = (tmp_path / "m.bin").read_bytes()
        assert raw[:16] == (3).to_bytes(8, "little") + (2).to_bytes(8, "little")
        np.testing.assert_array_equal(np.frombuffer(raw[16:], "<f8"), [1, 2, 3, 4, 5, 6])

    def test_vector_is_column(self, tmp_path):
        write_matrix(tmp_path / "v.bin", np.arange(4.0))
        assert read_matrix(tmp_path / "v.bin").shape == (4, 1)

    def test_truncated(self, tmp_path):
        (tmp_path / "bad.bin").write_bytes((2).to_bytes(8, "little") * 2 + b"\0" * 8)
        with pytest.raises(ValueError):
            read_matrix(tmp_path / "bad.bin")
