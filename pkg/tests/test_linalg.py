import numpy as np
import pytest
from scipy.linalg import expm as scipy_expm

from phasefit import linalg
from phasefit.exceptions import SingularMatrixError

from oracles import expm_eigen, van_loan_quad

T3 = np.array([[-1.0, 0.5, 0.0], [0.2, -2.0, 0.8], [1.0, 1.0, -5.0]])
T2 = np.array([[-1.0, 1.0], [0.0, -2.0]])


class TestExpm:
    @pytest.mark.parametrize("y", [0.0, 1e-8, 0.3, 1.0, 7.3, 40.0])
    def test_matches_eigendecomposition(self, y):
        assert np.abs(linalg.expm(T3, y) - expm_eigen(T3, y)).max() < 1e-10

    @pytest.mark.parametrize("y", [0.1, 1.0, 12.0])
    def test_matches_scipy(self, y):
        assert np.abs(linalg.expm(T3, y) - scipy_expm(T3 * y)).max() < 1e-11

    def test_zero_is_identity_exactly(self):
        assert np.array_equal(linalg.expm(T3, 0.0), np.eye(3))

    def test_semigroup(self):
        a, b = 0.7, 2.9
        lhs = linalg.expm(T3, a + b)
        rhs = linalg.expm(T3, a) @ linalg.expm(T3, b)
        assert np.abs(lhs - rhs).max() < 1e-9

    def test_batch_matches_scalar(self):
        ys = np.array([0.0, 0.2, 1.7, 9.4])
        batch = linalg.expm_batch(T3, ys)
        for i, y in enumerate(ys):
            # the shared series length differs between batch sizes, so the
            # truncation remainder (<= eps) is the only allowed discrepancy
            assert np.abs(batch[i] - linalg.expm(T3, y)).max() < 1e-12

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            linalg.expm(T3, -1.0)

    def test_substochastic_rows(self):
        # e^{Ty} rows must stay in [0, 1] and decay
        E = linalg.expm(T3, 2.0)
        assert np.all(E >= -1e-15)
        assert np.all(E.sum(axis=1) <= 1.0 + 1e-12)


class TestVanLoan:
    def test_against_quadrature(self):
        pi = np.array([0.6, 0.4, 0.0])
        t = linalg.exit_rates(T3)
        C = np.outer(t, pi)
        for y in (0.4, 1.3, 3.7):
            _, G = linalg.van_loan_batch(T3, C, [y])
            ref = van_loan_quad(T3, C, y)
            assert np.abs(G[0] - ref).max() < 1e-8

    def test_van_loan_G_helper(self):
        pi = np.array([1.0, 0.0, 0.0])
        G = linalg.van_loan_G(pi, T3, 1.1)
        t = linalg.exit_rates(T3)
        ref = van_loan_quad(T3, np.outer(t, pi), 1.1)
        assert np.abs(G - ref).max() < 1e-8

    def test_diagonal_block_is_expm(self):
        C = np.outer(linalg.exit_rates(T3), np.array([0.2, 0.3, 0.5]))
        E, _ = linalg.van_loan_batch(T3, C, [0.9])
        assert np.abs(E[0] - linalg.expm(T3, 0.9)).max() < 1e-12

    def test_per_item_against_quadrature(self):
        rng = np.random.default_rng(0)
        Cs = rng.uniform(size=(3, 2, 2)) * 5.0
        ys = np.array([0.3, 1.7, 4.0])
        E, G = linalg.van_loan_per_item(T2, Cs, ys)
        for i in range(3):
            assert np.abs(G[i] - van_loan_quad(T2, Cs[i], ys[i])).max() < 1e-8
            assert np.abs(E[i] - expm_eigen(T2, ys[i])).max() < 1e-10

    def test_per_item_empty_batch(self):
        E, G = linalg.van_loan_per_item(T2, np.zeros((0, 2, 2)), [])
        assert E.shape == (0, 2, 2) and G.shape == (0, 2, 2)


class TestMatrixPower:
    def test_base_one_is_identity(self):
        assert np.abs(linalg.matrix_power(T3, 1.0) - np.eye(3)).max() < 1e-14

    @pytest.mark.parametrize("base", [1.5, 4.0, 0.3])
    def test_matches_eigendecomposition(self, base):
        ref = expm_eigen(T3, np.log(base)) if base >= 1 else \
            np.linalg.inv(expm_eigen(T3, -np.log(base)))
        assert np.abs(linalg.matrix_power(T3, base) - ref).max() < 1e-10

    def test_rejects_nonpositive_base(self):
        with pytest.raises(ValueError):
            linalg.matrix_power(T3, 0.0)


class TestSolve:
    def test_matches_numpy(self):
        rng = np.random.default_rng(1)
        A = rng.normal(size=(5, 5)) + 5 * np.eye(5)
        B = rng.normal(size=(5, 3))
        assert np.abs(linalg.solve(A, B) - np.linalg.solve(A, B)).max() < 1e-10

    def test_vector_rhs(self):
        x = linalg.solve(-T3, np.ones(3))
        assert np.abs(-T3 @ x - np.ones(3)).max() < 1e-12

    def test_singular_raises(self):
        with pytest.raises(SingularMatrixError):
            linalg.solve(np.ones((3, 3)), np.eye(3))

    def test_green_matrix(self):
        U = linalg.green_matrix(T3)
        assert np.abs(U @ (-T3) - np.eye(3)).max() < 1e-12


class TestValidation:
    def test_clamps_tiny_negative_offdiagonal(self):
        T = T2.copy()
        T[0, 1] = -1e-13
        out = linalg.validate_sub_intensity(T)
        assert out[0, 1] == 0.0

    def test_rejects_negative_offdiagonal(self):
        T = T2.copy()
        T[0, 1] = -0.5
        with pytest.raises(ValueError):
            linalg.validate_sub_intensity(T)

    def test_rejects_positive_row_sum(self):
        T = np.array([[-1.0, 2.0], [0.0, -1.0]])
        with pytest.raises(ValueError):
            linalg.validate_sub_intensity(T)

    def test_rejects_nonnegative_diagonal(self):
        T = np.array([[0.0, 0.0], [0.0, -1.0]])
        with pytest.raises(ValueError):
            linalg.validate_sub_intensity(T)

    def test_exit_rates(self):
        t = linalg.exit_rates(T3)
        assert np.abs(t - np.array([0.5, 1.0, 3.0])).max() < 1e-15
