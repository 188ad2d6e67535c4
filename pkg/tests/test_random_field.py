import numpy as np
import pytest

from sparse_pce.random_field import (branch_residual, eval_field, exponential_kl, exponential_lambda,
                                     gauss_legendre_01, gaussian_kl, gram_matrix, nu_coefficients)


@pytest.fixture(scope="module")
def exp_kl():
    return exponential_kl(1.0 / 21.0, 20)


@pytest.fixture(scope="module")
def gauss_kl():
    return gaussian_kl(1.0 / 16.0, 40)


class TestExponential:
    def test_roots_solve_branch_equations(self, exp_kl):
        for i, w in enumerate(exp_kl.omegas, start=1):
            assert abs(branch_residual(w, i, exp_kl.l_c)) < 1e-10
            assert (i - 1) * np.pi < w < i * np.pi

    def test_sine_roots_solve_printed_equation(self, exp_kl):
        c = 1.0 / exp_kl.l_c
        for w in exp_kl.omegas[1::2]:
            assert abs(w + c * np.tan(0.5 * w)) < 1e-10

    def test_frozen_roots(self, exp_kl):
        # first four frequencies for l_c = 1/21 from an independent 50-digit bisection
        assert np.allclose(exp_kl.omegas[:4], [2.86994719042194, 5.7487755901842, 8.64382705503028, 11.5599563363277], atol=1e-11)

    def test_lambdas(self, exp_kl):
        assert np.array_equal(exp_kl.lambdas, exponential_lambda(exp_kl.omegas, exp_kl.l_c))
        assert np.all(np.diff(exp_kl.lambdas) < 0) and np.all(exp_kl.lambdas > 0)

    def test_orthonormal(self, exp_kl):
        assert np.abs(gram_matrix(exp_kl) - np.eye(20)).max() < 1e-8

    def test_eigen_equation(self, exp_kl):
        x, w = gauss_legendre_01(2000)
        phi = exp_kl.eigfuncs(x)
        K = exp_kl.kernel_fn(x[::97], x)
        lhs = (K * w) @ phi
        assert np.abs(lhs - exp_kl.lambdas * phi[::97]).max() < 1e-4

    @pytest.mark.parametrize("l_c", [0.05, 0.3, 2.0])
    def test_other_lengths(self, l_c):
        kl = exponential_kl(l_c, 6)
        assert np.abs(gram_matrix(kl) - np.eye(6)).max() < 1e-8

    def test_invalid(self):
        with pytest.raises(ValueError):
            exponential_kl(0.0, 3)


class TestGaussian:
    def test_default_config(self, gauss_kl):
        lam = gauss_kl.lambdas
        assert lam.size == 40 and np.all(lam > 0) and np.all(np.diff(lam) <= 0)

    def test_trace(self, gauss_kl):
        full = gaussian_kl(1.0 / 16.0, 60, 800)
        assert full.lambdas.sum() == pytest.approx(1.0, abs=1e-8)
        partial = np.cumsum(gauss_kl.lambdas)
        assert partial[-1] < 1.0 and np.all(np.diff(partial) > 0)

    def test_refinement(self, gauss_kl):
        fine = gaussian_kl(1.0 / 16.0, 40, 640)
        assert np.max(np.abs(fine.lambdas - gauss_kl.lambdas) / gauss_kl.lambdas) < 1e-8

    def test_orthonormal(self, gauss_kl):
        assert np.abs(gram_matrix(gauss_kl) - np.eye(40)).max() < 1e-8

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            gaussian_kl(0.1, 10, 30)

    def test_too_many_modes(self):
        with pytest.raises(ValueError, match="positive"):
            gaussian_kl(1.0, 60, 240)


class TestField:
    def test_mean_at_zero(self, gauss_kl):
        x = np.linspace(0, 1, 11)
        assert np.allclose(eval_field(gauss_kl, 0.1, 0.021, x, np.zeros(40)), 0.1)

    def test_linearity(self, gauss_kl, rng):
        x = np.linspace(0, 1, 50)
        a, b = rng.uniform(-0.5, 0.5, (2, 40))
        f = lambda z: eval_field(gauss_kl, 0.1, 0.021, x, z)
        assert np.allclose(f(a) + f(b) - 0.1, f(a + b), atol=1e-14)

    def test_positive_realizations(self, rng):
        kl = gaussian_kl(1.0 / 16.0, 40)
        x = np.linspace(0, 1, 1000)
        vals = eval_field(kl, 0.1, 0.021, x, rng.uniform(-1, 1, (1000, 40)))
        assert vals.shape == (1000, 1000) and vals.min() > 0


class TestNu:
    def test_zero_sigma(self, exp_kl):
        assert np.all(nu_coefficients(exp_kl, 0.0).t == 0)

    def test_closed_form(self, exp_kl):
        nu = nu_coefficients(exp_kl, 0.11)
        w = exp_kl.omegas
        i = np.arange(1, 21)
        norm = np.sqrt(0.5 + np.where(i % 2, 1, -1) * np.sin(w) / (2 * w))
        closed = np.where(i % 2, 0.11 * np.sqrt(exp_kl.lambdas) * 2 * np.sin(w / 2) / (w * norm), 0.0)
        assert np.allclose(nu.t, closed, atol=1e-10, rtol=0)

    def test_decreasing_trend(self, exp_kl):
        t = np.abs(nu_coefficients(exp_kl, 0.11).t[::2])
        assert np.all(np.diff(t) < 0)

    def test_modes_sum_to_field(self, exp_kl, rng):
        nu = nu_coefficients(exp_kl, 0.11)
        y = np.linspace(0, 1, 33)
        xi = rng.uniform(-1, 1, 20)
        assert np.allclose(nu(y) @ xi, eval_field(exp_kl, 0.0, 0.11, y, xi), atol=1e-14)

    def test_requires_exponential(self, gauss_kl):
        with pytest.raises(ValueError):
            nu_coefficients(gauss_kl, 0.1)
