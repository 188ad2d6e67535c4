import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparse_pce.pc_basis import assemble, basis_matrix, build_basis
from sparse_pce.solvers import WeightVector, solve_weighted_bpdn
from sparse_pce.weights import (DecayModel, TaylorBoundSpec, damped_weights, default_eps_w,
                                elliptic_bound, fit_gk, misrank, save_bound_csv, taylor_bound,
                                taylor_bound_exact, taylor_moments_exact, taylor_moments_mc,
                                theoretical_gk)


class TestDampedWeights:
    def test_formula(self):
        w = damped_weights([1.0, 0.0], 1.0, 1.0)
        assert np.allclose(w.w, [0.5, 1.0])
        assert w.provenance == "prior_bound"

    def test_p_zero_uniform(self, rng):
        assert np.all(damped_weights(rng.standard_normal(9), 1e-3, 0.0).w == 1.0)

    @pytest.mark.parametrize("eps", [0.0, -1.0])
    def test_eps_positive(self, eps):
        with pytest.raises(ValueError):
            damped_weights([1.0], eps)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30), st.floats(1e-12, 1.0), st.floats(0.0, 1.0))
    def test_monotone_and_finite(self, c, eps, p):
        w = damped_weights(c, eps, p).w
        a = np.abs(np.array(c))
        assert np.all(np.isfinite(w)) and np.all(w > 0)
        order = np.argsort(a)
        assert np.all(np.diff(w[order]) <= 1e-12 * w[order][:-1])


class TestDefaultEpsW:
    def test_mean(self):
        assert default_eps_w([2.0, 2.0, 2.0], 5e-5) == pytest.approx(1e-4)

    def test_scale(self):
        assert default_eps_w([1.0, 3.0], 5e-2) == pytest.approx(0.1)

    def test_zero_mean_fallback(self):
        assert default_eps_w([1.0, -1.0, 1.0, -1.0], 0.1) == pytest.approx(0.1)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            default_eps_w([0.0, 0.0])


class TestEllipticBound:
    def test_zero_index_is_C0(self):
        b = elliptic_bound(DecayModel([1.0, 2.0], 3.5), build_basis(2, 2))
        assert b[0] == 3.5

    def test_direct_formula(self):
        basis = build_basis(2, 2)
        b = elliptic_bound(DecayModel([1.0, 2.0], 1.0), basis)
        assert b[basis.position((1, 1))] == pytest.approx(2 * math.exp(-3))
        assert b[basis.position((1, 1))] == pytest.approx(0.0995741367357279, rel=1e-12)

    def test_high_degree_no_overflow(self):
        basis = build_basis(2, 30)
        b = elliptic_bound(DecayModel([3.0, 3.0]), basis)
        assert np.all(np.isfinite(b)) and np.all(b >= 0)
        j = basis.position((15, 15))
        assert b[j] == pytest.approx(math.comb(30, 15) * math.exp(-90), rel=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            elliptic_bound(DecayModel([1.0]), build_basis(2, 1))

    @given(st.lists(st.floats(math.log(4) + 1e-3, 6.0), min_size=1, max_size=4), st.integers(1, 4))
    def test_decreasing_along_coordinate(self, g, q):
        # raising alpha_k multiplies the bound by (|a|+1)/(a_k+1) e^{-g_k} <= q e^{-g_k}
        basis = build_basis(len(g), q)
        b = elliptic_bound(DecayModel(g), basis)
        for j, a in enumerate(basis.indices):
            for k in range(len(g)):
                up = a.copy()
                up[k] += 1
                if up.sum() <= q:
                    assert b[basis.position(up)] < b[j]

    def test_theoretical_rates(self):
        r = np.array([0.1, 0.01])
        assert np.allclose(theoretical_gk(r), -np.log(r / (math.sqrt(3) * math.log(2))))
        with pytest.raises(ValueError):
            theoretical_gk([0.0])

    def test_csv(self, tmp_path):
        save_bound_csv(tmp_path / "b.csv", [1.0, -0.5])
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines == ["j,bound", "0,1.0", "1,0.5"]


class TestFitGk:
    def test_exact_exponential(self):
        assert fit_gk([0, 1, 2], [1.0, math.exp(-2), math.exp(-4)]) == pytest.approx(2.0)

    def test_zero_excluded(self):
        assert fit_gk([0, 1, 2, 3], [1.0, 0.0, math.exp(-3), math.exp(-4.5)]) == pytest.approx(1.5)

    def test_too_few(self):
        with pytest.raises(ValueError):
            fit_gk([0, 1, 2], [1.0, 1e-16, 0.0])


def _spec(t, K, Tc=-0.5, M=200_000):
    return TaylorBoundSpec(np.asarray(t, float), K, Tc, M)


class TestTaylorBound:
    def test_constant_term(self):
        b = taylor_bound(_spec([0.1, 0.2], 2, M=20_000), build_basis(2, 2))
        assert b[0] >= 1.0

    def test_degree_one_moment(self):
        t = np.array([0.3, -0.2])
        basis = build_basis(2, 1)
        spec = _spec(t, 1)
        mean, se = taylor_moments_mc(spec, basis, rng_seed=3)
        exact = t / math.sqrt(3)  # E[sqrt(3) xi_i * t_i xi_i]
        assert np.all(np.abs(mean[1:, 1] - exact) <= 3 * se[1:, 1])
        b = taylor_bound(spec, basis, rng_seed=3)
        assert b[1] == pytest.approx(abs(t[0]) / (math.sqrt(3) * 0.5), rel=0.02)

    def test_zero_t_kills_higher_orders(self):
        basis = build_basis(3, 3)
        b = taylor_bound(_spec([0.0, 0.0, 0.0], 3, M=5000), basis)
        assert b[0] == pytest.approx(1.0)
        assert np.all(b[1:] == 0.0)

    @pytest.mark.parametrize("K", [0, 1, 2])
    def test_mc_matches_exact_within_three_se(self, K):
        basis = build_basis(3, 2)
        spec = _spec([0.4, -0.25, 0.1], K, M=100_000)
        mean, se = taylor_moments_mc(spec, basis, rng_seed=11)
        exact = taylor_moments_exact(spec, basis)
        assert np.all(np.abs(mean - exact) <= 3 * se + 1e-14)

    def test_exact_known_value(self):
        # E[psi_(2,0) (t1 xi1)^2] = t1^2 * E[sqrt5 (3x^2-1)/2 x^2] = t1^2 * 2 sqrt5 / 15
        basis = build_basis(2, 2)
        spec = _spec([0.5, 0.0], 2)
        m = taylor_moments_exact(spec, basis)
        assert m[basis.position((2, 0)), 2] == pytest.approx(0.25 * 2 * math.sqrt(5) / 15)

    def test_permutation_invariance(self):
        basis = build_basis(3, 2)
        t = np.array([0.3, -0.1, 0.2])
        perm = [2, 0, 1]
        b = taylor_bound_exact(_spec(t, 3), basis)
        bp = taylor_bound_exact(_spec(t[perm], 3), basis)
        for j, a in enumerate(basis.indices):
            assert bp[basis.position(a[perm])] == pytest.approx(b[j], rel=1e-12, abs=1e-15)

    def test_deterministic(self):
        basis = build_basis(2, 2)
        s = _spec([0.1, 0.2], 2, M=10_000)
        assert np.array_equal(taylor_bound(s, basis, 5), taylor_bound(s, basis, 5))

    @pytest.mark.parametrize("kw", [dict(K=-1), dict(mc_samples=0), dict(Tc_bar=0.0)])
    def test_invalid(self, kw):
        args = dict(t=np.ones(2), K=2, Tc_bar=-0.5, mc_samples=10)
        args.update(kw)
        with pytest.raises(ValueError):
            TaylorBoundSpec(**args)


class TestScaleInvariance:
    @pytest.mark.parametrize("t", [1e-3, 0.5, 40.0])
    def test_bound_scaling_leaves_solution(self, t, rng):
        basis = build_basis(4, 3)
        c0 = np.zeros(basis.P)
        c0[[0, 2, 5, 11]] = [1.0, 0.5, -0.2, 0.1]
        xi = rng.uniform(-1, 1, (20, 4))
        m = assemble(basis, xi, basis_matrix(basis, xi) @ c0)
        bound = elliptic_bound(DecayModel([2.0, 2.5, 3.0, 3.5]), basis)
        eps = 0.01 * np.linalg.norm(m.u)
        a = solve_weighted_bpdn(m, eps, WeightVector(1.0 / bound, "prior_bound")).c
        b = solve_weighted_bpdn(m, eps, WeightVector(1.0 / (t * bound), "prior_bound")).c
        assert np.linalg.norm(a - b) <= 1e-6 * (1 + np.linalg.norm(a))


def test_misrank_keeps_values(rng):
    b = np.arange(20.0)
    out = misrank(b, 1.0, rng)
    assert sorted(out) == sorted(b) and not np.array_equal(out, b)
    assert np.array_equal(misrank(b, 0.0, rng), b)
