import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ridgeloc import (InsufficientRows, RidgeConfig, SingularSystem, SolverConfig, hkb_ridge_parameter,
                      ridge_solve_step, solve_fused, solve_fused_ridge, solve_least_squares)
from ridgeloc.fusion import normalize_stacked, stack_observations

from conftest import SIM_NOISE, arc_instance


def orthonormal_fixture():
    """6x4 T with orthonormal columns; dPhi = first column + e with e orthogonal to T, ||e||^2 = 0.02."""
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(6, 6)))
    T = Q[:, :4]
    e = 0.1 * (Q[:, 4] + Q[:, 5])
    return T, T[:, 0] + e


class TestHKB:
    def test_hand_derived_value(self):
        # delta0^2 = 0.02 / (6 - 4) = 0.01, fitted signal = 1, k = 4 * 0.01 / 1
        T, dPhi = orthonormal_fixture()
        k, t, d0 = hkb_ridge_parameter(T, dPhi)
        assert t == 4
        assert d0 == pytest.approx(0.01, abs=1e-12)
        assert k == pytest.approx(0.04, abs=1e-12)

    def test_perfect_fit_gives_zero(self, rng):
        T = rng.normal(size=(9, 4))
        k, _, d0 = hkb_ridge_parameter(T, T @ rng.normal(size=4))
        assert d0 < 1e-25 and k < 1e-25

    def test_literal_dof(self):
        T, dPhi = orthonormal_fixture()
        k, _, d0 = hkb_ridge_parameter(T, dPhi, dof_count=5)
        assert d0 == pytest.approx(0.02) and k == pytest.approx(0.08)

    def test_no_residual_dof(self, rng):
        with pytest.raises(InsufficientRows):
            hkb_ridge_parameter(rng.normal(size=(4, 4)), rng.normal(size=4))

    @settings(max_examples=60, deadline=None)
    @given(arrays(float, (8, 4), elements=st.floats(-10, 10)), arrays(float, 8, elements=st.floats(-10, 10)),
           st.permutations(range(8)))
    def test_nonnegative_and_row_order_free(self, T, dPhi, perm):
        if np.linalg.svd(T, compute_uv=False)[-1] < 1e-3 or np.linalg.norm(dPhi) < 1e-3:
            return
        k, t, _ = hkb_ridge_parameter(T, dPhi)
        k2, t2, _ = hkb_ridge_parameter(T[list(perm)], dPhi[list(perm)])
        assert k >= 0 and t == t2
        assert k2 == pytest.approx(k, rel=1e-9, abs=1e-15)


class TestRidgeStep:
    def test_zero_k_is_least_squares(self, rng):
        T, b = rng.normal(size=(12, 4)), rng.normal(size=12)
        np.testing.assert_allclose(ridge_solve_step(T, b, 0.0), solve_least_squares(T, b), rtol=1e-9)

    def test_identity(self):
        np.testing.assert_allclose(ridge_solve_step(np.eye(4), np.ones(4), 1.0), np.full(4, 0.5))

    def test_singular_without_ridge(self):
        T = np.ones((5, 4))
        with pytest.raises(SingularSystem):
            ridge_solve_step(T, np.ones(5), 0.0)
        assert np.all(np.isfinite(ridge_solve_step(T, np.ones(5), 1e-3)))

    def test_negative_k(self):
        with pytest.raises(ValueError):
            ridge_solve_step(np.eye(4), np.ones(4), -1.0)

    @settings(max_examples=60, deadline=None)
    @given(arrays(float, (10, 4), elements=st.floats(-5, 5)), arrays(float, 10, elements=st.floats(-5, 5)))
    def test_shrinkage(self, T, dPhi):
        if np.linalg.svd(T, compute_uv=False)[-1] < 1e-2:
            return
        norms = [np.linalg.norm(ridge_solve_step(T, dPhi, k)) for k in (0.0, 1e-6, 1e-4, 1e-2, 1.0)]
        assert all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(norms, norms[1:]))


class TestSolveFusedRidge:
    @pytest.mark.parametrize("gamma, n", [(10, 3), (45, 10), (80, 20)])
    def test_noise_free(self, gamma, n):
        sc, obs = arc_instance(gamma=gamma, n=n)
        rep = solve_fused_ridge(obs)
        assert rep.converged and np.linalg.norm(rep.estimate - sc.target) < 1e-6
        assert max(rep.ridge_history) <= 1e-12

    def test_zero_k_reproduces_fused(self):
        _, obs = arc_instance(gamma=30, n=10, noise=SIM_NOISE, seed=9)
        a = solve_fused(obs)
        b = solve_fused_ridge(obs, ridge=RidgeConfig(fixed_k=0.0))
        np.testing.assert_allclose(b.estimate, a.estimate, rtol=0, atol=1e-9)
        assert a.iterations == b.iterations

    def test_histories(self):
        _, obs = arc_instance(gamma=10, n=10, noise=SIM_NOISE, seed=9)
        rep = solve_fused_ridge(obs)
        assert len(rep.ridge_history) == len(rep.ridge_condition_history) == rep.iterations
        assert all(k > 0 for k in rep.ridge_history)
        assert all(rc < c for rc, c in zip(rep.ridge_condition_history, rep.condition_history))
        assert rep.ridge_k_final == rep.ridge_history[-1]

    def test_initial_only_keeps_the_first_k(self):
        _, obs = arc_instance(gamma=20, n=10, noise=SIM_NOISE, seed=9)
        rep = solve_fused_ridge(obs, ridge=RidgeConfig(mode="initial_only"))
        assert len(set(rep.ridge_history)) == 1

    def test_first_k_matches_the_standalone_formula(self):
        _, obs = arc_instance(gamma=20, n=10, noise=SIM_NOISE, seed=9)
        X0 = solve_fused(obs, config=SolverConfig(max_iterations=1)).estimate
        rep = solve_fused_ridge(obs, X0, SolverConfig(max_iterations=1))
        s = normalize_stacked(*stack_observations(obs, X0))
        assert rep.ridge_history[0] == pytest.approx(hkb_ridge_parameter(s.T, s.dPhi)[0], rel=1e-9)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RidgeConfig(mode="sometimes")
        with pytest.raises(ValueError):
            RidgeConfig(fixed_k=-1.0)
