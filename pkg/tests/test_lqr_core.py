import numpy as np
import pytest

import lqgail as lg
from lqgail.numerics import NumericsConfig

from conftest import (
    cost_scalar,
    grad_scalar,
    random_instance,
    random_stabilizing_policy,
    random_theta,
    sigma_scalar,
)


class TestSpectralRadius:
    def test_diagonal(self):
        assert lg.spectral_radius(0.5 * np.eye(2)) == pytest.approx(0.5)

    def test_nilpotent(self):
        assert lg.spectral_radius([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(0.0)

    def test_rotation(self):
        # eigenvalues +/- i: modulus one, matching the characteristic polynomial
        assert lg.spectral_radius([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(1.0)

    def test_nonsquare_rejected(self):
        with pytest.raises(lg.ContractError):
            lg.spectral_radius(np.ones((2, 3)))


class TestIsStabilizing:
    @pytest.mark.parametrize("a,b,k,expected", [
        (0.5, 1.0, 0.0, True),
        (2.0, 1.0, 0.5, False),
        (2.0, 1.0, 1.5, True),
    ])
    def test_scalar_cases(self, a, b, k, expected):
        inst = lg.LqrInstance(A=[[a]], B=[[b]], Sigma0=[[1.0]])
        assert lg.is_stabilizing(inst, lg.Policy([[k]])) is expected

    def test_dimension_mismatch(self, scalar_instance):
        with pytest.raises(lg.ContractError):
            lg.is_stabilizing(scalar_instance, lg.Policy(np.zeros((2, 2))))

    def test_margin(self, scalar_instance):
        pol = lg.Policy([[0.0]])  # rho = 0.5
        assert lg.is_stabilizing(scalar_instance, pol, margin=0.4)
        assert not lg.is_stabilizing(scalar_instance, pol, margin=0.6)


class TestClosedLoop:
    def test_scalar_geometric_series(self, scalar_instance, unit_theta):
        sol = lg.solve_closed_loop(scalar_instance, unit_theta, lg.Policy([[0.0]]))
        assert sol.SigmaK[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-12)
        assert sol.PK[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-12)
        assert sol.rho == pytest.approx(0.5)

    def test_zero_closed_loop(self):
        # BK = A so T = 0: Sigma = Sigma0, P = Q + K'RK
        inst = lg.LqrInstance(A=[[0.5]], B=[[1.0]], Sigma0=[[2.0]])
        theta = lg.CostParam([[3.0]], [[2.0]])
        sol = lg.solve_closed_loop(inst, theta, lg.Policy([[0.5]]))
        assert sol.SigmaK[0, 0] == pytest.approx(2.0, rel=1e-12)
        assert sol.PK[0, 0] == pytest.approx(3.0 + 0.25 * 2.0, rel=1e-12)

    def test_random_residuals(self, rng):
        for _ in range(10):
            inst = random_instance(rng, 3, 2)
            theta = random_theta(rng, 3, 2)
            pol = random_stabilizing_policy(rng, inst, theta)
            sol = lg.solve_closed_loop(inst, theta, pol)
            K = pol.K
            r1 = np.linalg.norm(sol.SigmaK - inst.Sigma0 - sol.T @ sol.SigmaK @ sol.T.T)
            r2 = np.linalg.norm(sol.PK - theta.Q - K.T @ theta.R @ K
                                - sol.T.T @ sol.PK @ sol.T)
            assert r1 <= 1e-10 * max(1.0, np.linalg.norm(sol.SigmaK))
            assert r2 <= 1e-10 * max(1.0, np.linalg.norm(sol.PK))
            # visitation sum dominates the initial moment
            w = np.linalg.eigvalsh(sol.SigmaK - inst.Sigma0)
            assert w.min() >= -1e-10

    def test_unstable_policy_raises(self, scalar_instance, unit_theta):
        with pytest.raises(lg.InstabilityError) as err:
            lg.solve_closed_loop(scalar_instance, unit_theta, lg.Policy([[-1.0]]))
        assert err.value.rho == pytest.approx(1.5)


class TestLyapunovSolvers:
    def test_kron_and_doubling_agree(self, rng):
        force_doubling = NumericsConfig(kron_max_dim=0)
        for _ in range(5):
            T = rng.standard_normal((4, 4))
            T *= 0.8 / lg.spectral_radius(T)
            W = rng.standard_normal((4, 4))
            W = W @ W.T + np.eye(4)
            x_kron = lg.solve_discrete_lyapunov(T, W)
            x_doubling = lg.solve_discrete_lyapunov(T, W, force_doubling)
            assert np.allclose(x_kron, x_doubling, rtol=1e-11, atol=1e-11)

    def test_large_dimension_uses_doubling(self, rng):
        # d = 25 exceeds the Kronecker cutoff; residual bound is the oracle
        T = rng.standard_normal((25, 25))
        T *= 0.7 / lg.spectral_radius(T)
        W = np.eye(25)
        x = lg.solve_discrete_lyapunov(T, W)
        res = np.linalg.norm(x - W - T @ x @ T.T)
        assert res <= 1e-10 * max(1.0, np.linalg.norm(x))

    def test_divergence_raises(self):
        T = 1.5 * np.eye(21)  # doubling path, unstable
        with pytest.raises(lg.NumericalFailureError):
            lg.solve_discrete_lyapunov(T, np.eye(21))

    def test_cost_identity_through_doubling_path(self, rng):
        # d = 25 routes both Lyapunov solves through Smith doubling; the two
        # cost forms must still agree
        d = 25
        A = rng.standard_normal((d, d))
        A *= 0.6 / lg.spectral_radius(A)
        inst = lg.LqrInstance(A=A, B=rng.standard_normal((d, 2)), Sigma0=np.eye(d))
        theta = lg.CostParam(np.eye(d), np.eye(2))
        c = lg.cost(inst, theta, lg.Policy(np.zeros((2, d))))
        sol = lg.solve_closed_loop(inst, theta, lg.Policy(np.zeros((2, d))))
        assert c == pytest.approx(float(np.sum(inst.Sigma0 * sol.PK)), rel=1e-8)


class TestCost:
    def test_scalar(self, scalar_instance, unit_theta):
        assert lg.cost(scalar_instance, unit_theta, lg.Policy([[0.0]])) == \
            pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_zero_loop_form(self):
        inst = lg.LqrInstance(A=[[0.5]], B=[[1.0]], Sigma0=[[2.0]])
        theta = lg.CostParam([[3.0]], [[2.0]])
        c = lg.cost(inst, theta, lg.Policy([[0.5]]))
        assert c == pytest.approx(2.0 * 3.0 + 0.25 * 2.0 * 2.0, rel=1e-12)

    def test_two_decoupled_axes(self):
        inst = lg.LqrInstance(A=0.5 * np.eye(2), B=np.eye(2), Sigma0=np.eye(2))
        theta = lg.CostParam(np.eye(2), np.eye(2))
        assert lg.cost(inst, theta, lg.Policy(np.zeros((2, 2)))) == \
            pytest.approx(8.0 / 3.0, rel=1e-12)

    def test_cross_check_identity_random(self, rng):
        for _ in range(20):
            d = int(rng.integers(1, 5))
            k = int(rng.integers(1, 4))
            inst = random_instance(rng, d, k)
            theta = random_theta(rng, d, k)
            pol = random_stabilizing_policy(rng, inst, theta)
            sol = lg.solve_closed_loop(inst, theta, pol)
            c1 = lg.cost(inst, theta, pol, sol)
            c2 = float(np.sum(inst.Sigma0 * sol.PK))
            assert abs(c1 - c2) <= 1e-8 * max(1.0, abs(c1), abs(c2))


def central_fd_gradient(f, K, h=1e-6):
    g = np.zeros_like(K)
    for i in range(K.shape[0]):
        for j in range(K.shape[1]):
            e = np.zeros_like(K)
            e[i, j] = h
            g[i, j] = (f(K + e) - f(K - e)) / (2.0 * h)
    return g


class TestPolicyGradient:
    def test_scalar_value(self, scalar_instance, unit_theta):
        g = lg.policy_gradient(scalar_instance, unit_theta, lg.Policy([[0.0]]))
        assert g[0, 0] == pytest.approx(-16.0 / 9.0, rel=1e-12)
        assert g[0, 0] == pytest.approx(grad_scalar(0.5, 1.0, 0.0, 1.0, 1.0), rel=1e-12)

    def test_zero_at_optimum(self, rng):
        inst = random_instance(rng, 3, 2)
        theta = random_theta(rng, 3, 2)
        kstar = lg.solve_dare(inst, theta).Kstar
        g = lg.policy_gradient(inst, theta, lg.Policy(kstar))
        assert np.linalg.norm(g) <= 1e-8

    def test_matches_finite_differences(self, rng):
        for _ in range(5):
            inst = random_instance(rng, 3, 2)
            theta = random_theta(rng, 3, 2)
            pol = random_stabilizing_policy(rng, inst, theta, scale=0.3)
            g = lg.policy_gradient(inst, theta, pol)
            fd = central_fd_gradient(
                lambda K: lg.cost(inst, theta, lg.Policy(K)), pol.K)
            assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(g))


class TestGeometricIdentities:
    def test_difference_of_cost(self, rng):
        for _ in range(10):
            inst = random_instance(rng, 3, 2)
            theta = random_theta(rng, 3, 2)
            pol = random_stabilizing_policy(rng, inst, theta, scale=0.3)
            pol2 = random_stabilizing_policy(rng, inst, theta, scale=0.3)
            sol = lg.solve_closed_loop(inst, theta, pol)
            sol2 = lg.solve_closed_loop(inst, theta, pol2)
            e_k = lg.gain_residual(inst, theta, pol, sol)
            rbpb = theta.R + inst.B.T @ sol.PK @ inst.B
            dk = pol.K - pol2.K
            lhs = lg.cost(inst, theta, pol2, sol2) - lg.cost(inst, theta, pol, sol)
            rhs = (-2.0 * np.trace(sol2.SigmaK @ dk.T @ e_k)
                   + np.trace(sol2.SigmaK @ dk.T @ rbpb @ dk))
            assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs), abs(rhs))

    def test_gradient_dominance(self, rng):
        for _ in range(10):
            inst = random_instance(rng, 3, 2)
            theta = random_theta(rng, 3, 2)
            pol = random_stabilizing_policy(rng, inst, theta, scale=0.3)
            dare = lg.solve_dare(inst, theta)
            c_gap = lg.cost(inst, theta, pol) - lg.cost(inst, theta, lg.Policy(dare.Kstar))
            sig_star = lg.solve_closed_loop(inst, theta, lg.Policy(dare.Kstar)).SigmaK
            mu_c = np.linalg.norm(sig_star, 2) / (
                inst.mu ** 2 * np.min(np.linalg.eigvalsh(theta.R)))
            g = lg.policy_gradient(inst, theta, pol)
            assert c_gap <= mu_c * np.linalg.norm(g) ** 2 + 1e-9

    def test_gradient_upper_bound(self, rng):
        for _ in range(10):
            inst = random_instance(rng, 3, 2)
            theta = random_theta(rng, 3, 2)
            pol = random_stabilizing_policy(rng, inst, theta, scale=0.3)
            sol = lg.solve_closed_loop(inst, theta, pol)
            dare = lg.solve_dare(inst, theta)
            c_k = lg.cost(inst, theta, pol, sol)
            gap = c_k - lg.cost(inst, theta, lg.Policy(dare.Kstar))
            rbpb = theta.R + inst.B.T @ sol.PK @ inst.B
            bound = (c_k / (np.sqrt(inst.mu) * np.min(np.linalg.eigvalsh(theta.Q)))
                     * np.sqrt(np.linalg.norm(rbpb, 2) * max(gap, 0.0)))
            g2 = np.linalg.norm(lg.policy_gradient(inst, theta, pol, sol), 2)
            assert g2 <= bound + 1e-9 * max(1.0, bound)


class TestValidation:
    def test_asymmetric_sigma0(self):
        with pytest.raises(lg.ContractError):
            lg.LqrInstance(A=np.eye(2), B=np.eye(2),
                           Sigma0=[[1.0, 1e-6], [0.0, 1.0]])

    def test_indefinite_q(self):
        with pytest.raises(lg.ContractError):
            lg.CostParam([[0.0]], [[1.0]])

    def test_dim_mismatch(self):
        with pytest.raises(lg.ContractError):
            lg.LqrInstance(A=np.eye(2), B=np.ones((3, 1)), Sigma0=np.eye(2))

    def test_arrays_frozen(self, scalar_instance):
        with pytest.raises(ValueError):
            scalar_instance.A[0, 0] = 2.0


def test_sigma_scalar_oracle_consistency(scalar_instance, unit_theta):
    sol = lg.solve_closed_loop(scalar_instance, unit_theta, lg.Policy([[0.2]]))
    assert sol.SigmaK[0, 0] == pytest.approx(sigma_scalar(0.5, 1.0, 0.2), rel=1e-12)
    assert lg.cost(scalar_instance, unit_theta, lg.Policy([[0.2]])) == \
        pytest.approx(cost_scalar(0.5, 1.0, 0.2, 1.0, 1.0), rel=1e-12)
