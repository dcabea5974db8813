import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

import lqgail as lg

from conftest import (
    dare_p_scalar,
    random_instance,
    random_stabilizing_policy,
    random_theta,
)


class TestSolveDare:
    def test_golden_ratio_fixed_point(self, unit_theta):
        inst = lg.LqrInstance(A=[[1.0]], B=[[1.0]], Sigma0=[[1.0]])
        sol = lg.solve_dare(inst, unit_theta)
        phi = (1.0 + np.sqrt(5.0)) / 2.0
        assert sol.Pstar[0, 0] == pytest.approx(phi, rel=1e-12)
        assert sol.Kstar[0, 0] == pytest.approx(phi / (phi + 1.0), rel=1e-12)
        assert sol.Kstar[0, 0] == pytest.approx(0.61803, abs=1e-5)

    def test_no_dynamics(self, rng):
        theta = random_theta(rng, 3, 2)
        inst = lg.LqrInstance(A=np.zeros((3, 3)), B=rng.standard_normal((3, 2)),
                              Sigma0=np.eye(3))
        sol = lg.solve_dare(inst, theta)
        assert np.allclose(sol.Pstar, theta.Q, atol=1e-12)
        assert np.allclose(sol.Kstar, 0.0, atol=1e-12)

    def test_random_residual_and_stationarity(self, rng):
        for _ in range(10):
            inst = random_instance(rng, 3, 2, rho_a=0.8)
            theta = random_theta(rng, 3, 2)
            sol = lg.solve_dare(inst, theta)
            res = np.linalg.norm(lg.riccati_residual(sol.Pstar, inst, theta))
            assert res <= 1e-10 * max(1.0, np.linalg.norm(sol.Pstar))
            g = lg.policy_gradient(inst, theta, lg.Policy(sol.Kstar))
            assert np.linalg.norm(g) <= 1e-8
            assert lg.spectral_radius(inst.A - inst.B @ sol.Kstar) < 1.0

    def test_against_scipy(self, rng):
        for _ in range(5):
            inst = random_instance(rng, 4, 2, rho_a=0.9)
            theta = random_theta(rng, 4, 2)
            ours = lg.solve_dare(inst, theta)
            ref = solve_discrete_are(inst.A, inst.B, theta.Q, theta.R)
            assert np.allclose(ours.Pstar, ref, rtol=1e-9, atol=1e-9)

    def test_scalar_closed_form(self, rng):
        for _ in range(10):
            a = float(rng.uniform(-1.5, 1.5))
            b = float(rng.uniform(0.2, 2.0))
            q = float(rng.uniform(0.2, 3.0))
            r = float(rng.uniform(0.2, 3.0))
            inst = lg.LqrInstance(A=[[a]], B=[[b]], Sigma0=[[1.0]])
            sol = lg.solve_dare(inst, lg.CostParam([[q]], [[r]]))
            assert sol.Pstar[0, 0] == pytest.approx(dare_p_scalar(a, b, q, r), rel=1e-11)

    def test_not_stabilizable(self):
        inst = lg.LqrInstance(A=[[2.0]], B=[[0.0]], Sigma0=[[1.0]])
        with pytest.raises(lg.NotStabilizableError):
            lg.solve_dare(inst, lg.CostParam([[1.0]], [[1.0]]))

    def test_open_loop_unstable_plant(self, rng):
        # rho(A) > 1 but controllable: value iteration still lands on the
        # stabilizing solution
        A = rng.standard_normal((3, 3))
        A *= 1.2 / lg.spectral_radius(A)
        inst = lg.LqrInstance(A=A, B=np.eye(3), Sigma0=np.eye(3))
        theta = lg.CostParam(np.eye(3), np.eye(3))
        sol = lg.solve_dare(inst, theta)
        assert lg.spectral_radius(inst.A - inst.B @ sol.Kstar) < 1.0
        assert np.linalg.norm(lg.riccati_residual(sol.Pstar, inst, theta)) <= \
            1e-10 * max(1.0, np.linalg.norm(sol.Pstar))


class TestExpertPolicy:
    def test_scalar(self, unit_theta):
        inst = lg.LqrInstance(A=[[1.0]], B=[[1.0]], Sigma0=[[1.0]])
        ke = lg.expert_policy(inst, unit_theta)
        assert ke.K[0, 0] == pytest.approx(0.61803, abs=1e-5)

    def test_no_dynamics(self, rng):
        inst = lg.LqrInstance(A=np.zeros((2, 2)), B=np.eye(2), Sigma0=np.eye(2))
        ke = lg.expert_policy(inst, lg.CostParam(np.eye(2), np.eye(2)))
        assert np.allclose(ke.K, 0.0, atol=1e-12)

    def test_decoupled_diagonal(self):
        inst = lg.LqrInstance(A=np.diag([0.5, 0.8]), B=np.eye(2), Sigma0=np.eye(2))
        ke = lg.expert_policy(inst, lg.CostParam(np.eye(2), np.eye(2)))
        for i, a in enumerate([0.5, 0.8]):
            p = dare_p_scalar(a, 1.0, 1.0, 1.0)
            assert ke.K[i, i] == pytest.approx(p * a / (p + 1.0), rel=1e-11)
        assert abs(ke.K[0, 1]) < 1e-12 and abs(ke.K[1, 0]) < 1e-12


class TestJacobian:
    def test_no_dynamics_identity(self, rng):
        inst = lg.LqrInstance(A=np.zeros((3, 3)), B=rng.standard_normal((3, 2)),
                              Sigma0=np.eye(3))
        Y = lg.riccati_jacobian(inst, random_theta(rng, 3, 2))
        assert np.allclose(Y, np.eye(9), atol=1e-12)

    def test_scalar_formula(self):
        # derivative of the scalar residual: 1 - a^2 r^2 / (b^2 p + r)^2
        a, b, q, r = 1.0, 1.0, 1.0, 1.0
        inst = lg.LqrInstance(A=[[a]], B=[[b]], Sigma0=[[1.0]])
        theta = lg.CostParam([[q]], [[r]])
        Y = lg.riccati_jacobian(inst, theta)
        p = dare_p_scalar(a, b, q, r)
        expected = 1.0 - a * a * r * r / (b * b * p + r) ** 2
        assert Y[0, 0] == pytest.approx(expected, rel=1e-10)

    def test_matches_finite_differences(self, rng):
        inst = random_instance(rng, 2, 1, rho_a=0.7)
        theta = random_theta(rng, 2, 1)
        sol = lg.solve_dare(inst, theta)
        Y = lg.riccati_jacobian(inst, theta, sol)
        h = 1e-6
        d = 2
        Y_fd = np.zeros((d * d, d * d))
        for kk in range(d):
            for ll in range(d):
                E = np.zeros((d, d))
                E[kk, ll] = h
                fp = lg.riccati_residual(sol.Pstar + E, inst, theta)
                fm = lg.riccati_residual(sol.Pstar - E, inst, theta)
                Y_fd[:, kk * d + ll] = ((fp - fm) / (2.0 * h)).reshape(-1)
        assert np.linalg.norm(Y - Y_fd) <= 1e-5 * max(1.0, np.linalg.norm(Y))


class TestRegularityGate:
    def test_no_dynamics(self, rng):
        inst = lg.LqrInstance(A=np.zeros((2, 2)), B=np.eye(2), Sigma0=np.eye(2))
        rep = lg.check_jacobian_regularity(inst, lg.CostParam(np.eye(2), np.eye(2)))
        assert rep.ok
        assert rep.sigma_min == pytest.approx(1.0, rel=1e-12)
        assert rep.sigma_max == pytest.approx(1.0, rel=1e-12)

    def test_scalar_value(self, unit_theta):
        inst = lg.LqrInstance(A=[[1.0]], B=[[1.0]], Sigma0=[[1.0]])
        rep = lg.check_jacobian_regularity(inst, unit_theta)
        p = (1.0 + np.sqrt(5.0)) / 2.0
        assert rep.ok
        assert rep.sigma_min == pytest.approx(1.0 - 1.0 / (p + 1.0) ** 2, rel=1e-9)

    def test_verdict_matches_fd_jacobian(self, rng):
        inst = random_instance(rng, 2, 2, rho_a=0.6)
        theta = random_theta(rng, 2, 2)
        rep = lg.check_jacobian_regularity(inst, theta)
        sol = lg.solve_dare(inst, theta)
        h = 1e-6
        Y_fd = np.zeros((4, 4))
        for kk in range(2):
            for ll in range(2):
                E = np.zeros((2, 2))
                E[kk, ll] = h
                fp = lg.riccati_residual(sol.Pstar + E, inst, theta)
                fm = lg.riccati_residual(sol.Pstar - E, inst, theta)
                Y_fd[:, kk * 2 + ll] = ((fp - fm) / (2.0 * h)).reshape(-1)
        s = np.linalg.svd(Y_fd, compute_uv=False)
        assert rep.ok == (s[-1] > 1e-8 * s[0])


class TestOptimality:
    def test_beats_random_policies(self, rng):
        inst = random_instance(rng, 3, 2)
        theta = random_theta(rng, 3, 2)
        dare = lg.solve_dare(inst, theta)
        c_star = lg.cost(inst, theta, lg.Policy(dare.Kstar))
        checked = 0
        while checked < 100:
            K = dare.Kstar + 0.4 * rng.standard_normal(dare.Kstar.shape)
            if lg.spectral_radius(inst.A - inst.B @ K) >= 1.0 - 1e-9:
                continue
            assert c_star <= lg.cost(inst, theta, lg.Policy(K)) + 1e-10
            checked += 1

    def test_gradient_descent_finds_same_optimum(self, rng):
        # independent route: descent on the cost with a Barzilai-Borwein
        # stepsize (safeguarded against destabilizing steps)
        inst = random_instance(rng, 2, 2, rho_a=0.6)
        theta = random_theta(rng, 2, 2)
        dare = lg.solve_dare(inst, theta)
        K = random_stabilizing_policy(rng, inst, theta, scale=0.3).K.copy()
        g = lg.policy_gradient(inst, theta, lg.Policy(K))
        step = 1e-3
        for _ in range(5000):
            if np.linalg.norm(g) <= 1e-10:
                break
            while step > 1e-16:
                K_try = K - step * g
                if lg.spectral_radius(inst.A - inst.B @ K_try) < 1.0 - 1e-9:
                    break
                step *= 0.5
            g_new = lg.policy_gradient(inst, theta, lg.Policy(K_try))
            dk, dg = (K_try - K).ravel(), (g_new - g).ravel()
            K, g = K_try, g_new
            denom = float(dk @ dg)
            step = float(dk @ dk) / denom if denom > 0 else step * 2.0
        assert np.linalg.norm(g) <= 1e-10
        assert np.linalg.norm(K - dare.Kstar) <= 1e-6

    def test_local_quadratic_growth(self, rng):
        inst = random_instance(rng, 3, 2)
        theta = random_theta(rng, 3, 2)
        dare = lg.solve_dare(inst, theta)
        c_star = lg.cost(inst, theta, lg.Policy(dare.Kstar))
        alpha_r = float(np.min(np.linalg.eigvalsh(theta.R)))
        for _ in range(25):
            delta = rng.standard_normal(dare.Kstar.shape)
            delta *= 1e-3 * rng.uniform(0.05, 1.0) / np.linalg.norm(delta)
            K = dare.Kstar + delta
            gap = lg.cost(inst, theta, lg.Policy(K)) - c_star
            assert gap >= alpha_r * inst.mu * np.linalg.norm(delta) ** 2 - 1e-9
