"""Discrete algebraic Riccati oracle.

Provides the optimal/expert gain K*(theta) through value iteration on
P <- Q + A'PA - A'PB (B'PB + R)^{-1} B'PA, the analytic Jacobian of the
Riccati residual with respect to P, and the regularity check on that
Jacobian (nonsingularity gate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NotStabilizableError, NumericalFailureError
from .lqr_core import (
    CostParam,
    LqrInstance,
    Policy,
    solve_discrete_lyapunov,
    spectral_radius,
)
from .numerics import DEFAULT_NUMERICS, NumericsConfig, frob, symmetrize


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing fixed point of the Riccati map with its gain.

    residual is the Frobenius norm of f(Pstar, Q, R); iterations counts the
    value-iteration sweeps (Newton refinement, when taken, adds one).
    """

    Pstar: np.ndarray
    Kstar: np.ndarray
    residual: float
    iterations: int


def riccati_residual(P, inst: LqrInstance, theta: CostParam) -> np.ndarray:
    """f(P, Q, R) = P - A'PA - Q + A'PB (B'PB + R)^{-1} B'PA."""
    A, B = inst.A, inst.B
    BPB_R = B.T @ P @ B + theta.R
    BPA = B.T @ P @ A
    return P - A.T @ P @ A - theta.Q + A.T @ P @ B @ np.linalg.solve(BPB_R, BPA)


def _gain_from(P, inst: LqrInstance, theta: CostParam) -> np.ndarray:
    B = inst.B
    return np.linalg.solve(B.T @ P @ B + theta.R, B.T @ P @ inst.A)


def solve_dare(inst: LqrInstance, theta: CostParam,
               numerics: NumericsConfig = DEFAULT_NUMERICS,
               p0: np.ndarray | None = None) -> RiccatiSolution:
    """Stabilizing positive-definite DARE solution by value iteration.

    Starts from P0 = Q (or a caller-provided warm start), stops when the
    successive-iterate change falls below ``numerics.dare_step_tol``, and
    applies one Newton (Lyapunov) refinement step if the residual still
    exceeds the relative bound. Divergence raises NotStabilizableError.
    """
    if theta.Q.shape[0] != inst.d or theta.R.shape[0] != inst.k:
        raise ContractError("cost parameter dimensions do not match instance")
    A, B = inst.A, inst.B
    P = symmetrize(np.array(theta.Q if p0 is None else p0, dtype=np.float64))
    iterations = 0
    for iterations in range(1, numerics.dare_max_iter + 1):
        BPB_R = B.T @ P @ B + theta.R
        BPA = B.T @ P @ A
        P_next = symmetrize(theta.Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(BPB_R, BPA))
        step = frob(P_next - P)
        P = P_next
        if frob(P) > numerics.dare_divergence:
            raise NotStabilizableError(
                f"Riccati value iteration diverged (||P|| > {numerics.dare_divergence:.1e})"
            )
        if step <= numerics.dare_step_tol:
            break
    else:
        raise NotStabilizableError(
            f"Riccati value iteration did not converge in {numerics.dare_max_iter} sweeps"
        )

    res = frob(riccati_residual(P, inst, theta))
    if res > numerics.dare_rtol * max(1.0, frob(P)):
        # one Newton step: refresh the gain, solve the policy-evaluation Lyapunov
        K = _gain_from(P, inst, theta)
        T = A - B @ K
        if spectral_radius(T) >= 1.0:
            raise NotStabilizableError("Newton refinement produced a non-stabilizing gain")
        P = solve_discrete_lyapunov(T.T, theta.Q + K.T @ theta.R @ K, numerics)
        iterations += 1
        res = frob(riccati_residual(P, inst, theta))
        if res > numerics.dare_rtol * max(1.0, frob(P)):
            raise NumericalFailureError(
                f"Riccati residual {res:.3e} still above bound after Newton refinement"
            )

    Kstar = _gain_from(P, inst, theta)
    rho = spectral_radius(A - B @ Kstar)
    if rho >= 1.0:
        raise NotStabilizableError(f"converged Riccati gain is not stabilizing: rho = {rho:.6f}")
    return RiccatiSolution(Pstar=P, Kstar=Kstar, residual=res, iterations=iterations)


def expert_policy(inst: LqrInstance, theta_tilde: CostParam,
                  numerics: NumericsConfig = DEFAULT_NUMERICS) -> Policy:
    """Optimal gain for the (expert) cost parameter."""
    return Policy(solve_dare(inst, theta_tilde, numerics).Kstar)


def riccati_jacobian(inst: LqrInstance, theta: CostParam,
                     sol: RiccatiSolution | None = None,
                     numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """Jacobian Y of the Riccati residual with respect to P at the fixed point.

    Row (i*d + j) holds df_{ij}; column (k*d + l) differentiates in the
    direction of the P-basis matrix e_k e_l'. Built from the analytic
    directional derivative

        Df[D] = D - A'DA + A'DB G B'PA + A'PB G B'DA - A'PB G B'DB G B'PA,

    with G = (B'PB + R)^{-1}, applied to all d^2 basis directions.
    """
    if sol is None:
        sol = solve_dare(inst, theta, numerics)
    A, B = inst.A, inst.B
    P = sol.Pstar
    d = inst.d
    G = np.linalg.inv(B.T @ P @ B + theta.R)
    BPA = B.T @ P @ A
    APB = A.T @ P @ B
    Y = np.empty((d * d, d * d))
    for kk in range(d):
        for ll in range(d):
            D = np.zeros((d, d))
            D[kk, ll] = 1.0
            DfD = (
                D
                - A.T @ D @ A
                + A.T @ D @ B @ G @ BPA
                + APB @ G @ B.T @ D @ A
                - APB @ G @ (B.T @ D @ B) @ G @ BPA
            )
            Y[:, kk * d + ll] = DfD.reshape(-1)
    return Y


@dataclass(frozen=True)
class JacobianRegularityReport:
    ok: bool
    sigma_min: float
    sigma_max: float
    rel_gate: float


def check_jacobian_regularity(inst: LqrInstance, theta: CostParam,
                              sol: RiccatiSolution | None = None,
                              rel_gate: float = 1e-8,
                              numerics: NumericsConfig = DEFAULT_NUMERICS) -> JacobianRegularityReport:
    """Nonsingularity gate on Y: sigma_min(Y) > rel_gate * sigma_max(Y).

    The underlying requirement is det(Y) != 0; a relative singular-value gap
    is the numerically meaningful surrogate.
    """
    Y = riccati_jacobian(inst, theta, sol, numerics)
    s = np.linalg.svd(Y, compute_uv=False)
    smax = float(s[0]) if s.size else 0.0
    smin = float(s[-1]) if s.size else 0.0
    return JacobianRegularityReport(ok=smin > rel_gate * smax, sigma_min=smin,
                                    sigma_max=smax, rel_gate=rel_gate)
