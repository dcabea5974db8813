"""Exact LQR quantities for linear feedback policies.

Everything here is deterministic dense linear algebra: closed-loop stability,
the state second-moment sum, the cost-to-go matrix, the scalar cost, and the
analytic cost gradient with respect to the gain. All functions are pure;
domain objects are frozen and hold read-only arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InstabilityError, NumericalFailureError
from .numerics import (
    DEFAULT_NUMERICS,
    NumericsConfig,
    as_matrix,
    check_symmetric,
    frob,
    min_eig_sym,
    symmetrize,
)


def _freeze(m):
    m = np.array(m, dtype=np.float64, copy=True)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class LqrInstance:
    """Dynamics x_{t+1} = A x_t + B u_t with initial second moment Sigma0.

    Sigma0 must be symmetric (to 1e-12) with strictly positive minimum
    eigenvalue; its smallest eigenvalue is exposed as :attr:`mu`.
    """

    A: np.ndarray
    B: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        d = A.shape[0]
        if A.shape[1] != d:
            raise ContractError(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, "B", rows=d)
        if d < 1 or B.shape[1] < 1:
            raise ContractError("state and control dimensions must be >= 1")
        S0 = as_matrix(self.Sigma0, "Sigma0", rows=d, cols=d)
        S0 = check_symmetric(S0, "Sigma0", DEFAULT_NUMERICS.symmetry_atol)
        mu = min_eig_sym(S0)
        if mu <= 0.0:
            raise ContractError(f"Sigma0 must be positive definite, min eigenvalue {mu:.3e}")
        object.__setattr__(self, "A", _freeze(A))
        object.__setattr__(self, "B", _freeze(B))
        object.__setattr__(self, "Sigma0", _freeze(S0))
        object.__setattr__(self, "_mu", mu)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    @property
    def mu(self) -> float:
        """sigma_min(Sigma0), strictly positive by construction."""
        return self._mu


@dataclass(frozen=True)
class CostParam:
    """Cost parameter pair (Q, R), both symmetric positive definite."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        R = as_matrix(self.R, "R")
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise ContractError("Q and R must be square")
        Q = check_symmetric(Q, "Q", DEFAULT_NUMERICS.symmetry_atol)
        R = check_symmetric(R, "R", DEFAULT_NUMERICS.symmetry_atol)
        if min_eig_sym(Q) <= 0.0:
            raise ContractError("Q must be positive definite")
        if min_eig_sym(R) <= 0.0:
            raise ContractError("R must be positive definite")
        object.__setattr__(self, "Q", _freeze(Q))
        object.__setattr__(self, "R", _freeze(R))

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    @property
    def k(self) -> int:
        return self.R.shape[0]

    def dist(self, other: "CostParam") -> float:
        return float(np.sqrt(frob(self.Q - other.Q) ** 2 + frob(self.R - other.R) ** 2))


@dataclass(frozen=True)
class Policy:
    """Linear feedback gain K, acting as u = -K x."""

    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _freeze(as_matrix(self.K, "K")))

    @property
    def k(self) -> int:
        return self.K.shape[0]

    @property
    def d(self) -> int:
        return self.K.shape[1]


@dataclass(frozen=True)
class ClosedLoopSolution:
    """Closed-loop matrix T = A - BK with its Lyapunov solutions.

    SigmaK solves Sigma = Sigma0 + T Sigma T', PK solves
    P = Q + K'RK + T'PT; rho is the spectral radius of T.
    """

    T: np.ndarray
    SigmaK: np.ndarray
    PK: np.ndarray
    rho: float


def spectral_radius(M) -> float:
    """Largest complex modulus among the eigenvalues of a square matrix."""
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ContractError("spectral_radius expects a square matrix")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(np.abs(ev)))


def closed_loop_matrix(inst: LqrInstance, pol: Policy) -> np.ndarray:
    if pol.K.shape != (inst.k, inst.d):
        raise ContractError(
            f"policy shape {pol.K.shape} does not match instance ({inst.k}, {inst.d})"
        )
    return inst.A - inst.B @ pol.K


def is_stabilizing(inst: LqrInstance, pol: Policy, margin: float | None = None,
                   numerics: NumericsConfig = DEFAULT_NUMERICS) -> bool:
    """True iff rho(A - BK) < 1 - margin (strict, margin defaults to 0)."""
    if margin is None:
        margin = numerics.stability_margin
    return spectral_radius(closed_loop_matrix(inst, pol)) < 1.0 - margin


def solve_discrete_lyapunov(T, W, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Solve X = W + T X T' for symmetric W.

    Vectorized Kronecker solve up to ``numerics.kron_max_dim``; Smith's
    squaring iteration (T <- T^2 with accumulation) above. Both paths are held
    to the same relative residual bound.
    """
    T = as_matrix(T, "T")
    d = T.shape[0]
    W = check_symmetric(as_matrix(W, "W", rows=d, cols=d), "W", 1e-9)
    if d <= numerics.kron_max_dim:
        lhs = np.eye(d * d) - np.kron(T, T)
        try:
            x = np.linalg.solve(lhs, W.reshape(-1))
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError(f"Lyapunov Kronecker solve failed: {exc}") from exc
        X = symmetrize(x.reshape(d, d))
    else:
        X = W.copy()
        G = T.copy()
        for _ in range(numerics.doubling_max_iter):
            X = X + G @ X @ G.T
            G = G @ G
            gnorm = frob(G)
            if not np.isfinite(gnorm) or frob(X) > numerics.doubling_divergence:
                raise NumericalFailureError("Lyapunov doubling iteration diverged")
            if gnorm ** 2 * frob(X) <= 0.25 * numerics.lyapunov_rtol * max(1.0, frob(X)):
                break
        else:
            raise NumericalFailureError("Lyapunov doubling iteration did not converge")
        X = symmetrize(X)
    res = frob(X - W - T @ X @ T.T)
    if res > numerics.lyapunov_rtol * max(1.0, frob(X)):
        raise NumericalFailureError(
            f"Lyapunov residual {res:.3e} exceeds bound for solution norm {frob(X):.3e}"
        )
    return X


def solve_closed_loop(inst: LqrInstance, theta: CostParam, pol: Policy,
                      numerics: NumericsConfig = DEFAULT_NUMERICS) -> ClosedLoopSolution:
    """Closed-loop second-moment and cost-to-go matrices for a stabilizing policy."""
    if theta.Q.shape[0] != inst.d or theta.R.shape[0] != inst.k:
        raise ContractError("cost parameter dimensions do not match instance")
    T = closed_loop_matrix(inst, pol)
    rho = spectral_radius(T)
    if rho >= 1.0 - numerics.stability_margin:
        raise InstabilityError(f"policy is not stabilizing: rho(A-BK) = {rho:.6f}", rho=rho)
    K = pol.K
    SigmaK = solve_discrete_lyapunov(T, inst.Sigma0, numerics)
    PK = solve_discrete_lyapunov(T.T, theta.Q + K.T @ theta.R @ K, numerics)
    return ClosedLoopSolution(T=T, SigmaK=SigmaK, PK=PK, rho=rho)


def cost(inst: LqrInstance, theta: CostParam, pol: Policy,
         sol: ClosedLoopSolution | None = None,
         numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """Expected cumulative cost Tr(Sigma_K Q) + Tr(K Sigma_K K' R).

    Cross-checked against the cost-to-go form <Sigma0, P_K>; a relative
    mismatch beyond ``numerics.cost_cross_rtol`` raises, because the two
    formulas are exact identities for any stabilizing policy.
    """
    if sol is None:
        sol = solve_closed_loop(inst, theta, pol, numerics)
    K = pol.K
    c_trace = float(np.trace(sol.SigmaK @ theta.Q) + np.trace(K @ sol.SigmaK @ K.T @ theta.R))
    c_value = float(np.sum(inst.Sigma0 * sol.PK))
    if abs(c_trace - c_value) > numerics.cost_cross_rtol * max(1.0, abs(c_trace), abs(c_value)):
        raise NumericalFailureError(
            f"cost formulas disagree: trace form {c_trace!r} vs <Sigma0,P_K> {c_value!r}"
        )
    return c_trace


def gain_residual(inst: LqrInstance, theta: CostParam, pol: Policy,
                  sol: ClosedLoopSolution | None = None,
                  numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """E_K = (R + B'P_K B) K - B'P_K A; zero exactly at the optimal gain."""
    if sol is None:
        sol = solve_closed_loop(inst, theta, pol, numerics)
    B, K = inst.B, pol.K
    return (theta.R + B.T @ sol.PK @ B) @ K - B.T @ sol.PK @ inst.A


def policy_gradient(inst: LqrInstance, theta: CostParam, pol: Policy,
                    sol: ClosedLoopSolution | None = None,
                    numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """Analytic gradient of the cost in the gain: 2 E_K Sigma_K."""
    if sol is None:
        sol = solve_closed_loop(inst, theta, pol, numerics)
    return 2.0 * gain_residual(inst, theta, pol, sol) @ sol.SigmaK


def visitation_moments(inst: LqrInstance, pol: Policy,
                       sol: ClosedLoopSolution | None = None,
                       numerics: NumericsConfig = DEFAULT_NUMERICS):
    """State and control second-moment sums (Sigma_K, K Sigma_K K')."""
    if sol is None:
        T = closed_loop_matrix(inst, pol)
        rho = spectral_radius(T)
        if rho >= 1.0 - numerics.stability_margin:
            raise InstabilityError(f"policy is not stabilizing: rho = {rho:.6f}", rho=rho)
        SigmaK = solve_discrete_lyapunov(T, inst.Sigma0, numerics)
    else:
        SigmaK = sol.SigmaK
    K = pol.K
    return SigmaK, symmetrize(K @ SigmaK @ K.T)
