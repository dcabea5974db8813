"""Model-free estimation: zeroth-order cost gradients and truncated-rollout
state covariances.

Both estimators are deterministic given their seed; perturbation and rollout
evaluations are vectorized over samples in fixed index order, so results do
not depend on chunking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, EstimatorRejectionError, InstabilityError
from .lqr_core import CostParam, LqrInstance, Policy, closed_loop_matrix, spectral_radius
from .numerics import DEFAULT_NUMERICS, NumericsConfig, batched_rho, symmetrize


@dataclass(frozen=True)
class EstimatorConfig:
    sigma_pert: float
    n_samples: int
    horizon: int = 50
    n_rollouts: int = 100
    seed: int = 0
    antithetic: bool = True
    baseline: bool = False
    rejection_limit: float = 0.5

    def __post_init__(self):
        if self.sigma_pert <= 0.0:
            raise ContractError("sigma_pert must be positive")
        if self.horizon < 1:
            raise ContractError("horizon must be >= 1")
        if self.n_samples < 1 or self.n_rollouts < 1:
            raise ContractError("sample counts must be >= 1")


@dataclass(frozen=True)
class EsGradientResult:
    gradient: np.ndarray
    n_samples: int
    n_used: int
    n_rejected: int

    @property
    def rejection_rate(self) -> float:
        return self.n_rejected / max(1, self.n_samples)


def _batched_costs(inst: LqrInstance, theta: CostParam, Ks: np.ndarray):
    """Exact LQR costs for a stack of gains; NaN where not stabilizing."""
    d = inst.d
    n = Ks.shape[0]
    costs = np.full(n, np.nan)
    Ts = inst.A[None, :, :] - np.einsum("ij,njk->nik", inst.B, Ks)
    stable = batched_rho(Ts) < 1.0
    if not np.any(stable):
        return costs, stable
    Tsub = Ts[stable]
    m = Tsub.shape[0]
    lhs = np.eye(d * d)[None, :, :] - np.einsum(
        "nab,ncd->nacbd", Tsub, Tsub).reshape(m, d * d, d * d)
    rhs = np.repeat(inst.Sigma0.reshape(1, d * d, 1), m, axis=0)
    sig = np.linalg.solve(lhs, rhs).reshape(m, d, d)
    sig = 0.5 * (sig + np.transpose(sig, (0, 2, 1)))
    Ksub = Ks[stable]
    c_state = np.einsum("nij,ji->n", sig, theta.Q)
    KS = np.einsum("nkd,nde->nke", Ksub, sig)
    c_ctrl = np.einsum("nke,nle,kl->n", KS, Ksub, theta.R)
    costs[stable] = c_state + c_ctrl
    return costs, stable


def es_gradient(inst: LqrInstance, theta: CostParam, pol: Policy,
                cfg: EstimatorConfig,
                numerics: NumericsConfig = DEFAULT_NUMERICS) -> EsGradientResult:
    """Zeroth-order gradient estimate E[C(K + eps) eps] / sigma^2.

    Perturbations have i.i.d. normal entries with standard deviation
    sigma_pert. Antithetic pairing (default) evaluates C at K +/- eps and
    averages the symmetric difference quotient; perturbations that leave the
    stabilizing set are rejected (counted, and the whole pair is dropped).
    A rejection rate above ``rejection_limit`` raises, since the estimate's
    target is ill-defined that close to the stability boundary.
    """
    if not spectral_radius(closed_loop_matrix(inst, pol)) < 1.0:
        raise InstabilityError("base policy must be stabilizing")
    rng = np.random.default_rng(cfg.seed)
    k, d = inst.k, inst.d
    sig2 = cfg.sigma_pert ** 2
    if cfg.antithetic:
        n_pairs = cfg.n_samples // 2
        if n_pairs < 1:
            raise ContractError("antithetic estimation needs n_samples >= 2")
        eps = rng.standard_normal((n_pairs, k, d)) * cfg.sigma_pert
        c_plus, ok_plus = _batched_costs(inst, theta, pol.K[None] + eps)
        c_minus, ok_minus = _batched_costs(inst, theta, pol.K[None] - eps)
        ok = ok_plus & ok_minus
        n_rejected = int(np.sum(~ok_plus) + np.sum(~ok_minus))
        n_total = 2 * n_pairs
        if n_rejected > cfg.rejection_limit * n_total:
            raise EstimatorRejectionError(
                f"{n_rejected}/{n_total} perturbations destabilized the loop",
                rejection_rate=n_rejected / n_total)
        if not np.any(ok):
            raise EstimatorRejectionError("no usable perturbation pairs",
                                          rejection_rate=1.0)
        w = (c_plus[ok] - c_minus[ok]) / (2.0 * sig2)
        grad = np.einsum("n,nkd->kd", w, eps[ok]) / np.sum(ok)
        return EsGradientResult(gradient=grad, n_samples=n_total,
                                n_used=2 * int(np.sum(ok)), n_rejected=n_rejected)
    eps = rng.standard_normal((cfg.n_samples, k, d)) * cfg.sigma_pert
    costs, ok = _batched_costs(inst, theta, pol.K[None] + eps)
    n_rejected = int(np.sum(~ok))
    if n_rejected > cfg.rejection_limit * cfg.n_samples:
        raise EstimatorRejectionError(
            f"{n_rejected}/{cfg.n_samples} perturbations destabilized the loop",
            rejection_rate=n_rejected / cfg.n_samples)
    vals = costs[ok]
    if cfg.baseline:
        from .lqr_core import cost as exact_cost

        vals = vals - exact_cost(inst, theta, pol, numerics=numerics)
    grad = np.einsum("n,nkd->kd", vals / sig2, eps[ok]) / np.sum(ok)
    return EsGradientResult(gradient=grad, n_samples=cfg.n_samples,
                            n_used=int(np.sum(ok)), n_rejected=n_rejected)


@dataclass(frozen=True)
class RolloutSigmaResult:
    sigma: np.ndarray
    bias_bound: float
    rho: float
    horizon: int
    n_rollouts: int


def rollout_sigma(inst: LqrInstance, pol: Policy, cfg: EstimatorConfig,
                  x0: np.ndarray | None = None,
                  numerics: NumericsConfig = DEFAULT_NUMERICS) -> RolloutSigmaResult:
    """Horizon-truncated estimate of the state second-moment sum.

    With ``x0`` given the recursion is deterministic (a single trajectory
    from that state, equal to the partial Lyapunov sum for Sigma0 = x0 x0');
    otherwise initial states are drawn zero-mean normal with covariance
    Sigma0 and the truncated sums are averaged over ``n_rollouts``.
    The reported bias bound is rho^(2H) / (1 - rho^2) * ||Sigma0||.
    """
    T = closed_loop_matrix(inst, pol)
    rho = spectral_radius(T)
    if rho >= 1.0:
        raise InstabilityError(f"policy is not stabilizing: rho = {rho:.6f}", rho=rho)
    d = inst.d
    if x0 is not None:
        x = np.asarray(x0, dtype=np.float64).reshape(d)
        acc = np.zeros((d, d))
        for _ in range(cfg.horizon):
            acc += np.outer(x, x)
            x = T @ x
        sig0_norm = float(np.linalg.norm(np.outer(
            np.asarray(x0, dtype=np.float64), x0), 2))
        bias = rho ** (2 * cfg.horizon) / (1.0 - rho ** 2) * sig0_norm
        return RolloutSigmaResult(sigma=symmetrize(acc), bias_bound=bias, rho=rho,
                                  horizon=cfg.horizon, n_rollouts=1)
    rng = np.random.default_rng(cfg.seed)
    chol = np.linalg.cholesky(inst.Sigma0)
    X = rng.standard_normal((cfg.n_rollouts, d)) @ chol.T
    acc = np.zeros((d, d))
    for _ in range(cfg.horizon):
        acc += X.T @ X
        X = X @ T.T
    sigma = symmetrize(acc / cfg.n_rollouts)
    bias = rho ** (2 * cfg.horizon) / (1.0 - rho ** 2) * float(
        np.linalg.norm(inst.Sigma0, 2))
    return RolloutSigmaResult(sigma=sigma, bias_bound=bias, rho=rho,
                              horizon=cfg.horizon, n_rollouts=cfg.n_rollouts)


def partial_lyapunov_sum(inst: LqrInstance, pol: Policy, horizon: int,
                         sigma0: np.ndarray | None = None) -> np.ndarray:
    """Sum_{t < horizon} T^t Sigma0 (T')^t, the truncated-rollout target."""
    T = closed_loop_matrix(inst, pol)
    S = np.array(inst.Sigma0 if sigma0 is None else sigma0, dtype=np.float64)
    acc = np.zeros_like(S)
    term = S.copy()
    for _ in range(horizon):
        acc += term
        term = T @ term @ T.T
    return symmetrize(acc)
