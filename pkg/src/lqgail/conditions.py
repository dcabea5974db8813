"""Closed-form analysis constants, stepsize admissibility checks, and
sampling estimators for the smoothness moduli that exist only abstractly.

The constants bound the solver's cost along its path (initial-cost bound M,
expert-moment bound F, curvature bound kappa1, loop-norm bound kappa2) and
feed four admissibility checks: Condition 1 caps the gain stepsize and the
lam/eta ratio (stability), Condition 2 couples the box geometry to the
regularizer modulus (compatibility of the two ratio windows), Condition 3
caps both stepsizes and the eta/lam ratio (potential decay), Condition 5
caps both stepsizes near the saddle (local contraction).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, InsufficientCoverageError, UnsupportedError
from .lqr_core import (
    CostParam,
    LqrInstance,
    Policy,
    solve_discrete_lyapunov,
    spectral_radius,
    visitation_moments,
)
from .numerics import DEFAULT_NUMERICS, NumericsConfig, frob, symmetrize
from .riccati import solve_dare
from .solver import RegularizerLike, ThetaBox


@dataclass(frozen=True)
class ConditionConstants:
    """Constants entering the stepsize conditions.

    alpha, mu, sigma_theta, M, F, kappa1, kappa2 are exact closed forms; the
    tau/nu moduli are sampling estimates (lower-bound style, safety-inflated)
    filled in by :func:`estimate_lipschitz` / :func:`estimate_local_moduli`.
    gamma and nu are the regularizer's strong-convexity and smoothness moduli.
    """

    alpha_q: float
    beta_q: float
    alpha_r: float
    beta_r: float
    alpha: float
    mu: float
    sigma_theta: float
    M: float
    F: float
    kappa1: float
    kappa2: float
    gamma: float
    nu: float
    b_norm: float
    d: int
    k: int
    tau_v: float | None = None
    nu_v: float | None = None
    tau_sigma: float | None = None
    nu_sigma: float | None = None
    tau_kstar: float | None = None
    nu_kstar: float | None = None
    nu_mstar: float | None = None
    tau_v_local: float | None = None

    @property
    def cost_cap(self) -> float:
        """alpha*F + 2M, the uniform cost bound along admissible paths."""
        return self.alpha * self.F + 2.0 * self.M

    def with_lipschitz(self, est: "LipschitzEstimates") -> "ConditionConstants":
        return replace(self, tau_v=est.tau_v, nu_v=est.nu_v,
                       tau_sigma=est.tau_sigma, nu_sigma=est.nu_sigma)

    def with_local(self, est: "LocalModuli") -> "ConditionConstants":
        return replace(self, tau_kstar=est.tau_kstar, nu_kstar=est.nu_kstar,
                       nu_mstar=est.nu_mstar, tau_v_local=est.tau_v_local)


@dataclass(frozen=True)
class ConditionReport:
    name: str
    passed: bool
    binding: str
    details: dict

    def __bool__(self) -> bool:
        return self.passed


def compute_constants(inst: LqrInstance, K0: Policy, box: ThetaBox,
                      reg: RegularizerLike, K_E: Policy,
                      numerics: NumericsConfig = DEFAULT_NUMERICS) -> ConditionConstants:
    """Exact values of the closed-form constants for a given start and expert."""
    sig0, u0 = visitation_moments(inst, K0, None, numerics)
    sig_e, u_e = visitation_moments(inst, K_E, None, numerics)
    M = box.beta_q * float(np.trace(sig0)) + box.beta_r * float(np.trace(u0))
    sup_q, sup_r = reg.sup_grad_norms(box)
    F = max(frob(sig_e) + sup_q, frob(u_e) + sup_r)
    mu = inst.mu
    alpha = box.alpha
    cap = alpha * F + 2.0 * M
    b_norm = float(np.linalg.norm(inst.B, 2))
    kappa1 = box.beta_r + cap * b_norm ** 2 / mu
    kappa2 = 1.0 + np.sqrt(cap / (mu * box.alpha_q))
    return ConditionConstants(
        alpha_q=box.alpha_q, beta_q=box.beta_q, alpha_r=box.alpha_r,
        beta_r=box.beta_r, alpha=alpha, mu=mu,
        sigma_theta=box.sigma_theta(inst.d, inst.k),
        M=M, F=F, kappa1=kappa1, kappa2=kappa2,
        gamma=reg.strong_convexity, nu=reg.smoothness,
        b_norm=b_norm, d=inst.d, k=inst.k)


def condition1_bounds(c: ConditionConstants):
    """The three eta caps and the lam/eta ratio cap of the stability condition."""
    cap = c.cost_cap
    b1 = (c.alpha_q ** 3 * c.mu ** 2.5 * cap ** -3.5
          / (16.0 * np.sqrt(c.kappa1) * c.kappa2 * c.b_norm)) if c.b_norm > 0 else np.inf
    b2 = c.alpha_q / (32.0 * c.kappa1 * cap)
    b3 = 2.0 * c.M / (c.alpha_q * c.alpha_r * c.mu ** 2)
    ratio = c.alpha_q * c.alpha_r * c.alpha ** 2 * c.mu ** 2 / (2.0 * c.M * cap)
    return b1, b2, b3, ratio


def check_condition1(c: ConditionConstants, eta: float, lam: float) -> ConditionReport:
    b1, b2, b3, ratio = condition1_bounds(c)
    bounds = {"eta_gradient_scale": b1, "eta_curvature": b2, "eta_absolute": b3}
    eta_cap = min(bounds.values())
    binding = min(bounds, key=bounds.get)
    eta_ok = eta <= eta_cap
    ratio_ok = lam <= eta * ratio
    failures = []
    if not eta_ok:
        failures.append(binding)
    if not ratio_ok:
        failures.append("lam_over_eta_ratio")
    return ConditionReport(
        name="condition1", passed=bool(eta_ok and ratio_ok),
        binding=failures[0] if failures else binding,
        details={**bounds, "eta_cap": eta_cap, "ratio_cap": ratio,
                 "eta": eta, "lam": lam, "failed": failures})


def check_condition2(c: ConditionConstants) -> ConditionReport:
    if c.nu_v is None:
        raise UnsupportedError("Condition 2 needs nu_v; run estimate_lipschitz first")
    lhs = c.alpha_q * c.alpha_r * c.alpha ** 2 * c.gamma
    rhs = 14.0 * c.sigma_theta * c.nu_v * c.M * c.cost_cap
    return ConditionReport(name="condition2", passed=bool(lhs >= rhs), binding="box_vs_modulus",
                           details={"lhs": lhs, "rhs": rhs})


def check_condition3(c: ConditionConstants, eta: float, lam: float) -> ConditionReport:
    if c.tau_v is None or c.nu_v is None:
        raise UnsupportedError("Condition 3 needs tau_v and nu_v; run estimate_lipschitz first")
    eta_bounds = {"eta_visit_lipschitz": 1.0 / (100.0 * c.tau_v),
                  "eta_visit_smoothness": 1.0 / (2.0 * c.sigma_theta * c.nu_v)}
    lam_bounds = {"lam_visit": 1.0 / (100.0 * (c.tau_v + c.nu)),
                  "lam_smooth": 3.0 * c.nu_v * c.sigma_theta / (100.0 * c.tau_v ** 2),
                  "lam_reg": c.gamma / (100.0 * c.nu ** 2)}
    ratio_cap = c.gamma / (7.0 * c.nu_v * c.sigma_theta)
    eta_ok = eta <= min(eta_bounds.values())
    lam_ok = lam <= min(lam_bounds.values())
    ratio_ok = eta / lam < ratio_cap
    failures = []
    if not eta_ok:
        failures.append(min(eta_bounds, key=eta_bounds.get))
    if not lam_ok:
        failures.append(min(lam_bounds, key=lam_bounds.get))
    if not ratio_ok:
        failures.append("eta_over_lam_ratio")
    return ConditionReport(
        name="condition3", passed=not failures,
        binding=failures[0] if failures else "eta_over_lam_ratio",
        details={**eta_bounds, **lam_bounds, "ratio_cap": ratio_cap,
                 "eta": eta, "lam": lam, "failed": failures})


def upsilon_formula(c: ConditionConstants, eta: float, lam: float) -> float:
    """Local contraction factor: max of the theta branch and the gain branch."""
    if c.tau_kstar in (None, 0.0) or c.nu_mstar in (None, 0.0):
        raise UnsupportedError("upsilon needs tau_kstar and nu_mstar; run estimate_local_moduli")
    tau_v = c.tau_v_local if c.tau_v_local is not None else c.tau_v
    if tau_v is None:
        raise UnsupportedError("upsilon needs a visitation Lipschitz estimate")
    a = c.gamma / (3.0 * c.tau_kstar * c.nu_mstar)
    branch_theta = 1.0 - lam * c.gamma + a * lam * c.nu_mstar * c.tau_kstar
    branch_gain = (1.0 - eta * c.alpha_r * c.mu) * (1.0 + lam * tau_v / a
                                                    + lam * tau_v * c.tau_kstar)
    return max(branch_theta, branch_gain)


def check_condition5(c: ConditionConstants, eta: float, lam: float) -> ConditionReport:
    if c.nu_kstar is None or c.nu_mstar is None:
        raise UnsupportedError("Condition 5 needs nu_kstar and nu_mstar; "
                               "run estimate_local_moduli first")
    eta_cap = 2.0 / (c.alpha_r * c.mu + c.nu_kstar)
    lam_cap = 2.0 / (c.gamma + c.nu_mstar)
    eta_ok = eta <= eta_cap
    lam_ok = lam <= lam_cap
    ups = upsilon_formula(c, eta, lam)
    failures = []
    if not eta_ok:
        failures.append("eta_local")
    if not lam_ok:
        failures.append("lam_local")
    return ConditionReport(
        name="condition5", passed=bool(eta_ok and lam_ok),
        binding=failures[0] if failures else "eta_local",
        details={"eta_cap": eta_cap, "lam_cap": lam_cap, "upsilon": ups,
                 "eta": eta, "lam": lam, "failed": failures})


@dataclass(frozen=True)
class LipschitzEstimates:
    """Sampled Lipschitz/smoothness moduli over {K : ||Sigma_K|| <= S}.

    Max observed difference ratios inflated by a factor of 2; these are
    lower-bound-style estimates of the true suprema, not certificates.
    """

    tau_sigma: float
    nu_sigma: float
    tau_v: float
    nu_v: float
    n_accepted: int
    region_bound: float
    safety: float = 2.0


def _moment_jacobians(inst, K, sigma, numerics):
    """d(Sigma)/dK and d(K Sigma K')/dK as (k, d, ...) stacked tensors."""
    d, k = inst.d, inst.k
    T = inst.A - inst.B @ K
    j_sig = np.empty((k, d, d, d))
    j_u = np.empty((k, d, k, k))
    for p in range(k):
        for q in range(d):
            dT = np.zeros((d, d))
            dT -= np.outer(inst.B[:, p], np.eye(d)[q])
            rhs = dT @ sigma @ T.T
            rhs = rhs + rhs.T
            d_sig = solve_discrete_lyapunov(T, rhs, numerics)
            e_pq = np.zeros((k, d))
            e_pq[p, q] = 1.0
            d_u = e_pq @ sigma @ K.T + K @ d_sig @ K.T + K @ sigma @ e_pq.T
            j_sig[p, q] = d_sig
            j_u[p, q] = symmetrize(d_u)
    return j_sig, j_u


def estimate_lipschitz(inst: LqrInstance, box: ThetaBox, region_bound: float,
                       samples: int = 64, seed: int = 0,
                       numerics: NumericsConfig = DEFAULT_NUMERICS,
                       safety: float = 2.0) -> LipschitzEstimates:
    """Sample gain pairs in {||Sigma_K||_2 <= S} and record worst ratios.

    tau's come from value differences, nu's from entrywise gradient
    differences (scaled by the block dimension, matching the entrywise
    smoothness convention). Fewer than 10 admissible samples is an error.
    """
    if region_bound <= 0.0:
        raise ContractError("region_bound must be positive")
    rng = np.random.default_rng(seed)
    d, k = inst.d, inst.k
    anchor = solve_dare(inst, box.mid_param(d, k), numerics).Kstar
    accepted = []
    attempts = 0
    max_attempts = 60 * samples
    while len(accepted) < samples and attempts < max_attempts:
        attempts += 1
        scale = 10.0 ** rng.uniform(-3, 0.5)
        K = anchor + scale * rng.standard_normal((k, d))
        T = inst.A - inst.B @ K
        if spectral_radius(T) >= 1.0 - 1e-9:
            continue
        sigma = solve_discrete_lyapunov(T, inst.Sigma0, numerics)
        if np.linalg.norm(sigma, 2) > region_bound:
            continue
        accepted.append((K, sigma))
    if len(accepted) < 10:
        raise InsufficientCoverageError(
            f"only {len(accepted)} gains accepted in the region after {attempts} draws")

    values = []
    for K, sigma in accepted:
        u = symmetrize(K @ sigma @ K.T)
        j_sig, j_u = _moment_jacobians(inst, K, sigma, numerics)
        values.append((K, sigma, u, j_sig, j_u))

    tau_sigma = nu_sigma = tau_v = nu_v = 0.0
    n = len(values)
    for i in range(n):
        K1, s1, u1, js1, ju1 = values[i]
        for j in range(i + 1, n):
            K2, s2, u2, js2, ju2 = values[j]
            dk = frob(K1 - K2)
            if dk < 1e-12:
                continue
            ds = frob(s1 - s2)
            du = frob(u1 - u2)
            tau_sigma = max(tau_sigma, ds / dk)
            tau_v = max(tau_v, np.sqrt(ds ** 2 + du ** 2) / dk)
            # per-entry gradient gaps: Frobenius over the (p, q) axes
            ent_s = np.sqrt(np.sum((js1 - js2) ** 2, axis=(0, 1)))
            ent_u = np.sqrt(np.sum((ju1 - ju2) ** 2, axis=(0, 1)))
            nu_sigma = max(nu_sigma, d * float(np.max(ent_s)) / dk)
            nu_v = max(nu_v, (d + k) * float(max(np.max(ent_s), np.max(ent_u))) / dk)
    return LipschitzEstimates(tau_sigma=safety * tau_sigma, nu_sigma=safety * nu_sigma,
                              tau_v=safety * tau_v, nu_v=safety * nu_v,
                              n_accepted=n, region_bound=region_bound, safety=safety)


def default_region_bound(c: ConditionConstants) -> float:
    """Default S: the path-wise bound (alpha F + 2M)/alpha_q."""
    return c.cost_cap / c.alpha_q


@dataclass(frozen=True)
class LocalModuli:
    """Moduli sampled in a theta-ball around the saddle."""

    tau_kstar: float
    nu_kstar: float
    nu_mstar: float
    tau_v_local: float
    radius: float
    n_samples: int
    safety: float = 2.0


def _sym_basis(n):
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = np.sqrt(0.5)
            basis.append(E)
    return basis


def estimate_local_moduli(inst: LqrInstance, box: ThetaBox, reg: RegularizerLike,
                          theta_star: CostParam, K_E: Policy,
                          radius: float = 1e-3, samples: int = 10, seed: int = 0,
                          numerics: NumericsConfig = DEFAULT_NUMERICS,
                          safety: float = 2.0) -> LocalModuli:
    """Estimate the saddle-local moduli by sampling theta near theta_star.

    tau_kstar / nu_kstar are the Lipschitz constants of the optimal-gain map
    and of its Jacobian; nu_mstar is the Lipschitz constant of the gradient of
    the optimal-value envelope; tau_v_local is the visitation Lipschitz
    constant along the sampled optimal gains.
    """
    rng = np.random.default_rng(seed)
    d, k = inst.d, inst.k
    sig_e, u_e = visitation_moments(inst, K_E, None, numerics)
    basis_q = _sym_basis(d)
    basis_r = _sym_basis(k)
    h = max(1e-8, 0.02 * radius)

    from .solver import project_theta

    def clip_theta(Q, R):
        return project_theta((Q, R), box, numerics)

    def optimal_gain(theta, warm):
        sol = solve_dare(inst, theta, numerics, p0=warm)
        return sol.Kstar, sol.Pstar

    def envelope_grad(theta, kstar):
        sig, u = visitation_moments(inst, Policy(kstar), None, numerics)
        gq, gr = reg.grad(theta.Q, theta.R)
        return np.concatenate([(sig - sig_e - gq).ravel(), (u - u_e - gr).ravel()])

    def gain_jacobian(theta, warm):
        cols = []
        for which, basis in (("q", basis_q), ("r", basis_r)):
            for E in basis:
                if which == "q":
                    tp = CostParam(theta.Q + h * E, theta.R)
                    tm = CostParam(theta.Q - h * E, theta.R)
                else:
                    tp = CostParam(theta.Q, theta.R + h * E)
                    tm = CostParam(theta.Q, theta.R - h * E)
                kp, _ = optimal_gain(tp, warm)
                km, _ = optimal_gain(tm, warm)
                cols.append(((kp - km) / (2.0 * h)).ravel())
        return np.stack(cols, axis=1)

    points = []
    warm = None
    for s in range(samples):
        if s == 0:
            theta = theta_star
        else:
            dq = symmetrize(rng.standard_normal((d, d)))
            dr = symmetrize(rng.standard_normal((k, k)))
            scale = radius * rng.uniform(0.2, 1.0) / max(1e-12, np.sqrt(
                frob(dq) ** 2 + frob(dr) ** 2))
            theta = clip_theta(theta_star.Q + scale * dq, theta_star.R + scale * dr)
        kstar, warm = optimal_gain(theta, warm)
        sig, u = visitation_moments(inst, Policy(kstar), None, numerics)
        points.append({
            "theta": theta,
            "kstar": kstar,
            "v": np.concatenate([sig.ravel(), u.ravel()]),
            "g": envelope_grad(theta, kstar),
            "jac": gain_jacobian(theta, warm),
        })

    tau_k = nu_k = nu_m = tau_v = 0.0
    n = len(points)
    for i in range(n):
        for j in range(i + 1, n):
            dth = points[i]["theta"].dist(points[j]["theta"])
            if dth < 1e-12:
                continue
            dk = frob(points[i]["kstar"] - points[j]["kstar"])
            tau_k = max(tau_k, dk / dth)
            nu_k = max(nu_k, frob(points[i]["jac"] - points[j]["jac"]) / dth)
            nu_m = max(nu_m, float(np.linalg.norm(points[i]["g"] - points[j]["g"])) / dth)
            if dk > 1e-12:
                tau_v = max(tau_v, float(np.linalg.norm(points[i]["v"] - points[j]["v"])) / dk)
    return LocalModuli(tau_kstar=safety * tau_k, nu_kstar=safety * nu_k,
                       nu_mstar=safety * nu_m, tau_v_local=safety * tau_v,
                       radius=radius, n_samples=n, safety=safety)


def auto_stepsizes(inst: LqrInstance, K0: Policy, box: ThetaBox,
                   reg: RegularizerLike, K_E: Policy,
                   consts: ConditionConstants | None = None,
                   numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Largest Condition-1 stepsizes: eta from the closed-form caps (halved
    downward if a probe step ever destabilizes, which the theory rules out),
    lam at half the ratio cap."""
    from .solver import SolverConfig, step

    if consts is None:
        consts = compute_constants(inst, K0, box, reg, K_E, numerics)
    b1, b2, b3, ratio = condition1_bounds(consts)
    eta = min(b1, b2, b3)
    theta0 = reg.center() if hasattr(reg, "center") else box.mid_param(inst.d, inst.k)
    for _ in range(60):
        lam = 0.5 * eta * ratio
        try:
            cfg = SolverConfig(eta=eta, lam=lam, eps=1e-30, max_iter=1, numerics=numerics)
            step(inst, K_E, (K0, theta0), cfg, box, reg)
            break
        except Exception:
            eta *= 0.5
    return eta, 0.5 * eta * ratio, consts
