"""Alternating minimax solver for adversarial imitation of an LQR expert.

One iteration is a gradient step on the gain K against the current cost
parameter, followed by a projected gradient ascent step on the cost parameter
theta = (Q, R) evaluated at the *updated* gain. The stopping rule is the
squared Frobenius norm of the proximal gradient falling below a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import ContractError, InstabilityError
from .lqr_core import (
    ClosedLoopSolution,
    CostParam,
    LqrInstance,
    Policy,
    closed_loop_matrix,
    cost,
    policy_gradient,
    solve_closed_loop,
    solve_discrete_lyapunov,
    spectral_radius,
    visitation_moments,
)
from .numerics import (
    DEFAULT_NUMERICS,
    NumericsConfig,
    check_symmetric,
    eig_clip,
    frob,
    symmetrize,
)


@dataclass(frozen=True)
class ThetaBox:
    """Spectral box alpha_q I <= Q <= beta_q I, alpha_r I <= R <= beta_r I."""

    alpha_q: float
    beta_q: float
    alpha_r: float
    beta_r: float

    def __post_init__(self):
        if not (0.0 < self.alpha_q <= self.beta_q):
            raise ContractError("need 0 < alpha_q <= beta_q")
        if not (0.0 < self.alpha_r <= self.beta_r):
            raise ContractError("need 0 < alpha_r <= beta_r")

    @property
    def alpha(self) -> float:
        return min(self.alpha_q, self.alpha_r)

    def sigma_theta(self, d: int, k: int) -> float:
        """sup over the box of (||Q||_F^2 + ||R||_F^2)^(1/2), attained at beta I."""
        return float(np.sqrt(d * self.beta_q ** 2 + k * self.beta_r ** 2))

    def contains_matrix(self, M, block: str, tol: float = 1e-9) -> bool:
        lo, hi = (self.alpha_q, self.beta_q) if block == "q" else (self.alpha_r, self.beta_r)
        w = np.linalg.eigvalsh(symmetrize(np.asarray(M, dtype=np.float64)))
        return bool(w[0] >= lo - tol and w[-1] <= hi + tol)

    def contains(self, theta: CostParam, tol: float = 1e-9) -> bool:
        return self.contains_matrix(theta.Q, "q", tol) and self.contains_matrix(theta.R, "r", tol)

    def mid_param(self, d: int, k: int) -> CostParam:
        return CostParam(0.5 * (self.alpha_q + self.beta_q) * np.eye(d),
                         0.5 * (self.alpha_r + self.beta_r) * np.eye(k))


class RegularizerLike(Protocol):
    """Contract for plug-in regularizers: value, gradient, both moduli, and a
    closed-form bound on sup over the box of the per-block gradient norms."""

    @property
    def strong_convexity(self) -> float: ...

    @property
    def smoothness(self) -> float: ...

    def value(self, Q, R) -> float: ...

    def grad(self, Q, R) -> tuple[np.ndarray, np.ndarray]: ...

    def sup_grad_norms(self, box: ThetaBox) -> tuple[float, float]: ...


@dataclass(frozen=True)
class QuadraticRegularizer:
    """gamma * (||Q - Qbar||_F^2 + ||R - Rbar||_F^2).

    Strong-convexity and smoothness moduli are both 2*gamma; the condition
    formulas consume the moduli, never the raw coefficient.
    """

    gamma: float
    Qbar: np.ndarray
    Rbar: np.ndarray

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ContractError("regularizer coefficient gamma must be positive")
        Qbar = check_symmetric(np.asarray(self.Qbar, dtype=np.float64), "Qbar", 1e-9)
        Rbar = check_symmetric(np.asarray(self.Rbar, dtype=np.float64), "Rbar", 1e-9)
        object.__setattr__(self, "Qbar", Qbar)
        object.__setattr__(self, "Rbar", Rbar)

    @property
    def strong_convexity(self) -> float:
        return 2.0 * self.gamma

    @property
    def smoothness(self) -> float:
        return 2.0 * self.gamma

    def value(self, Q, R) -> float:
        return self.gamma * (frob(Q - self.Qbar) ** 2 + frob(R - self.Rbar) ** 2)

    def grad(self, Q, R):
        return 2.0 * self.gamma * (Q - self.Qbar), 2.0 * self.gamma * (R - self.Rbar)

    def sup_grad_norms(self, box: ThetaBox):
        # sup_{alpha I <= M <= beta I} ||M - Mbar||_F is attained at an extreme
        # point diagonal in Mbar's eigenbasis, each eigenvalue at the far end.
        out = []
        for Mbar, lo, hi in ((self.Qbar, box.alpha_q, box.beta_q),
                             (self.Rbar, box.alpha_r, box.beta_r)):
            w = np.linalg.eigvalsh(Mbar)
            far = np.maximum(np.abs(w - lo), np.abs(hi - w))
            out.append(2.0 * self.gamma * float(np.sqrt(np.sum(far ** 2))))
        return out[0], out[1]

    def center(self) -> CostParam:
        return CostParam(self.Qbar, self.Rbar)


@dataclass(frozen=True)
class SolverConfig:
    """Stepsizes, stopping rule, and trace-recording knobs."""

    eta: float
    lam: float
    eps: float
    max_iter: int
    numerics: NumericsConfig = DEFAULT_NUMERICS
    snapshot_stride: int | None = None  # None: every iterate up to 4000 snapshots, then thinned
    tail_window: int = 512
    record_rho: bool = True
    fast: bool | None = None  # None: use the compiled path when available and the run is long

    def __post_init__(self):
        if self.eta <= 0.0 or self.lam <= 0.0 or self.eps <= 0.0:
            raise ContractError("eta, lam, and eps must all be positive")
        if self.max_iter < 1:
            raise ContractError("max_iter must be >= 1")

    @property
    def stride(self) -> int:
        if self.snapshot_stride is not None:
            return max(1, int(self.snapshot_stride))
        return max(1, (self.max_iter + 1) // 4000)


@dataclass
class IterateTrace:
    """Per-iteration scalars plus (possibly subsampled) iterate snapshots.

    Scalar arrays cover every visited iterate i = 0..n-1. ``dk_sq[i]`` and
    ``dtheta_sq[i]`` are the squared Frobenius steps from iterate i to i+1
    (NaN at the final iterate). Snapshots store full (K, Q, R) matrices at
    ``snap_idx``; the last ``tail_window`` iterates are always included.
    """

    eta: float
    lam: float
    eps: float
    cost: np.ndarray
    objective: np.ndarray
    prox_grad_sq: np.ndarray
    rho: np.ndarray
    sigma_norm: np.ndarray
    k_norm: np.ndarray
    k_dist_expert: np.ndarray
    theta_dist_center: np.ndarray
    dk_sq: np.ndarray
    dtheta_sq: np.ndarray
    snap_idx: np.ndarray
    K_snap: np.ndarray
    Q_snap: np.ndarray
    R_snap: np.ndarray
    potential: np.ndarray | None = None
    z_local: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.cost.shape[0])

    @property
    def prox_grad_norm(self) -> np.ndarray:
        return np.sqrt(self.prox_grad_sq)

    def gamma_index(self, eps: float) -> int | None:
        """Smallest iteration index with ||L||_F^2 <= eps, if reached."""
        hits = np.nonzero(self.prox_grad_sq <= eps)[0]
        return int(hits[0]) if hits.size else None

    def snapshot(self, i: int):
        """(K_i, Q_i, R_i) if iterate i was snapshotted."""
        pos = np.searchsorted(self.snap_idx, i)
        if pos >= self.snap_idx.size or self.snap_idx[pos] != i:
            raise KeyError(f"iterate {i} was not snapshotted")
        return self.K_snap[pos], self.Q_snap[pos], self.R_snap[pos]


@dataclass(frozen=True)
class SolveResult:
    K: np.ndarray
    theta: CostParam
    trace: IterateTrace
    converged: bool
    status: str  # "converged" | "max_iter"
    n_iter: int
    gamma_index: int | None


@dataclass(frozen=True)
class ProximalGradient:
    """Proximal gradient L(K, theta) split into its gain and cost blocks.

    The theta blocks are the unit-stepsize projected ascent residual
    Pi[theta + grad_theta m] - theta, which equals the raw theta-gradient at
    interior points and vanishes when the projection absorbs an outward
    gradient at the box boundary.
    """

    k_block: np.ndarray
    q_block: np.ndarray
    r_block: np.ndarray

    @property
    def norm_sq(self) -> float:
        return float(frob(self.k_block) ** 2 + frob(self.q_block) ** 2
                     + frob(self.r_block) ** 2)

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq))


def objective_m(inst: LqrInstance, theta: CostParam, pol: Policy, K_E: Policy,
                reg: RegularizerLike,
                numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """m(K, theta) = C(K; theta) - C(K_E; theta) - psi(theta)."""
    try:
        c_pol = cost(inst, theta, pol, numerics=numerics)
    except InstabilityError as exc:
        raise InstabilityError(f"policy K is not stabilizing (rho={exc.rho})",
                               rho=exc.rho) from exc
    try:
        c_exp = cost(inst, theta, K_E, numerics=numerics)
    except InstabilityError as exc:
        raise InstabilityError(f"expert policy K_E is not stabilizing (rho={exc.rho})",
                               rho=exc.rho) from exc
    return c_pol - c_exp - reg.value(theta.Q, theta.R)


def grad_theta_m(inst: LqrInstance, theta: CostParam, pol_next: Policy, K_E: Policy,
                 reg: RegularizerLike,
                 numerics: NumericsConfig = DEFAULT_NUMERICS,
                 sol_next: ClosedLoopSolution | None = None,
                 expert_moments=None):
    """Ascent gradient of m in theta, with the visitation terms at pol_next.

    Returns (Sigma_{K+} - Sigma_E - dpsi/dQ, K+ Sigma_{K+} K+' - K_E Sigma_E K_E'
    - dpsi/dR); the regularizer gradient is evaluated at the current theta,
    matching the update rule's index convention.
    """
    sig, usig = visitation_moments(inst, pol_next, sol_next, numerics)
    if expert_moments is None:
        expert_moments = visitation_moments(inst, K_E, None, numerics)
    sig_e, usig_e = expert_moments
    gq_psi, gr_psi = reg.grad(theta.Q, theta.R)
    return sig - sig_e - gq_psi, usig - usig_e - gr_psi


def project_theta(theta_raw, box: ThetaBox,
                  numerics: NumericsConfig = DEFAULT_NUMERICS) -> CostParam:
    """Frobenius projection of a symmetric pair onto the spectral box.

    Eigen-decompose each block and clip the eigenvalues; for the unitarily
    invariant box this is the nearest point. Inputs asymmetric beyond
    ``projection_asym_atol`` are rejected.
    """
    Q_raw, R_raw = theta_raw
    Q_raw = check_symmetric(np.asarray(Q_raw, dtype=np.float64), "Q_raw",
                            numerics.projection_asym_atol)
    R_raw = check_symmetric(np.asarray(R_raw, dtype=np.float64), "R_raw",
                            numerics.projection_asym_atol)
    return CostParam(eig_clip(Q_raw, box.alpha_q, box.beta_q),
                     eig_clip(R_raw, box.alpha_r, box.beta_r))


def proximal_gradient(inst: LqrInstance, K_E: Policy, state, box: ThetaBox,
                      reg: RegularizerLike,
                      numerics: NumericsConfig = DEFAULT_NUMERICS,
                      sol: ClosedLoopSolution | None = None,
                      expert_moments=None) -> ProximalGradient:
    """L(K, theta): the gain gradient and the unit-step projected theta residual."""
    pol, theta = state
    if sol is None:
        sol = solve_closed_loop(inst, theta, pol, numerics)
    gk = policy_gradient(inst, theta, pol, sol, numerics)
    gq, gr = grad_theta_m(inst, theta, pol, K_E, reg, numerics, sol_next=sol,
                          expert_moments=expert_moments)
    proj = project_theta((theta.Q + gq, theta.R + gr), box, numerics)
    return ProximalGradient(k_block=gk, q_block=proj.Q - theta.Q,
                            r_block=proj.R - theta.R)


def step(inst: LqrInstance, K_E: Policy, state, config: SolverConfig,
         box: ThetaBox, reg: RegularizerLike, expert_moments=None):
    """One alternating update: gain descent, then projected cost ascent.

    The theta gradient is evaluated at the updated gain (strict alternation).
    Raises InstabilityError if the updated gain leaves the stabilizing set;
    by the stability guarantee this should not fire under admissible
    stepsizes, so it is reported rather than handled.
    """
    numerics = config.numerics
    pol, theta = state
    sol = solve_closed_loop(inst, theta, pol, numerics)
    gk = policy_gradient(inst, theta, pol, sol, numerics)
    K1 = Policy(pol.K - config.eta * gk)
    T1 = closed_loop_matrix(inst, K1)
    rho1 = spectral_radius(T1)
    if rho1 >= 1.0 - numerics.stability_margin:
        raise InstabilityError(
            f"updated gain is not stabilizing: rho(A-BK) = {rho1:.6f}", rho=rho1)
    sig1 = solve_discrete_lyapunov(T1, inst.Sigma0, numerics)
    sol1 = ClosedLoopSolution(T=T1, SigmaK=sig1, PK=sol.PK, rho=rho1)
    gq, gr = grad_theta_m(inst, theta, K1, K_E, reg, numerics, sol_next=sol1,
                          expert_moments=expert_moments)
    theta1 = project_theta((theta.Q + config.lam * gq, theta.R + config.lam * gr),
                           box, numerics)
    return K1, theta1


class _TraceBuilder:
    """Accumulates per-iterate scalars and stride+tail snapshots."""

    def __init__(self, stride, tail_window):
        self.stride = max(1, int(stride))
        self.tail_window = max(1, int(tail_window))
        self.scalars = {name: [] for name in
                        ("cost", "objective", "prox_grad_sq", "rho", "sigma_norm",
                         "k_norm", "k_dist_expert", "theta_dist_center",
                         "dk_sq", "dtheta_sq")}
        self.stride_snaps = {}
        self.tail = []  # (i, K, Q, R), bounded ring

    def row(self, i, **values):
        for name, v in values.items():
            self.scalars[name].append(v)

    def snap(self, i, K, Q, R):
        item = (i, K.copy(), Q.copy(), R.copy())
        if i % self.stride == 0:
            self.stride_snaps[i] = item
        self.tail.append(item)
        if len(self.tail) > self.tail_window:
            old = self.tail.pop(0)
            # keep stride snapshots alive even when they fall out of the tail
            if old[0] % self.stride == 0:
                self.stride_snaps.setdefault(old[0], old)

    def build(self, eta, lam, eps) -> IterateTrace:
        merged = dict(self.stride_snaps)
        for item in self.tail:
            merged[item[0]] = item
        idx = np.array(sorted(merged), dtype=np.int64)
        K_snap = np.array([merged[i][1] for i in idx])
        Q_snap = np.array([merged[i][2] for i in idx])
        R_snap = np.array([merged[i][3] for i in idx])
        arr = {name: np.asarray(vals, dtype=np.float64)
               for name, vals in self.scalars.items()}
        n = arr["cost"].shape[0]
        for name in ("dk_sq", "dtheta_sq"):
            if arr[name].shape[0] < n:
                arr[name] = np.append(arr[name], np.full(n - arr[name].shape[0], np.nan))
        return IterateTrace(eta=eta, lam=lam, eps=eps, snap_idx=idx,
                            K_snap=K_snap, Q_snap=Q_snap, R_snap=R_snap, **arr)


def _spectral_norm(M):
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def solve(inst: LqrInstance, expert, K0: Policy, config: SolverConfig,
          box: ThetaBox, reg: RegularizerLike,
          theta0: CostParam | None = None) -> SolveResult:
    """Run the alternating scheme until ||L||_F^2 <= eps or max_iter.

    ``expert`` is either the expert Policy itself or a CostParam theta-tilde,
    in which case the expert gain is produced by the Riccati oracle. theta0
    defaults to the regularizer center. Non-convergence within max_iter is a
    partial result (status "max_iter"), not an error; a destabilizing iterate
    raises InstabilityError carrying the trace built so far.
    """
    from .riccati import solve_dare  # local import to avoid a cycle

    numerics = config.numerics
    if isinstance(expert, Policy):
        K_E = expert
    elif isinstance(expert, CostParam):
        K_E = Policy(solve_dare(inst, expert, numerics).Kstar)
    else:
        raise ContractError("expert must be a Policy or a CostParam")
    if not spectral_radius(closed_loop_matrix(inst, K0)) < 1.0 - numerics.stability_margin:
        raise InstabilityError("initial policy K0 is not stabilizing")
    theta = theta0 if theta0 is not None else _default_center(reg, inst)
    if not box.contains(theta):
        raise ContractError("theta0 lies outside the feasible box")
    expert_moments = visitation_moments(inst, K_E, None, numerics)

    use_fast = config.fast
    if use_fast is None:
        use_fast = config.max_iter >= 20_000 and _fast_available()
    fast_ok = (isinstance(reg, QuadraticRegularizer)
               and numerics.stability_margin == 0.0
               and inst.d <= numerics.kron_max_dim
               and _fast_available())
    if use_fast and fast_ok:
        from . import _fastpath
        return _fastpath.solve_fast(inst, K_E, K0, theta, config, box, reg,
                                    expert_moments)
    return _solve_python(inst, K_E, K0, theta, config, box, reg, expert_moments)


def _default_center(reg, inst):
    if isinstance(reg, QuadraticRegularizer):
        return reg.center()
    raise ContractError("theta0 is required for non-quadratic regularizers")


def _fast_available() -> bool:
    try:
        from . import _fastpath
    except Exception:
        return False
    return _fastpath.AVAILABLE


def _solve_python(inst, K_E, K0, theta, config, box, reg, expert_moments) -> SolveResult:
    numerics = config.numerics
    eta, lam, eps = config.eta, config.lam, config.eps
    sig_e, usig_e = expert_moments
    KE = K_E.K
    center = reg.center() if isinstance(reg, QuadraticRegularizer) else theta
    tb = _TraceBuilder(config.stride, config.tail_window)

    K = np.array(K0.K, dtype=np.float64)
    Q, R = np.array(theta.Q), np.array(theta.R)
    sigma = None
    converged = False
    gamma_index = None
    n_iter = 0

    for i in range(config.max_iter + 1):
        pol = Policy(K)
        th = CostParam(Q, R)
        if sigma is None:
            sol = solve_closed_loop(inst, th, pol, numerics)
        else:
            T = closed_loop_matrix(inst, pol)
            PK = solve_discrete_lyapunov(T.T, th.Q + K.T @ th.R @ K, numerics)
            sol = ClosedLoopSolution(T=T, SigmaK=sigma,
                                     PK=PK, rho=spectral_radius(T))
        c_i = cost(inst, th, pol, sol, numerics)
        c_e = float(np.sum(sig_e * Q) + np.sum(usig_e * R))
        m_i = c_i - c_e - reg.value(Q, R)
        L = proximal_gradient(inst, K_E, (pol, th), box, reg, numerics, sol,
                              expert_moments)
        tb.row(i, cost=c_i, objective=m_i, prox_grad_sq=L.norm_sq,
               rho=sol.rho if config.record_rho else np.nan,
               sigma_norm=_spectral_norm(sol.SigmaK), k_norm=_spectral_norm(K),
               k_dist_expert=frob(K - KE),
               theta_dist_center=float(np.sqrt(frob(Q - center.Q) ** 2
                                               + frob(R - center.R) ** 2)))
        tb.snap(i, K, Q, R)
        n_iter = i
        if L.norm_sq <= eps:
            converged = True
            gamma_index = i
            break
        if i == config.max_iter:
            break

        gk = L.k_block  # grad_K m == grad_K C, already computed for L
        K1 = K - eta * gk
        pol1 = Policy(K1)
        T1 = closed_loop_matrix(inst, pol1)
        rho1 = spectral_radius(T1)
        if rho1 >= 1.0 - numerics.stability_margin:
            raise InstabilityError(
                f"iterate {i + 1} left the stabilizing set: rho = {rho1:.6f}",
                rho=rho1, iteration=i + 1, trace=tb.build(eta, lam, eps))
        sigma1 = solve_discrete_lyapunov(T1, inst.Sigma0, numerics)
        sol1 = ClosedLoopSolution(T=T1, SigmaK=sigma1, PK=sol.PK, rho=rho1)
        gq, gr = grad_theta_m(inst, th, pol1, K_E, reg, numerics, sol_next=sol1,
                              expert_moments=expert_moments)
        th1 = project_theta((Q + lam * gq, R + lam * gr), box, numerics)
        tb.row(i, dk_sq=frob(K1 - K) ** 2, dtheta_sq=th1.dist(th) ** 2)
        K, Q, R = K1, th1.Q, th1.R
        sigma = sigma1

    trace = tb.build(eta, lam, eps)
    return SolveResult(K=K.copy(), theta=CostParam(Q, R), trace=trace,
                       converged=converged,
                       status="converged" if converged else "max_iter",
                       n_iter=n_iter, gamma_index=gamma_index)
