"""Runtime monitors for solver traces.

These evaluate the analysis' certified quantities numerically along an actual
run: the decaying potential and its per-step decrement inequality, the
uniform stability envelope, the local contraction of the saddle-distance
potential, and a randomized suite of geometric inequalities for the cost in
the gain. Reports carry the moduli they used so a failure can be attributed
to estimation rather than to the algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditions import ConditionConstants, upsilon_formula
from .errors import ContractError, InsufficientCoverageError, UnsupportedError
from .lqr_core import (
    CostParam,
    LqrInstance,
    Policy,
    cost,
    gain_residual,
    policy_gradient,
    solve_closed_loop,
    spectral_radius,
    visitation_moments,
)
from .numerics import DEFAULT_NUMERICS, NumericsConfig, frob, symmetrize
from .riccati import solve_dare
from .solver import IterateTrace, RegularizerLike, ThetaBox, QuadraticRegularizer


# ---------------------------------------------------------------------------
# potential decay


@dataclass(frozen=True)
class PotentialReport:
    """Per-iteration potential with the decrement-inequality audit.

    ``p`` holds P_i for i = 0..n-2 (the potential looks one step ahead).
    ``violations`` are the indices i where P_{i+1} - P_i exceeds the certified
    decrement beyond tolerance, using the stated constant s. ``s_feasible``
    (with its phis and violations) is the largest constant the decrement
    derivation actually admits, scaled by 12/13; it is the one whose phis can
    be positive.
    """

    p: np.ndarray
    s: float
    phi1: float
    phi2: float
    phi3: float
    violations: list
    p_feasible: np.ndarray | None
    s_feasible: float | None
    phi1_feasible: float | None
    phi2_feasible: float | None
    phi3_feasible: float | None
    violations_feasible: list | None
    s_interval: tuple
    tolerance: float
    checked: int


def _phis(s, eta, lam, tau_v, nu_v, sigma_theta, gamma, nu):
    phi1 = 1.0 / (2.0 * eta) - tau_v / 2.0 - s * (eta * lam * tau_v ** 2
                                                  + 3.0 * eta * nu_v * sigma_theta)
    phi2 = s * (eta * gamma - eta * lam * nu ** 2) / 2.0 - (1.0 / lam + tau_v + nu) / 2.0
    phi3 = s * (eta * gamma - eta * lam * nu ** 2) / 2.0 - (1.0 / lam + nu) / 2.0
    return phi1, phi2, phi3


def _potential_series(m, dk_sq, dth_sq, s, eta, lam, nu_v, sigma_theta, gamma, nu):
    n = m.shape[0]
    w_k = s * (1.0 + eta * nu_v * sigma_theta) / 2.0
    w_t = s * (eta / lam - eta * gamma + eta * lam * nu ** 2) / 2.0
    return m[: n - 1] + w_k * dk_sq[: n - 1] + w_t * dth_sq[: n - 1]


def _decrement_violations(p, dk_sq, dth_sq, phi1, phi2, phi3, tol):
    viol = []
    checked = 0
    for i in range(1, p.shape[0] - 1):
        lhs = p[i + 1] - p[i]
        rhs = -phi1 * dk_sq[i] - phi2 * dth_sq[i] - phi3 * dth_sq[i - 1]
        checked += 1
        if lhs - rhs > tol * max(1.0, abs(p[i])):
            viol.append(i)
    return viol, checked


def potential_trace(trace: IterateTrace, consts: ConditionConstants,
                    tol: float | None = None,
                    numerics: NumericsConfig = DEFAULT_NUMERICS) -> PotentialReport:
    """Evaluate the forward-looking potential and its per-step decrement."""
    if consts.nu_v is None or consts.tau_v is None:
        raise UnsupportedError("potential_trace needs tau_v and nu_v estimates")
    if trace.n < 3:
        raise ContractError("potential audit needs at least 3 iterations")
    if tol is None:
        tol = numerics.potential_rtol
    eta, lam = trace.eta, trace.lam
    gamma, nu = consts.gamma, consts.nu
    tau_v, nu_v, st = consts.tau_v, consts.nu_v, consts.sigma_theta

    s_stated = 12.0 / (13.0 * eta ** 2 * nu_v * st)
    p = _potential_series(trace.objective, trace.dk_sq, trace.dtheta_sq,
                          s_stated, eta, lam, nu_v, st, gamma, nu)
    phi1, phi2, phi3 = _phis(s_stated, eta, lam, tau_v, nu_v, st, gamma, nu)
    viol, checked = _decrement_violations(p, trace.dk_sq, trace.dtheta_sq,
                                          phi1, phi2, phi3, tol)

    lo = hi = np.nan
    if gamma - lam * nu ** 2 > 0 and 1.0 / eta > tau_v:
        lo = (1.0 / lam + tau_v + nu) / (eta * (gamma - lam * nu ** 2))
        hi = (1.0 / eta - tau_v) / (2.0 * eta * lam * tau_v ** 2
                                    + 6.0 * eta * nu_v * st)
    feas = np.isfinite(lo) and np.isfinite(hi) and hi > lo > 0
    if feas:
        s_f = (12.0 / 13.0) * hi
        if s_f <= lo:
            s_f = 0.5 * (lo + hi)
        p_f = _potential_series(trace.objective, trace.dk_sq, trace.dtheta_sq,
                                s_f, eta, lam, nu_v, st, gamma, nu)
        f1, f2, f3 = _phis(s_f, eta, lam, tau_v, nu_v, st, gamma, nu)
        viol_f, _ = _decrement_violations(p_f, trace.dk_sq, trace.dtheta_sq,
                                          f1, f2, f3, tol)
    else:
        s_f = None
        p_f = None
        f1 = f2 = f3 = None
        viol_f = None
    return PotentialReport(p=p, s=s_stated, phi1=phi1, phi2=phi2, phi3=phi3,
                           violations=viol, p_feasible=p_f, s_feasible=s_f,
                           phi1_feasible=f1, phi2_feasible=f2, phi3_feasible=f3,
                           violations_feasible=viol_f, s_interval=(lo, hi),
                           tolerance=tol, checked=checked)


# ---------------------------------------------------------------------------
# stability envelope


@dataclass(frozen=True)
class EnvelopeReport:
    cost_cap: float
    k_sq_cap: float
    sigma_cap: float
    cost_violations: list
    k_violations: list
    sigma_violations: list
    rho_violations: list
    rho_unchecked: int
    max_rho: float

    @property
    def clean(self) -> bool:
        return not (self.cost_violations or self.k_violations
                    or self.sigma_violations or self.rho_violations)


def stability_envelope(trace: IterateTrace, consts: ConditionConstants,
                       rtol: float = 1e-9) -> EnvelopeReport:
    """Check every iterate against the uniform stability bounds."""
    cap = consts.cost_cap
    k_sq_cap = cap / (consts.alpha_r * consts.mu)
    sigma_cap = cap / consts.alpha_q
    tol = rtol * max(1.0, cap)
    cost_v = np.nonzero(trace.cost > cap + tol)[0].tolist()
    k_v = np.nonzero(trace.k_norm ** 2 > k_sq_cap + rtol * max(1.0, k_sq_cap))[0].tolist()
    s_v = np.nonzero(trace.sigma_norm > sigma_cap + rtol * max(1.0, sigma_cap))[0].tolist()
    rho = trace.rho
    known = np.isfinite(rho)
    rho_v = np.nonzero(known & (rho >= 1.0))[0].tolist()
    max_rho = float(np.max(rho[known])) if np.any(known) else np.nan
    return EnvelopeReport(cost_cap=cap, k_sq_cap=k_sq_cap, sigma_cap=sigma_cap,
                          cost_violations=cost_v, k_violations=k_v,
                          sigma_violations=s_v, rho_violations=rho_v,
                          rho_unchecked=int(np.sum(~known)), max_rho=max_rho)


# ---------------------------------------------------------------------------
# local contraction


@dataclass(frozen=True)
class LocalRateReport:
    indices: np.ndarray
    z: np.ndarray
    a: float
    upsilon_formula: float | None
    upsilon_measured: float
    onset_index: int
    r_squared: float

    @property
    def contracting(self) -> bool:
        return self.upsilon_measured < 1.0


def _contiguous_tail(snap_idx, n):
    """Longest run of consecutive snapshot indices ending at n-1."""
    if snap_idx.size == 0 or snap_idx[-1] != n - 1:
        raise UnsupportedError("trace snapshots do not cover the final iterate")
    end = snap_idx.size - 1
    start = end
    while start > 0 and snap_idx[start - 1] == snap_idx[start] - 1:
        start -= 1
    return np.arange(start, end + 1)


def local_rate(trace: IterateTrace, inst: LqrInstance, saddle,
               consts: ConditionConstants, eta: float | None = None,
               lam: float | None = None, window: int | None = None,
               numerics: NumericsConfig = DEFAULT_NUMERICS) -> LocalRateReport:
    """Saddle-distance potential Z along the trace tail and its contraction.

    ``saddle`` is the converged (K*, theta*) pair. Z_i adds the theta error
    and a weighted gain-tracking error against the per-iterate optimal gain
    (warm-started Riccati solves). Needs a converged trace and the local
    moduli; the formula contraction factor is reported alongside the measured
    tail ratio.
    """
    if trace.prox_grad_sq[trace.n - 1] > trace.eps:
        raise UnsupportedError("local_rate needs a converged trace")
    if consts.tau_kstar in (None, 0.0) or consts.nu_mstar in (None, 0.0):
        raise UnsupportedError("local_rate needs estimated local moduli")
    K_star, theta_star = saddle
    eta = trace.eta if eta is None else eta
    lam = trace.lam if lam is None else lam
    positions = _contiguous_tail(trace.snap_idx, trace.n)
    if window is not None and positions.size > window:
        positions = positions[-window:]
    a = consts.gamma / (3.0 * consts.tau_kstar * consts.nu_mstar)

    z = np.empty(positions.size)
    warm = None
    for out_i, pos in enumerate(positions):
        K_i = trace.K_snap[pos]
        th_i = CostParam(trace.Q_snap[pos], trace.R_snap[pos])
        sol = solve_dare(inst, th_i, numerics, p0=warm)
        warm = sol.Pstar
        z[out_i] = (np.sqrt(frob(th_i.Q - theta_star.Q) ** 2
                            + frob(th_i.R - theta_star.R) ** 2)
                    + a * frob(K_i - sol.Kstar))
    idx = trace.snap_idx[positions]
    if trace.z_local is None:
        trace.z_local = np.full(trace.n, np.nan)
    trace.z_local[idx] = z

    floor = max(1e-300, 1e-10 * float(np.max(z, initial=0.0)))
    good = z > floor
    ratios = np.full(z.size - 1, np.nan)
    for i in range(z.size - 1):
        if good[i] and good[i + 1]:
            ratios[i] = z[i + 1] / z[i]
    valid = np.isfinite(ratios)
    if not np.any(valid):
        measured = 0.0
        onset = int(idx[0])
    else:
        half = max(1, int(np.sum(valid) // 2))
        tail_ratios = ratios[valid][-half:]
        measured = float(np.max(tail_ratios))
        onset_rel = 0
        for i in range(ratios.size - 1, -1, -1):
            if np.isfinite(ratios[i]) and ratios[i] > 1.0:
                onset_rel = i + 1
                break
        onset = int(idx[onset_rel])

    fit_mask = good
    if np.sum(fit_mask) >= 3:
        x = idx[fit_mask].astype(np.float64)
        y = np.log(z[fit_mask])
        slope, intercept = np.polyfit(x, y, 1)
        pred = slope * x + intercept
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - np.mean(y)) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        r2 = np.nan

    try:
        ups = upsilon_formula(consts, eta, lam)
    except UnsupportedError:
        ups = None
    return LocalRateReport(indices=idx, z=z, a=a, upsilon_formula=ups,
                           upsilon_measured=measured, onset_index=onset,
                           r_squared=float(r2))


# ---------------------------------------------------------------------------
# randomized geometric inequality suite


@dataclass(frozen=True)
class CheckStat:
    name: str
    trials: int
    violations: int
    worst_slack: float


def _random_theta(rng, d, k, box):
    def draw(n, lo, hi):
        g = rng.standard_normal((n, n))
        q_mat, _ = np.linalg.qr(g)
        w = rng.uniform(lo, hi, size=n)
        return symmetrize((q_mat * w) @ q_mat.T)

    return CostParam(draw(d, box.alpha_q, box.beta_q),
                     draw(k, box.alpha_r, box.beta_r))


def _random_stabilizing_gain(rng, inst, anchor, scale_hi=0.8, tries=40):
    d, k = inst.d, inst.k
    for _ in range(tries):
        scale = 10.0 ** rng.uniform(-3, np.log10(scale_hi))
        K = anchor + scale * rng.standard_normal((k, d))
        if spectral_radius(inst.A - inst.B @ K) < 1.0 - 1e-9:
            return K
    return None


def geometric_inequality_suite(inst: LqrInstance, box: ThetaBox,
                               reg: RegularizerLike, K_E: Policy,
                               trials: int = 200, seed: int = 0,
                               numerics: NumericsConfig = DEFAULT_NUMERICS) -> dict:
    """Randomized audit of the cost geometry in the gain.

    Per draw: the difference-of-cost identity, gradient dominance, the
    gradient-norm upper bound, local quadratic growth at the optimal gain,
    and the curvature/loop-norm caps (kappa1/kappa2 with the draw itself as
    the path anchor). Identities are held to the relative identity tolerance,
    one-sided inequalities to the asymmetric slack.
    """
    rng = np.random.default_rng(seed)
    d, k = inst.d, inst.k
    sig_e, u_e = visitation_moments(inst, K_E, None, numerics)
    sup_q, sup_r = reg.sup_grad_norms(box)
    names = ("difference_of_cost", "gradient_dominance", "gradient_upper_bound",
             "quadratic_growth", "curvature_cap", "loop_norm_cap")
    stats = {name: [0, 0, np.inf] for name in names}
    slack_tol = numerics.inequality_slack
    id_tol = numerics.identity_rtol
    done = 0
    attempts = 0
    while done < trials and attempts < 50 * trials:
        attempts += 1
        theta = _random_theta(rng, d, k, box)
        dare = solve_dare(inst, theta, numerics)
        K = _random_stabilizing_gain(rng, inst, dare.Kstar)
        if K is None:
            continue
        pol = Policy(K)
        sol = solve_closed_loop(inst, theta, pol, numerics)
        c_k = cost(inst, theta, pol, sol, numerics)
        c_star = cost(inst, theta, Policy(dare.Kstar), numerics=numerics)
        g = policy_gradient(inst, theta, pol, sol, numerics)
        e_k = gain_residual(inst, theta, pol, sol, numerics)
        rbpb = theta.R + inst.B.T @ sol.PK @ inst.B

        def record(name, slack, tol):
            stats[name][0] += 1
            if slack < -tol:
                stats[name][1] += 1
            stats[name][2] = min(stats[name][2], slack)

        # difference-of-cost identity against a second stabilizing gain
        K2 = _random_stabilizing_gain(rng, inst, dare.Kstar)
        if K2 is not None:
            pol2 = Policy(K2)
            sol2 = solve_closed_loop(inst, theta, pol2, numerics)
            c_k2 = cost(inst, theta, pol2, sol2, numerics)
            dk = K - K2
            rhs = (-2.0 * float(np.trace(sol2.SigmaK @ dk.T @ e_k))
                   + float(np.trace(sol2.SigmaK @ dk.T @ rbpb @ dk)))
            lhs = c_k2 - c_k
            scale = max(1.0, abs(lhs), abs(rhs))
            record("difference_of_cost", -abs(lhs - rhs) / scale + id_tol, 0.0)

        # gradient dominance
        sig_star = solve_closed_loop(inst, theta, Policy(dare.Kstar), numerics).SigmaK
        mu_c = float(np.linalg.norm(sig_star, 2)) / (
            inst.mu ** 2 * float(np.min(np.linalg.eigvalsh(theta.R))))
        gap = c_k - c_star
        dom_rhs = mu_c * frob(g) ** 2
        record("gradient_dominance", (dom_rhs - gap) / max(1.0, dom_rhs, gap), slack_tol)

        # gradient norm upper bound (spectral norms)
        ub = (c_k / (np.sqrt(inst.mu) * float(np.min(np.linalg.eigvalsh(theta.Q))))
              * np.sqrt(float(np.linalg.norm(rbpb, 2)) * max(gap, 0.0)))
        gnorm = float(np.linalg.norm(g, 2))
        record("gradient_upper_bound", (ub - gnorm) / max(1.0, ub, gnorm), slack_tol)

        # quadratic growth near the optimal gain
        delta = rng.standard_normal((k, d))
        delta *= (1e-3 * rng.uniform(0.1, 1.0)) / max(1e-12, frob(delta))
        K_near = dare.Kstar + delta
        if spectral_radius(inst.A - inst.B @ K_near) < 1.0:
            c_near = cost(inst, theta, Policy(K_near), numerics=numerics)
            lhs_g = c_near - c_star
            rhs_g = box.alpha_r * inst.mu * frob(K_near - dare.Kstar) ** 2
            record("quadratic_growth", (lhs_g - rhs_g) / max(1.0, abs(lhs_g), rhs_g),
                   slack_tol)

        # kappa caps with this draw anchoring the path constants
        u_k = symmetrize(K @ sol.SigmaK @ K.T)
        m_s = box.beta_q * float(np.trace(sol.SigmaK)) + box.beta_r * float(np.trace(u_k))
        f_s = max(frob(sig_e) + sup_q, frob(u_e) + sup_r)
        cap_s = box.alpha * f_s + 2.0 * m_s
        if c_k <= cap_s * (1 + 1e-12):
            b2 = float(np.linalg.norm(inst.B, 2))
            kappa1 = box.beta_r + cap_s * b2 ** 2 / inst.mu
            kappa2m1 = np.sqrt(cap_s / (inst.mu * box.alpha_q))
            record("curvature_cap",
                   (kappa1 - float(np.linalg.norm(rbpb, 2))) / max(1.0, kappa1), slack_tol)
            tnorm = float(np.linalg.norm(sol.T, 2))
            record("loop_norm_cap", (kappa2m1 - tnorm) / max(1.0, kappa2m1), slack_tol)
        done += 1
    if done < trials:
        raise InsufficientCoverageError(
            f"only {done}/{trials} draws produced stabilizing gains")
    return {name: CheckStat(name=name, trials=v[0], violations=v[1],
                            worst_slack=(v[2] if np.isfinite(v[2]) else 0.0))
            for name, v in stats.items()}


# ---------------------------------------------------------------------------
# sublinear decay of the proximal gradient


@dataclass(frozen=True)
class DecaySlopeFit:
    slope: float
    i_lo: int
    i_hi: int
    window: str


def prox_decay_slope(prox_sq: np.ndarray, onset: int | None = None,
                     min_points: int = 10) -> DecaySlopeFit:
    """Log-log least-squares slope of the running minimum of ||L||^2.

    Fits over [1, onset] when the pre-contraction window is wide enough
    (spans at least a decade of iterations and a decade of decay); otherwise
    over the whole curve, flagged in ``window``.
    """
    mins = np.minimum.accumulate(prox_sq)
    n = mins.shape[0]
    if n < min_points:
        raise ContractError("too few iterations to fit a decay slope")

    def fit(hi):
        idx = np.unique(np.geomspace(1, hi, num=min(400, hi)).astype(np.int64))
        x = np.log10(idx.astype(np.float64) + 1.0)
        y = np.log10(np.maximum(mins[idx], 1e-300))
        slope = float(np.polyfit(x, y, 1)[0])
        return slope, int(idx[0]), int(idx[-1])

    if (onset is not None and onset >= max(min_points, 10)
            and mins[onset] <= 0.1 * mins[1]):
        slope, lo, hi = fit(onset)
        return DecaySlopeFit(slope=slope, i_lo=lo, i_hi=hi, window="pre_contraction")
    slope, lo, hi = fit(n - 1)
    return DecaySlopeFit(slope=slope, i_lo=lo, i_hi=hi, window="full_trace")


# ---------------------------------------------------------------------------
# iteration-count bound (soft)


def gamma_budget_check(trace: IterateTrace, consts: ConditionConstants,
                       reg: RegularizerLike, expert_moments,
                       epsilons=(1e-2, 1e-3, 1e-4)) -> list:
    """Soft audit of Gamma(eps) * eps <= zeta with estimated constants.

    zeta uses the feasible-s potential (the stated s gives a negative phi
    floor, see the potential report) and an upper bound on P_0 - inf P from
    the closed-form box suprema; entries are flagged soft because every
    ingredient is an estimate.
    """
    if consts.nu_v is None or consts.tau_v is None:
        raise UnsupportedError("gamma_budget_check needs tau_v and nu_v")
    eta, lam = trace.eta, trace.lam
    gamma, nu, st = consts.gamma, consts.nu, consts.sigma_theta
    lo = (1.0 / lam + consts.tau_v + nu) / (eta * (gamma - lam * nu ** 2))
    hi = (1.0 / eta - consts.tau_v) / (2.0 * eta * lam * consts.tau_v ** 2
                                       + 6.0 * eta * consts.nu_v * st)
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo > 0):
        raise UnsupportedError("no feasible potential constant; ratio window is empty")
    s_f = (12.0 / 13.0) * hi
    if s_f <= lo:
        s_f = 0.5 * (lo + hi)
    phi1, phi2, _ = _phis(s_f, eta, lam, consts.tau_v, consts.nu_v, st, gamma, nu)
    if min(phi1, phi2) <= 0:
        raise UnsupportedError("feasible-s phis are not positive; cannot form zeta")
    p0 = float(_potential_series(trace.objective, trace.dk_sq, trace.dtheta_sq,
                                 s_f, eta, lam, consts.nu_v, st, gamma, nu)[0])
    sig_e, u_e = expert_moments
    sup_cost_e = consts.beta_q * float(np.trace(sig_e)) + consts.beta_r * float(np.trace(u_e))
    if isinstance(reg, QuadraticRegularizer):
        sup_q, sup_r = reg.sup_grad_norms(
            ThetaBox(consts.alpha_q, consts.beta_q, consts.alpha_r, consts.beta_r))
        sup_psi = (sup_q ** 2 + sup_r ** 2) / (4.0 * reg.gamma)
    else:
        raise UnsupportedError("zeta bound implemented for the quadratic regularizer")
    p_floor = -(sup_cost_e + sup_psi)
    phi = 1.0 / min(phi1, phi2)
    phi_prime = max(1.0, 1.0 / eta ** 2, 1.0 / lam ** 2)
    zeta = phi_prime * phi * (p0 - p_floor)
    out = []
    for eps in epsilons:
        gi = trace.gamma_index(eps)
        ok = None if gi is None else bool(gi * eps <= zeta)
        out.append({"eps": eps, "gamma_index": gi, "zeta": zeta, "ok": ok,
                    "soft": True})
    return out


# ---------------------------------------------------------------------------
# per-step cost-update inequalities (descent and bounded ascent)


@dataclass(frozen=True)
class CostUpdateReport:
    descent_violations: list
    ascent_violations: list
    checked: int


def cost_update_inequalities(trace: IterateTrace, inst: LqrInstance,
                             consts: ConditionConstants,
                             numerics: NumericsConfig = DEFAULT_NUMERICS,
                             slack: float = 1e-9) -> CostUpdateReport:
    """Audit the per-step descent of the gain update and the bounded ascent
    of the cost-parameter update along a fully snapshotted trace."""
    if trace.snap_idx.size != trace.n or not np.array_equal(
            trace.snap_idx, np.arange(trace.n)):
        raise UnsupportedError("cost_update_inequalities needs stride-1 snapshots")
    eta, lam = trace.eta, trace.lam
    descent_v, ascent_v = [], []
    warm = None
    checked = 0
    for i in range(trace.n - 1):
        K_i, Q_i, R_i = trace.K_snap[i], trace.Q_snap[i], trace.R_snap[i]
        K_n = trace.K_snap[i + 1]
        th_i = CostParam(Q_i, R_i)
        c_i = float(trace.cost[i])
        sol_next = solve_closed_loop(inst, th_i, Policy(K_n), numerics)
        c_cross = cost(inst, th_i, Policy(K_n), sol_next, numerics)
        dare = solve_dare(inst, th_i, numerics, p0=warm)
        warm = dare.Pstar
        c_star = cost(inst, th_i, Policy(dare.Kstar), numerics=numerics)
        sig_star_norm = float(np.linalg.norm(
            solve_closed_loop(inst, th_i, Policy(dare.Kstar), numerics).SigmaK, 2))
        rate = eta * float(np.min(np.linalg.eigvalsh(R_i))) * inst.mu ** 2 / sig_star_norm
        lhs_d = c_cross - c_i
        rhs_d = -rate * (c_i - c_star)
        checked += 1
        if lhs_d - rhs_d > slack * max(1.0, abs(c_i)):
            descent_v.append(i)
        c_next = float(trace.cost[i + 1])
        lhs_a = c_next - c_cross
        rhs_a = lam / consts.alpha ** 2 * c_i ** 2 + lam * consts.F / consts.alpha * c_i
        if lhs_a - rhs_a > slack * max(1.0, abs(c_i)):
            ascent_v.append(i)
    return CostUpdateReport(descent_violations=descent_v, ascent_violations=ascent_v,
                            checked=checked)
