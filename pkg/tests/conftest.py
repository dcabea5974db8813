"""Shared fixtures and closed-form scalar oracles.

The scalar (d = k = 1) loop admits closed forms for everything the library
computes; tests use them as independent references. Random-instance helpers
generate stabilizing setups with controlled spectral radius.
"""

import numpy as np
import pytest

import lqgail as lg


# ---------------------------------------------------------------------------
# scalar closed forms


def sigma_scalar(a, b, k, s0=1.0):
    t = a - b * k
    assert abs(t) < 1.0
    return s0 / (1.0 - t * t)


def p_scalar(a, b, k, q, r):
    t = a - b * k
    assert abs(t) < 1.0
    return (q + k * k * r) / (1.0 - t * t)


def cost_scalar(a, b, k, q, r, s0=1.0):
    return sigma_scalar(a, b, k, s0) * (q + k * k * r)


def grad_scalar(a, b, k, q, r, s0=1.0):
    p = p_scalar(a, b, k, q, r)
    e = (r + b * b * p) * k - b * p * a
    return 2.0 * e * sigma_scalar(a, b, k, s0)


def dare_p_scalar(a, b, q, r):
    """Positive root of b^2 p^2 + (r - a^2 r - q b^2) p - q r = 0."""
    bb = b * b
    lin = r - a * a * r - q * bb
    return (-lin + np.sqrt(lin * lin + 4.0 * bb * q * r)) / (2.0 * bb)


# ---------------------------------------------------------------------------
# random setups


def random_instance(rng, d, k, rho_a=0.5, unit_b=False):
    A = rng.standard_normal((d, d))
    r = max(abs(np.linalg.eigvals(A)))
    A = A * (rho_a / r)
    if unit_b:
        B = np.linalg.qr(rng.standard_normal((d, max(d, k))))[0][:, :k]
    else:
        B = rng.standard_normal((d, k))
    W = rng.standard_normal((d, d))
    Sigma0 = np.eye(d) + 0.3 * (W @ W.T) / d
    return lg.LqrInstance(A=A, B=B, Sigma0=0.5 * (Sigma0 + Sigma0.T))


def random_theta(rng, d, k, lo=0.5, hi=2.0):
    def block(n):
        g = rng.standard_normal((n, n))
        qm, _ = np.linalg.qr(g)
        w = rng.uniform(lo, hi, size=n)
        return 0.5 * ((qm * w) @ qm.T + ((qm * w) @ qm.T).T)

    return lg.CostParam(block(d), block(k))


def random_stabilizing_policy(rng, inst, theta=None, scale=0.5):
    """Optimal gain for a (possibly random) theta plus a stabilizing kick."""
    if theta is None:
        theta = random_theta(rng, inst.d, inst.k)
    kstar = lg.solve_dare(inst, theta).Kstar
    for _ in range(50):
        K = kstar + scale * rng.standard_normal(kstar.shape)
        if lg.spectral_radius(inst.A - inst.B @ K) < 1.0 - 1e-6:
            return lg.Policy(K)
        scale *= 0.7
    raise RuntimeError("could not find a stabilizing policy")


# ---------------------------------------------------------------------------
# fully admissible fixtures (all three global stepsize conditions hold with
# honestly estimated moduli): the box is shrunk until the compatibility
# condition holds with margin, and the stepsizes sit inside the intersection
# of the stability and potential-decay windows.


def build_conforming_scalar(a=1.0, b=1.0, k0_offset=0.05, seed=0,
                            gamma_safety=1.5, lipschitz_samples=48):
    import lqgail.conditions as cond

    inst = lg.LqrInstance(A=[[a]], B=[[b]], Sigma0=[[1.0]])
    theta_tilde = lg.CostParam([[1.0]], [[1.0]])
    ke = lg.expert_policy(inst, theta_tilde)
    k0 = lg.Policy(ke.K + k0_offset)

    # design pass: expert/start moments with the box still unknown (the only
    # box-coupled term, the regularizer-gradient sup, is pinned at 0.3)
    sig0, u0 = lg.visitation_moments(inst, k0)
    sig_e, u_e = lg.visitation_moments(inst, ke)
    m_const = float(np.trace(sig0) + np.trace(u0))
    f_const = max(np.linalg.norm(sig_e), np.linalg.norm(u_e)) + 0.3
    cap = f_const + 2.0 * m_const
    probe_box = lg.ThetaBox(1.0, 1.0, 1.0, 1.0)
    est = cond.estimate_lipschitz(inst, probe_box, cap, samples=lipschitz_samples,
                                  seed=seed)
    sigma_theta = np.sqrt(2.0)
    gamma_mod = gamma_safety * 14.0 * sigma_theta * est.nu_v * m_const * cap
    gamma_c = gamma_mod / 2.0
    delta = 0.3 / (2.0 * gamma_c)  # per-block gradient sup = 0.3 at the corner
    box = lg.ThetaBox(1.0 - delta, 1.0 + delta, 1.0 - delta, 1.0 + delta)
    reg = lg.QuadraticRegularizer(gamma=gamma_c, Qbar=[[1.0]], Rbar=[[1.0]])

    consts = lg.compute_constants(inst, k0, box, reg, ke).with_lipschitz(est)
    b1, b2, b3, ratio1 = cond.condition1_bounds(consts)
    ratio3_lo = 7.0 * consts.nu_v * consts.sigma_theta / consts.gamma
    assert ratio3_lo < ratio1, "compatibility window empty; raise gamma_safety"
    lam_cap = min(1.0 / (100.0 * (consts.tau_v + consts.nu)),
                  3.0 * consts.nu_v * consts.sigma_theta / (100.0 * consts.tau_v ** 2),
                  consts.gamma / (100.0 * consts.nu ** 2))
    eta_cap = min(b1, b2, b3, 1.0 / (100.0 * consts.tau_v),
                  1.0 / (2.0 * consts.sigma_theta * consts.nu_v))
    ratio_mid = np.sqrt(ratio3_lo * ratio1)
    lam = min(lam_cap * 0.98, eta_cap * ratio1 * 0.98)
    eta = lam / ratio_mid
    if eta > eta_cap:
        eta = eta_cap
        lam = eta * ratio_mid
    rep1 = lg.check_condition1(consts, eta, lam)
    rep2 = lg.check_condition2(consts)
    rep3 = lg.check_condition3(consts, eta, lam)
    assert rep1.passed and rep2.passed and rep3.passed, (rep1, rep2, rep3)
    return {"inst": inst, "theta_tilde": theta_tilde, "box": box, "reg": reg,
            "ke": ke, "k0": k0, "eta": eta, "lam": lam, "consts": consts,
            "reports": (rep1, rep2, rep3)}


_conforming_cache = {}


def conforming_scalar_run(max_iter=3_000_000, eps=1e-12, key="default", **kwargs):
    """Converged run of the fully admissible scalar fixture (cached)."""
    cache_key = (key, max_iter, eps)
    if cache_key not in _conforming_cache:
        fx = build_conforming_scalar(**kwargs)
        cfg = lg.SolverConfig(eta=fx["eta"], lam=fx["lam"], eps=eps,
                              max_iter=max_iter)
        res = lg.solve(fx["inst"], fx["theta_tilde"], fx["k0"], cfg, fx["box"],
                       fx["reg"])
        _conforming_cache[cache_key] = (fx, res)
    return _conforming_cache[cache_key]


@pytest.fixture
def scalar_instance():
    return lg.LqrInstance(A=[[0.5]], B=[[1.0]], Sigma0=[[1.0]])


@pytest.fixture
def unit_theta():
    return lg.CostParam([[1.0]], [[1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
