"""Compiled inner loop for long solver runs (optional, needs numba).

Semantics mirror solver._solve_python: same update order, same projected
ascent, same stopping rule. The kernel advances a bounded chunk of
iterations, filling per-iterate scalar buffers and full iterate snapshots;
the driver assembles the same IterateTrace the reference path produces.
Stability of each fresh iterate is certified inside the kernel through the
Lyapunov solution (positive definite Sigma with a small residual implies
rho(A-BK) < 1), since general eigenvalues are unavailable under numba.
"""

from __future__ import annotations

import numpy as np

from .errors import InstabilityError
from .lqr_core import CostParam

try:
    from numba import njit

    AVAILABLE = True
except ImportError:  # pragma: no cover - exercised on bare installs
    AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (len(args) == 1 and callable(args[0])) else args[0]


CHUNK = 4096

# kernel exit codes
_RAN_ALL = 0
_CONVERGED = 1
_UNSTABLE = 2
_NUMFAIL = 3


@njit(cache=True)
def _clip_sym(M, lo, hi):
    S = 0.5 * (M + M.T)
    w, u = np.linalg.eigh(S)
    for i in range(w.shape[0]):
        if w[i] < lo:
            w[i] = lo
        elif w[i] > hi:
            w[i] = hi
    X = (u * w) @ u.T
    return 0.5 * (X + X.T)


@njit(cache=True)
def _kron_lhs(T):
    d = T.shape[0]
    M = np.empty((d * d, d * d))
    for i in range(d):
        for j in range(d):
            for p in range(d):
                for q in range(d):
                    M[i * d + p, j * d + q] = -T[i, j] * T[p, q]
    for r in range(d * d):
        M[r, r] += 1.0
    return M


@njit(cache=True)
def _solve_vec(Mlhs, W):
    d = W.shape[0]
    x = np.linalg.solve(Mlhs, W.copy().reshape(d * d))
    X = x.reshape((d, d))
    return 0.5 * (X + X.T)


@njit(cache=True)
def _run_chunk(A, B, Sig0, K, Q, R, sigma, have_sigma,
               SigE, UE, KE, Qbar, Rbar, gamma_c,
               aQ, bQ, aR, bR, eta, lam, eps, lyap_rtol, n_steps, last_chunk,
               out_cost, out_m, out_lsq, out_signorm, out_sigmineig,
               out_knorm, out_kdist, out_thdist, out_dksq, out_dthsq,
               Kbuf, Qbuf, Rbuf, K_fail):
    d = A.shape[0]
    status = _RAN_ALL
    n_done = 0
    for t in range(n_steps):
        T = A - B @ K
        Ml = _kron_lhs(T)
        if have_sigma == 0:
            sigma = _solve_vec(Ml, Sig0)
            res = frob_nb(sigma - Sig0 - T @ sigma @ T.T)
            if not res <= lyap_rtol * max(1.0, frob_nb(sigma)):
                status = _NUMFAIL
                break
        wS = np.linalg.eigvalsh(sigma)
        if wS[0] <= 0.0:
            status = _UNSTABLE
            K_fail[:, :] = K
            break
        P = _solve_vec(Ml.T.copy(), Q + K.T @ R @ K)
        BP = B.T @ P
        E = (R + BP @ B) @ K - BP @ A
        gk = 2.0 * E @ sigma
        U = K @ sigma @ K.T
        U = 0.5 * (U + U.T)
        c_i = np.sum(sigma * Q) + np.sum(U * R)
        c_e = np.sum(SigE * Q) + np.sum(UE * R)
        psi = gamma_c * (np.sum((Q - Qbar) ** 2) + np.sum((R - Rbar) ** 2))
        GQ = sigma - SigE - 2.0 * gamma_c * (Q - Qbar)
        GR = U - UE - 2.0 * gamma_c * (R - Rbar)
        Qp = _clip_sym(Q + GQ, aQ, bQ)
        Rp = _clip_sym(R + GR, aR, bR)
        lsq = np.sum(gk ** 2) + np.sum((Qp - Q) ** 2) + np.sum((Rp - R) ** 2)

        wK = np.linalg.eigvalsh(K @ K.T)
        out_cost[t] = c_i
        out_m[t] = c_i - c_e - psi
        out_lsq[t] = lsq
        out_signorm[t] = max(abs(wS[0]), abs(wS[d - 1]))
        out_sigmineig[t] = wS[0]
        out_knorm[t] = np.sqrt(max(wK[wK.shape[0] - 1], 0.0))
        out_kdist[t] = np.sqrt(np.sum((K - KE) ** 2))
        out_thdist[t] = np.sqrt(np.sum((Q - Qbar) ** 2) + np.sum((R - Rbar) ** 2))
        Kbuf[t] = K
        Qbuf[t] = Q
        Rbuf[t] = R
        n_done = t + 1
        if lsq <= eps:
            status = _CONVERGED
            break
        if last_chunk == 1 and t == n_steps - 1:
            break  # final iterate of the budget: record only, no update

        K1 = K - eta * gk
        T1 = A - B @ K1
        M1 = _kron_lhs(T1)
        sigma1 = _solve_vec(M1, Sig0)
        res1 = frob_nb(sigma1 - Sig0 - T1 @ sigma1 @ T1.T)
        w1 = np.linalg.eigvalsh(sigma1)
        if (not res1 <= lyap_rtol * max(1.0, frob_nb(sigma1))) or w1[0] <= 0.0:
            status = _UNSTABLE
            K_fail[:, :] = K1
            break
        U1 = K1 @ sigma1 @ K1.T
        U1 = 0.5 * (U1 + U1.T)
        GQu = sigma1 - SigE - 2.0 * gamma_c * (Q - Qbar)
        GRu = U1 - UE - 2.0 * gamma_c * (R - Rbar)
        Qn = _clip_sym(Q + lam * GQu, aQ, bQ)
        Rn = _clip_sym(R + lam * GRu, aR, bR)
        out_dksq[t] = np.sum((K1 - K) ** 2)
        out_dthsq[t] = np.sum((Qn - Q) ** 2) + np.sum((Rn - R) ** 2)
        K = K1
        Q = Qn
        R = Rn
        sigma = sigma1
        have_sigma = 1
    return n_done, status, K, Q, R, sigma, have_sigma


@njit(cache=True)
def frob_nb(M):
    return np.sqrt(np.sum(M ** 2))


@njit(cache=True)
def _run_chunk_scalar(A, B, Sig0, K, Q, R, sigma, have_sigma,
                      SigE, UE, KE, Qbar, Rbar, gamma_c,
                      aQ, bQ, aR, bR, eta, lam, eps, lyap_rtol, n_steps,
                      last_chunk,
                      out_cost, out_m, out_lsq, out_signorm, out_sigmineig,
                      out_knorm, out_kdist, out_thdist, out_dksq, out_dthsq,
                      Kbuf, Qbuf, Rbuf, K_fail):
    """d = k = 1 specialization of _run_chunk, same update sequence."""
    a = A[0, 0]
    b = B[0, 0]
    s0 = Sig0[0, 0]
    k_g = K[0, 0]
    q = Q[0, 0]
    r = R[0, 0]
    sig = sigma[0, 0]
    ke = KE[0, 0]
    sig_e = SigE[0, 0]
    u_e = UE[0, 0]
    qb = Qbar[0, 0]
    rb = Rbar[0, 0]
    status = _RAN_ALL
    n_done = 0
    for t in range(n_steps):
        T = a - b * k_g
        if have_sigma == 0:
            denom = 1.0 - T * T
            if denom <= 0.0:
                status = _UNSTABLE
                K_fail[0, 0] = k_g
                break
            sig = s0 / denom
        if sig <= 0.0:
            status = _UNSTABLE
            K_fail[0, 0] = k_g
            break
        P = (q + k_g * k_g * r) / (1.0 - T * T)
        E = (r + b * b * P) * k_g - b * P * a
        gk = 2.0 * E * sig
        U = k_g * k_g * sig
        c_i = sig * q + U * r
        psi = gamma_c * ((q - qb) ** 2 + (r - rb) ** 2)
        GQ = sig - sig_e - 2.0 * gamma_c * (q - qb)
        GR = U - u_e - 2.0 * gamma_c * (r - rb)
        Qp = min(max(q + GQ, aQ), bQ)
        Rp = min(max(r + GR, aR), bR)
        lsq = gk * gk + (Qp - q) ** 2 + (Rp - r) ** 2
        out_cost[t] = c_i
        out_m[t] = c_i - (sig_e * q + u_e * r) - psi
        out_lsq[t] = lsq
        out_signorm[t] = sig
        out_sigmineig[t] = sig
        out_knorm[t] = abs(k_g)
        out_kdist[t] = abs(k_g - ke)
        out_thdist[t] = np.sqrt((q - qb) ** 2 + (r - rb) ** 2)
        Kbuf[t, 0, 0] = k_g
        Qbuf[t, 0, 0] = q
        Rbuf[t, 0, 0] = r
        n_done = t + 1
        if lsq <= eps:
            status = _CONVERGED
            break
        if last_chunk == 1 and t == n_steps - 1:
            break

        k1 = k_g - eta * gk
        T1 = a - b * k1
        denom1 = 1.0 - T1 * T1
        if denom1 <= 0.0:
            status = _UNSTABLE
            K_fail[0, 0] = k1
            break
        sig1 = s0 / denom1
        if sig1 <= 0.0:
            status = _UNSTABLE
            K_fail[0, 0] = k1
            break
        U1 = k1 * k1 * sig1
        GQu = sig1 - sig_e - 2.0 * gamma_c * (q - qb)
        GRu = U1 - u_e - 2.0 * gamma_c * (r - rb)
        qn = min(max(q + lam * GQu, aQ), bQ)
        rn = min(max(r + lam * GRu, aR), bR)
        out_dksq[t] = (k1 - k_g) ** 2
        out_dthsq[t] = (qn - q) ** 2 + (rn - r) ** 2
        k_g = k1
        q = qn
        r = rn
        sig = sig1
        have_sigma = 1
    K[0, 0] = k_g
    Q[0, 0] = q
    R[0, 0] = r
    sigma[0, 0] = sig
    return n_done, status, K, Q, R, sigma, have_sigma


from .numerics import batched_rho  # noqa: E402  (shared with the estimators)


def solve_fast(inst, K_E, K0, theta0, config, box, reg, expert_moments):
    """Drive the compiled kernel in chunks and assemble a SolveResult."""
    from .solver import IterateTrace, SolveResult

    numerics = config.numerics
    d, k = inst.d, inst.k
    A = np.ascontiguousarray(inst.A)
    B = np.ascontiguousarray(inst.B)
    Sig0 = np.ascontiguousarray(inst.Sigma0)
    sig_e = np.ascontiguousarray(expert_moments[0])
    usig_e = np.ascontiguousarray(expert_moments[1])
    KE = np.ascontiguousarray(K_E.K)
    Qbar = np.ascontiguousarray(reg.Qbar)
    Rbar = np.ascontiguousarray(reg.Rbar)

    K = np.array(K0.K, dtype=np.float64)
    Q = np.array(theta0.Q, dtype=np.float64)
    R = np.array(theta0.R, dtype=np.float64)
    sigma = np.zeros((d, d))
    have_sigma = 0

    scalar_names = ("cost", "objective", "prox_grad_sq", "sigma_norm",
                    "sigma_mineig", "k_norm", "k_dist_expert", "theta_dist_center",
                    "dk_sq", "dtheta_sq", "rho")
    chunks = {name: [] for name in scalar_names}
    stride = config.stride
    stride_snaps = []  # (idx array, K stack, Q stack, R stack) per chunk
    tail = []  # same layout, trimmed to the window
    tail_window = max(1, int(config.tail_window))

    total = config.max_iter + 1
    done = 0
    converged = False
    failed = None
    K_fail = np.zeros((k, d))

    while done < total:
        n_steps = min(CHUNK, total - done)
        bufs = {name: np.full(n_steps, np.nan) for name in scalar_names[:-1]}
        Kbuf = np.zeros((n_steps, k, d))
        Qbuf = np.zeros((n_steps, d, d))
        Rbuf = np.zeros((n_steps, k, k))
        last_chunk = 1 if done + n_steps >= total else 0
        kernel = _run_chunk_scalar if (d == 1 and k == 1) else _run_chunk
        n_done, status, K, Q, R, sigma, have_sigma = kernel(
            A, B, Sig0, K, Q, R, sigma, have_sigma,
            sig_e, usig_e, KE, Qbar, Rbar, float(reg.gamma),
            box.alpha_q, box.beta_q, box.alpha_r, box.beta_r,
            config.eta, config.lam, config.eps, numerics.lyapunov_rtol,
            n_steps, last_chunk,
            bufs["cost"], bufs["objective"], bufs["prox_grad_sq"],
            bufs["sigma_norm"], bufs["sigma_mineig"], bufs["k_norm"],
            bufs["k_dist_expert"], bufs["theta_dist_center"],
            bufs["dk_sq"], bufs["dtheta_sq"], Kbuf, Qbuf, Rbuf, K_fail)
        if n_done:
            for name in scalar_names[:-1]:
                chunks[name].append(bufs[name][:n_done].copy())
            if config.record_rho:
                Ts = A[None, :, :] - np.einsum("ij,njk->nik", B, Kbuf[:n_done])
                chunks["rho"].append(batched_rho(Ts))
            else:
                chunks["rho"].append(np.full(n_done, np.nan))
            idx_chunk = done + np.arange(n_done, dtype=np.int64)
            on_stride = idx_chunk % stride == 0
            if np.any(on_stride):
                stride_snaps.append((idx_chunk[on_stride], Kbuf[:n_done][on_stride].copy(),
                                     Qbuf[:n_done][on_stride].copy(),
                                     Rbuf[:n_done][on_stride].copy()))
            lo = max(0, n_done - tail_window)
            tail.append((idx_chunk[lo:], Kbuf[lo:n_done].copy(),
                         Qbuf[lo:n_done].copy(), Rbuf[lo:n_done].copy()))
            kept = 0
            for pos in range(len(tail) - 1, -1, -1):
                kept += tail[pos][0].size
                if kept >= tail_window:
                    tail = tail[pos:]
                    break
        done += n_done
        if status == _CONVERGED:
            converged = True
            break
        if status == _UNSTABLE:
            failed = ("unstable", K_fail.copy(), done)
            break
        if status == _NUMFAIL:
            failed = ("numerical", K.copy(), done)
            break
        if n_done < n_steps:
            break

    arr = {name: (np.concatenate(chunks[name]) if chunks[name] else np.empty(0))
           for name in scalar_names}
    n = arr["cost"].shape[0]
    groups = stride_snaps + tail
    if groups:
        all_idx = np.concatenate([g[0] for g in groups])
        all_K = np.concatenate([g[1] for g in groups])
        all_Q = np.concatenate([g[2] for g in groups])
        all_R = np.concatenate([g[3] for g in groups])
        idx, first = np.unique(all_idx, return_index=True)
        tail_lo = n - min(tail_window, n)
        keep = (idx % stride == 0) | (idx >= tail_lo)
        idx, first = idx[keep], first[keep]
        K_snap, Q_snap, R_snap = all_K[first], all_Q[first], all_R[first]
    else:
        idx = np.empty(0, dtype=np.int64)
        K_snap = np.empty((0, k, d))
        Q_snap = np.empty((0, d, d))
        R_snap = np.empty((0, k, k))
    trace = IterateTrace(
        eta=config.eta, lam=config.lam, eps=config.eps,
        cost=arr["cost"], objective=arr["objective"],
        prox_grad_sq=arr["prox_grad_sq"], rho=arr["rho"],
        sigma_norm=arr["sigma_norm"], k_norm=arr["k_norm"],
        k_dist_expert=arr["k_dist_expert"],
        theta_dist_center=arr["theta_dist_center"],
        dk_sq=arr["dk_sq"], dtheta_sq=arr["dtheta_sq"],
        snap_idx=idx, K_snap=K_snap, Q_snap=Q_snap, R_snap=R_snap)

    if failed is not None:
        kind, K_bad, it = failed
        if kind == "unstable":
            from .lqr_core import spectral_radius
            rho = spectral_radius(A - B @ K_bad)
            raise InstabilityError(
                f"iterate {it} left the stabilizing set: rho = {rho:.6f}",
                rho=rho, iteration=it, trace=trace)
        raise InstabilityError(
            f"Lyapunov certificate failed at iterate {it}", iteration=it, trace=trace)

    gamma_index = n - 1 if converged else None
    return SolveResult(K=K.copy(), theta=CostParam(Q, R), trace=trace,
                       converged=converged,
                       status="converged" if converged else "max_iter",
                       n_iter=n - 1 if n else 0, gamma_index=gamma_index)
