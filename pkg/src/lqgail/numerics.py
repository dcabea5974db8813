"""Centralized numerical tolerances and small dense-matrix helpers.

Every tolerance used by the library lives in :class:`NumericsConfig` so the
test suite has a single tuning surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class NumericsConfig:
    # symmetry / definiteness gates on inputs
    symmetry_atol: float = 1e-12
    projection_asym_atol: float = 1e-9

    # discrete Lyapunov solves
    lyapunov_rtol: float = 1e-10
    kron_max_dim: int = 20
    doubling_max_iter: int = 400
    doubling_divergence: float = 1e12

    # Riccati value iteration
    dare_step_tol: float = 1e-13
    dare_rtol: float = 1e-10
    dare_max_iter: int = 100_000
    dare_divergence: float = 1e12

    # stabilizing-policy test: strict rho < 1 - margin
    stability_margin: float = 0.0

    # identity cross-checks
    cost_cross_rtol: float = 1e-8
    identity_rtol: float = 1e-8
    inequality_slack: float = 1e-9
    potential_rtol: float = 1e-9

    # finite differences
    fd_step: float = 1e-6
    grad_check_rtol: float = 1e-5


DEFAULT_NUMERICS = NumericsConfig()


def as_matrix(x, name, rows=None, cols=None):
    """Coerce to a float64 2-d array, checking shape and finiteness."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"{name} must be a 2-d matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ContractError(f"{name} must have {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ContractError(f"{name} must have {cols} columns, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} contains non-finite entries")
    return m


def symmetrize(m):
    return 0.5 * (m + m.T)


def max_asymmetry(m):
    return float(np.max(np.abs(m - m.T))) if m.size else 0.0


def check_symmetric(m, name, atol):
    asym = max_asymmetry(m)
    if asym > atol:
        raise ContractError(f"{name} is not symmetric: max asymmetry {asym:.3e} > {atol:.3e}")
    return symmetrize(m)


def frob(m):
    return float(np.linalg.norm(m))


def spectral_norm_sym(m):
    """Spectral norm of a symmetric matrix via eigvalsh."""
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(m))))


def min_eig_sym(m):
    return float(np.min(np.linalg.eigvalsh(m)))


def eig_clip(m, lo, hi):
    """Reconstruct a symmetric matrix with eigenvalues clipped to [lo, hi]."""
    w, u = np.linalg.eigh(m)
    return symmetrize((u * np.clip(w, lo, hi)) @ u.T)


def rel_close(a, b, rtol):
    """|a-b| <= rtol * max(1, |a|, |b|), the relative test used by the cross-checks."""
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))


def batched_rho(Ts):
    """Spectral radii of a stack of small square matrices.

    Closed forms for d <= 2 (trace/determinant), general eigvals above.
    """
    Ts = np.asarray(Ts, dtype=np.float64)
    d = Ts.shape[-1]
    if d == 1:
        return np.abs(Ts[..., 0, 0])
    if d == 2:
        tr = Ts[..., 0, 0] + Ts[..., 1, 1]
        det = Ts[..., 0, 0] * Ts[..., 1, 1] - Ts[..., 0, 1] * Ts[..., 1, 0]
        disc = tr * tr - 4.0 * det
        out = np.empty(Ts.shape[:-2])
        real = disc >= 0.0
        sq = np.sqrt(np.where(real, disc, 0.0))
        out[real] = 0.5 * np.maximum(np.abs(tr + sq), np.abs(tr - sq))[real]
        out[~real] = np.sqrt(det[~real])
        return out
    return np.max(np.abs(np.linalg.eigvals(Ts)), axis=-1)
