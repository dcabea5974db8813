"""Experiment orchestration: config parsing, instance generation, solver
runs, condition checks, diagnostics, and trace/summary persistence.

Configs are YAML with nested sections (see docs/config_schema.md). Matrices
are row-major nested lists. All randomness is seeded from the config, so a
rerun with the same config produces byte-identical artifacts (wall-clock
recording is off by default for exactly that reason).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import conditions as cond
from . import diagnostics as diag
from .errors import ConfigError, InstabilityError, LqgailError, UnsupportedError
from .lqr_core import CostParam, LqrInstance, Policy, spectral_radius
from .riccati import check_jacobian_regularity, solve_dare
from .solver import (
    IterateTrace,
    QuadraticRegularizer,
    SolveResult,
    SolverConfig,
    ThetaBox,
    solve,
)

TRACE_COLUMNS = ("iter", "cost", "objective_m", "prox_grad_norm",
                 "rho_closed_loop", "K_dist_to_expert", "theta_dist_to_center",
                 "potential_P", "Z_local", "wall_time_ms")

SUMMARY_KEYS = ("converged", "gamma_eps_index", "final_prox_grad_norm",
                "final_K_error", "condition_verdicts", "upsilon_formula",
                "upsilon_measured")


# ---------------------------------------------------------------------------
# instance generation and (de)serialization


def gen_instance(d: int, k: int, seed: int, target_rho: float) -> dict:
    """Random instance: A scaled to the target spectral radius, B with
    i.i.d. normal entries, Sigma0 = I + W W' / d (so its floor eigenvalue
    is at least one). Deterministic given the seed."""
    if d < 1 or k < 1:
        raise ConfigError("d and k must be >= 1")
    if not (0.0 < target_rho < 1.5):
        raise ConfigError("target spectral radius must lie in (0, 1.5)")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    rho = spectral_radius(A)
    if rho < 1e-12:
        A = A + np.eye(d)
        rho = spectral_radius(A)
    A = A * (target_rho / rho)
    B = rng.standard_normal((d, k))
    W = rng.standard_normal((d, d))
    Sigma0 = np.eye(d) + W @ W.T / d
    return {"d": d, "k": k, "seed": seed, "target_rho": target_rho,
            "A": A.tolist(), "B": B.tolist(),
            "Sigma0": (0.5 * (Sigma0 + Sigma0.T)).tolist()}


def dump_instance(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")


def load_instance_file(path) -> LqrInstance:
    data = json.loads(Path(path).read_text())
    return LqrInstance(A=data["A"], B=data["B"], Sigma0=data["Sigma0"])


# ---------------------------------------------------------------------------
# config parsing


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment description."""

    instance: LqrInstance
    expert_policy: Policy | None
    theta_tilde: CostParam | None
    box: ThetaBox
    reg: QuadraticRegularizer
    k0: Policy
    theta0: CostParam | None
    eta: float | None  # None means "auto"
    lam: float | None
    eps: float
    max_iter: int
    seed: int
    estimate_conditions: bool
    condition_samples: int
    region_bound: float | None
    estimate_local: bool
    local_radius: float
    local_samples: int
    estimator: dict | None
    trace_path: str | None
    summary_path: str | None
    csv_stride: int
    sidecar: bool
    record_wall_time: bool
    solver_fast: bool | None
    tail_window: int
    snapshot_stride: int | None
    raw: dict = field(repr=False, default_factory=dict)


def _need(section, key, path):
    if key not in section:
        raise ConfigError(f"missing required field '{path}'", field=path)
    return section[key]


def _matrix(value, path):
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{path}' is not a numeric matrix: {exc}",
                          field=path) from exc
    if arr.ndim != 2:
        raise ConfigError(f"field '{path}' must be a nested (row-major) list",
                          field=path)
    return arr


def parse_config(path) -> ExperimentConfig:
    """Load and validate a YAML experiment config.

    Raises ConfigError with the offending field (or the YAML parser's
    line/column for syntax errors).
    """
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML syntax error{where}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return build_config(raw, base_dir=Path(path).parent)


def build_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    seed = int(raw.get("seed", 0))

    inst_sec = _need(raw, "instance", "instance")
    if "path" in inst_sec:
        p = Path(inst_sec["path"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        instance = load_instance_file(p)
    else:
        instance = LqrInstance(A=_matrix(_need(inst_sec, "A", "instance.A"), "instance.A"),
                               B=_matrix(_need(inst_sec, "B", "instance.B"), "instance.B"),
                               Sigma0=_matrix(_need(inst_sec, "Sigma0", "instance.Sigma0"),
                                              "instance.Sigma0"))

    exp_sec = _need(raw, "expert", "expert")
    has_ke = "K_E" in exp_sec
    has_tt = "theta_tilde" in exp_sec
    if has_ke == has_tt:
        raise ConfigError("exactly one of expert.K_E / expert.theta_tilde is required",
                          field="expert")
    expert_pol = Policy(_matrix(exp_sec["K_E"], "expert.K_E")) if has_ke else None
    theta_tilde = None
    if has_tt:
        tt = exp_sec["theta_tilde"]
        theta_tilde = CostParam(_matrix(_need(tt, "Q", "expert.theta_tilde.Q"),
                                        "expert.theta_tilde.Q"),
                                _matrix(_need(tt, "R", "expert.theta_tilde.R"),
                                        "expert.theta_tilde.R"))

    box_sec = _need(raw, "box", "box")
    box = ThetaBox(alpha_q=float(_need(box_sec, "alpha_q", "box.alpha_q")),
                   beta_q=float(_need(box_sec, "beta_q", "box.beta_q")),
                   alpha_r=float(_need(box_sec, "alpha_r", "box.alpha_r")),
                   beta_r=float(_need(box_sec, "beta_r", "box.beta_r")))

    reg_sec = _need(raw, "regularizer", "regularizer")
    gamma = float(_need(reg_sec, "gamma", "regularizer.gamma"))
    center = reg_sec.get("center", "box_mid")
    d, k = instance.d, instance.k
    if center == "theta_tilde":
        if theta_tilde is None:
            raise ConfigError("regularizer.center: theta_tilde is not given",
                              field="regularizer.center")
        qbar, rbar = theta_tilde.Q, theta_tilde.R
    elif center == "box_mid":
        mid = box.mid_param(d, k)
        qbar, rbar = mid.Q, mid.R
    elif isinstance(center, dict):
        qbar = _matrix(_need(center, "Q", "regularizer.center.Q"), "regularizer.center.Q")
        rbar = _matrix(_need(center, "R", "regularizer.center.R"), "regularizer.center.R")
    else:
        raise ConfigError("regularizer.center must be 'theta_tilde', 'box_mid', or {Q, R}",
                          field="regularizer.center")
    reg = QuadraticRegularizer(gamma=gamma, Qbar=qbar, Rbar=rbar)
    if not box.contains_matrix(reg.Qbar, "q") or not box.contains_matrix(reg.Rbar, "r"):
        raise ConfigError("regularizer center lies outside the box", field="regularizer.center")

    init_sec = raw.get("init", {})
    if "K0" in init_sec:
        k0 = Policy(_matrix(init_sec["K0"], "init.K0"))
    elif "perturb_expert" in init_sec:
        if theta_tilde is None and expert_pol is None:
            raise ConfigError("init.perturb_expert needs an expert", field="init")
        base = expert_pol if expert_pol is not None else Policy(
            solve_dare(instance, theta_tilde).Kstar)
        rng = np.random.default_rng(seed)
        k0 = Policy(base.K + float(init_sec["perturb_expert"])
                    * rng.standard_normal((k, d)))
    else:
        raise ConfigError("init needs K0 or perturb_expert", field="init")
    theta0 = None
    th0 = init_sec.get("theta0", "center")
    if isinstance(th0, dict):
        theta0 = CostParam(_matrix(_need(th0, "Q", "init.theta0.Q"), "init.theta0.Q"),
                           _matrix(_need(th0, "R", "init.theta0.R"), "init.theta0.R"))
    elif th0 != "center":
        raise ConfigError("init.theta0 must be 'center' or {Q, R}", field="init.theta0")

    steps = _need(raw, "stepsizes", "stepsizes")
    if steps == "auto":
        eta = lam = None
    else:
        eta = float(_need(steps, "eta", "stepsizes.eta"))
        lam = float(_need(steps, "lambda", "stepsizes.lambda"))
        if eta <= 0 or lam <= 0:
            raise ConfigError("stepsizes must be positive", field="stepsizes")

    eps = float(raw.get("eps", 1e-12))
    max_iter = int(raw.get("max_iter", 100_000))
    if eps <= 0 or max_iter < 1:
        raise ConfigError("eps must be positive and max_iter >= 1", field="eps")

    cond_sec = raw.get("conditions", {})
    est_sec = raw.get("estimator")
    out_sec = raw.get("output", {})
    solver_sec = raw.get("solver", {})
    fast = solver_sec.get("fast", "auto")
    if fast not in ("auto", True, False):
        raise ConfigError("solver.fast must be auto/true/false", field="solver.fast")

    return ExperimentConfig(
        instance=instance, expert_policy=expert_pol, theta_tilde=theta_tilde,
        box=box, reg=reg, k0=k0, theta0=theta0, eta=eta, lam=lam, eps=eps,
        max_iter=max_iter, seed=seed,
        estimate_conditions=bool(cond_sec.get("estimate", True)),
        condition_samples=int(cond_sec.get("samples", 48)),
        region_bound=(None if cond_sec.get("region_bound", "auto") == "auto"
                      else float(cond_sec["region_bound"])),
        estimate_local=bool(cond_sec.get("local", True)),
        local_radius=float(cond_sec.get("local_radius", 1e-3)),
        local_samples=int(cond_sec.get("local_samples", 10)),
        estimator=est_sec,
        trace_path=out_sec.get("trace"), summary_path=out_sec.get("summary"),
        csv_stride=max(1, int(out_sec.get("stride", 1))),
        sidecar=bool(out_sec.get("sidecar", True)),
        record_wall_time=bool(out_sec.get("record_wall_time", False)),
        solver_fast=None if fast == "auto" else bool(fast),
        tail_window=int(solver_sec.get("tail_window", 512)),
        snapshot_stride=solver_sec.get("snapshot_stride"),
        raw=raw)


# ---------------------------------------------------------------------------
# runs


def resolve_expert(cfg: ExperimentConfig) -> Policy:
    if cfg.expert_policy is not None:
        return cfg.expert_policy
    return Policy(solve_dare(cfg.instance, cfg.theta_tilde).Kstar)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and not np.isfinite(x):
        return ""
    return repr(float(x))


def write_trace_csv(path, trace: IterateTrace, stride: int = 1,
                    wall_time_ms: float | None = None) -> None:
    """Write the per-iteration CSV with the canonical column order."""
    rows = [",".join(TRACE_COLUMNS)]
    n = trace.n
    pot = trace.potential
    z = trace.z_local
    idx = list(range(0, n, stride))
    if idx and idx[-1] != n - 1:
        idx.append(n - 1)
    for i in idx:
        wall = wall_time_ms if (wall_time_ms is not None and i == n - 1) else None
        rows.append(",".join([
            str(i),
            _fmt(trace.cost[i]),
            _fmt(trace.objective[i]),
            _fmt(float(np.sqrt(trace.prox_grad_sq[i]))),
            _fmt(trace.rho[i]),
            _fmt(trace.k_dist_expert[i]),
            _fmt(trace.theta_dist_center[i]),
            _fmt(pot[i] if pot is not None and i < len(pot) else None),
            _fmt(z[i] if z is not None else None),
            _fmt(wall),
        ]))
    Path(path).write_text("\n".join(rows) + "\n")


def write_sidecar(path, trace: IterateTrace, extra: dict | None = None) -> None:
    data = {
        "eta": trace.eta, "lam": trace.lam, "eps": trace.eps,
        "cost": trace.cost, "objective": trace.objective,
        "prox_grad_sq": trace.prox_grad_sq, "rho": trace.rho,
        "sigma_norm": trace.sigma_norm, "k_norm": trace.k_norm,
        "k_dist_expert": trace.k_dist_expert,
        "theta_dist_center": trace.theta_dist_center,
        "dk_sq": trace.dk_sq, "dtheta_sq": trace.dtheta_sq,
        "snap_idx": trace.snap_idx, "K_snap": trace.K_snap,
        "Q_snap": trace.Q_snap, "R_snap": trace.R_snap,
    }
    if trace.potential is not None:
        data["potential"] = trace.potential
    if trace.z_local is not None:
        data["z_local"] = trace.z_local
    for key, val in (extra or {}).items():
        data[key] = val
    np.savez(path, **data)


def load_sidecar(path) -> IterateTrace:
    with np.load(path) as z:
        d = {k: z[k] for k in z.files}
    trace = IterateTrace(
        eta=float(d["eta"]), lam=float(d["lam"]), eps=float(d["eps"]),
        cost=d["cost"], objective=d["objective"], prox_grad_sq=d["prox_grad_sq"],
        rho=d["rho"], sigma_norm=d["sigma_norm"], k_norm=d["k_norm"],
        k_dist_expert=d["k_dist_expert"], theta_dist_center=d["theta_dist_center"],
        dk_sq=d["dk_sq"], dtheta_sq=d["dtheta_sq"], snap_idx=d["snap_idx"],
        K_snap=d["K_snap"], Q_snap=d["Q_snap"], R_snap=d["R_snap"],
        potential=d.get("potential"), z_local=d.get("z_local"))
    return trace


def _condition_verdicts(cfg: ExperimentConfig, consts, eta, lam,
                        theta_for_c4: CostParam | None):
    out = {}
    rep1 = cond.check_condition1(consts, eta, lam)
    out["condition1"] = {"passed": bool(rep1.passed), "binding": rep1.binding,
                         "details": _jsonable(rep1.details)}
    for name, fn in (("condition2", lambda: cond.check_condition2(consts)),
                     ("condition3", lambda: cond.check_condition3(consts, eta, lam)),
                     ("condition5", lambda: cond.check_condition5(consts, eta, lam))):
        try:
            rep = fn()
            out[name] = {"passed": bool(rep.passed), "binding": rep.binding,
                         "details": _jsonable(rep.details)}
        except UnsupportedError as exc:
            out[name] = {"passed": None, "reason": str(exc)}
    if theta_for_c4 is not None:
        try:
            rep4 = check_jacobian_regularity(cfg.instance, theta_for_c4)
            out["condition4"] = {"passed": bool(rep4.ok), "sigma_min": rep4.sigma_min,
                                 "sigma_max": rep4.sigma_max}
        except LqgailError as exc:
            out["condition4"] = {"passed": None, "reason": str(exc)}
    else:
        out["condition4"] = {"passed": None, "reason": "no converged theta available"}
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):  # before int: bool subclasses int
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


@dataclass
class SolveArtifacts:
    result: SolveResult | None
    exit_code: int
    summary: dict
    consts: cond.ConditionConstants | None
    expert: Policy


def run_solve(cfg: ExperimentConfig) -> SolveArtifacts:
    """Full solve pipeline: expert, constants/estimates, solve, diagnostics,
    and artifact writing. Exit code 0 = converged, 2 = hit max_iter,
    3 = instability (partial trace preserved)."""
    expert = resolve_expert(cfg)
    consts = cond.compute_constants(cfg.instance, cfg.k0, cfg.box, cfg.reg, expert)
    if cfg.estimate_conditions:
        region = cfg.region_bound if cfg.region_bound is not None else \
            cond.default_region_bound(consts)
        est = cond.estimate_lipschitz(cfg.instance, cfg.box, region,
                                      samples=cfg.condition_samples, seed=cfg.seed)
        consts = consts.with_lipschitz(est)
    if cfg.eta is None:
        eta, lam, consts = cond.auto_stepsizes(cfg.instance, cfg.k0, cfg.box,
                                               cfg.reg, expert, consts=consts)
    else:
        eta, lam = cfg.eta, cfg.lam

    scfg = SolverConfig(eta=eta, lam=lam, eps=cfg.eps, max_iter=cfg.max_iter,
                        snapshot_stride=cfg.snapshot_stride,
                        tail_window=cfg.tail_window, fast=cfg.solver_fast)
    t0 = time.perf_counter()
    status_exit = 0
    try:
        result = solve(cfg.instance, expert, cfg.k0, scfg, cfg.box, cfg.reg,
                       theta0=cfg.theta0)
        trace = result.trace
        status_exit = 0 if result.converged else 2
    except InstabilityError as exc:
        result = None
        trace = exc.trace
        status_exit = 3
    elapsed_ms = (time.perf_counter() - t0) * 1e3

    ups_formula = None
    ups_measured = None
    theta_star = result.theta if result is not None else None
    if trace is not None and consts.nu_v is not None:
        try:
            pot = diag.potential_trace(trace, consts)
            trace.potential = np.concatenate([pot.p, [np.nan] * (trace.n - len(pot.p))]) \
                if len(pot.p) < trace.n else pot.p
        except (UnsupportedError, LqgailError):
            pass
    if (result is not None and result.converged and cfg.estimate_local
            and theta_star is not None):
        try:
            loc = cond.estimate_local_moduli(cfg.instance, cfg.box, cfg.reg,
                                             theta_star, expert,
                                             radius=cfg.local_radius,
                                             samples=cfg.local_samples,
                                             seed=cfg.seed)
            consts = consts.with_local(loc)
            rate = diag.local_rate(trace, cfg.instance, (result.K, theta_star), consts)
            ups_formula = rate.upsilon_formula
            ups_measured = rate.upsilon_measured
        except (UnsupportedError, LqgailError):
            pass

    verdicts = _condition_verdicts(cfg, consts, eta, lam, theta_star)
    final_l = float(np.sqrt(trace.prox_grad_sq[-1])) if trace is not None and trace.n else None
    final_k_err = float(trace.k_dist_expert[-1]) if trace is not None and trace.n else None
    summary = {
        "converged": bool(result.converged) if result is not None else False,
        "gamma_eps_index": result.gamma_index if result is not None else None,
        "final_prox_grad_norm": final_l,
        "final_K_error": final_k_err,
        "condition_verdicts": verdicts,
        "upsilon_formula": _jsonable(ups_formula),
        "upsilon_measured": _jsonable(ups_measured),
        "status": ("converged" if status_exit == 0 else
                   "max_iter" if status_exit == 2 else "instability"),
        "n_iter": int(trace.n - 1) if trace is not None and trace.n else None,
        "eta": eta,
        "lambda": lam,
        "seed": cfg.seed,
    }

    if trace is not None and cfg.trace_path:
        write_trace_csv(cfg.trace_path, trace, stride=cfg.csv_stride,
                        wall_time_ms=elapsed_ms if cfg.record_wall_time else None)
        if cfg.sidecar:
            extra = {"K_E": expert.K}
            if result is not None:
                extra["K_final"] = result.K
                extra["Q_final"] = result.theta.Q
                extra["R_final"] = result.theta.R
            write_sidecar(str(Path(cfg.trace_path).with_suffix(".npz")), trace, extra)
    if cfg.summary_path:
        Path(cfg.summary_path).write_text(
            json.dumps(_jsonable(summary), sort_keys=True, indent=1) + "\n")
    return SolveArtifacts(result=result, exit_code=status_exit, summary=summary,
                          consts=consts, expert=expert)


def run_check(cfg: ExperimentConfig) -> dict:
    """Condition verdicts and recommended stepsizes without running the solver."""
    expert = resolve_expert(cfg)
    consts = cond.compute_constants(cfg.instance, cfg.k0, cfg.box, cfg.reg, expert)
    if cfg.estimate_conditions:
        region = cfg.region_bound if cfg.region_bound is not None else \
            cond.default_region_bound(consts)
        est = cond.estimate_lipschitz(cfg.instance, cfg.box, region,
                                      samples=cfg.condition_samples, seed=cfg.seed)
        consts = consts.with_lipschitz(est)
    if cfg.eta is None:
        eta, lam, consts = cond.auto_stepsizes(cfg.instance, cfg.k0, cfg.box,
                                               cfg.reg, expert, consts=consts)
    else:
        eta, lam = cfg.eta, cfg.lam
    b1, b2, b3, ratio = cond.condition1_bounds(consts)
    theta_c4 = cfg.theta_tilde
    verdicts = _condition_verdicts(cfg, consts, eta, lam, theta_c4)
    return {
        "eta": eta, "lambda": lam,
        "condition_verdicts": verdicts,
        "constants": _jsonable({
            "alpha": consts.alpha, "mu": consts.mu, "sigma_theta": consts.sigma_theta,
            "M": consts.M, "F": consts.F, "kappa1": consts.kappa1,
            "kappa2": consts.kappa2, "cost_cap": consts.cost_cap,
            "tau_v": consts.tau_v, "nu_v": consts.nu_v,
            "eta_bounds": [b1, b2, b3], "ratio_bound": ratio}),
    }


def run_diag(trace_path, cfg: ExperimentConfig) -> dict:
    """Diagnostics over a stored trace (sidecar required for the full set)."""
    sidecar = Path(trace_path).with_suffix(".npz")
    if not sidecar.exists():
        raise ConfigError(f"diagnostics need the sidecar file {sidecar} "
                          "(rerun solve with output.sidecar: true)")
    trace = load_sidecar(sidecar)
    with np.load(sidecar) as z:
        K_E = z["K_E"] if "K_E" in z.files else None
        K_final = z["K_final"] if "K_final" in z.files else None
        Q_final = z["Q_final"] if "Q_final" in z.files else None
        R_final = z["R_final"] if "R_final" in z.files else None
    expert = Policy(K_E) if K_E is not None else resolve_expert(cfg)
    consts = cond.compute_constants(cfg.instance, cfg.k0, cfg.box, cfg.reg, expert)
    if cfg.estimate_conditions:
        region = cfg.region_bound if cfg.region_bound is not None else \
            cond.default_region_bound(consts)
        est = cond.estimate_lipschitz(cfg.instance, cfg.box, region,
                                      samples=cfg.condition_samples, seed=cfg.seed)
        consts = consts.with_lipschitz(est)
    report: dict = {}
    env = diag.stability_envelope(trace, consts)
    report["envelope"] = _jsonable({
        "clean": env.clean, "cost_cap": env.cost_cap,
        "cost_violations": env.cost_violations, "k_violations": env.k_violations,
        "sigma_violations": env.sigma_violations, "rho_violations": env.rho_violations,
        "max_rho": env.max_rho})
    try:
        pot = diag.potential_trace(trace, consts)
        report["potential"] = _jsonable({
            "violations": pot.violations, "checked": pot.checked,
            "s": pot.s, "phi": [pot.phi1, pot.phi2, pot.phi3],
            "s_feasible": pot.s_feasible,
            "phi_feasible": [pot.phi1_feasible, pot.phi2_feasible, pot.phi3_feasible],
            "violations_feasible": pot.violations_feasible})
    except (UnsupportedError, LqgailError) as exc:
        report["potential"] = {"skipped": str(exc)}
    converged = trace.n and trace.prox_grad_sq[-1] <= trace.eps
    if converged and K_final is not None and Q_final is not None:
        theta_star = CostParam(Q_final, R_final)
        try:
            loc = cond.estimate_local_moduli(cfg.instance, cfg.box, cfg.reg,
                                             theta_star, expert,
                                             radius=cfg.local_radius,
                                             samples=cfg.local_samples, seed=cfg.seed)
            consts = consts.with_local(loc)
            rate = diag.local_rate(trace, cfg.instance, (K_final, theta_star), consts)
            report["local_rate"] = _jsonable({
                "upsilon_formula": rate.upsilon_formula,
                "upsilon_measured": rate.upsilon_measured,
                "onset_index": rate.onset_index, "r_squared": rate.r_squared,
                "contracting": rate.contracting})
        except (UnsupportedError, LqgailError) as exc:
            report["local_rate"] = {"skipped": str(exc)}
    else:
        report["local_rate"] = {"skipped": "trace not converged"}
    try:
        slope = diag.prox_decay_slope(trace.prox_grad_sq)
        report["prox_decay"] = _jsonable({
            "slope": slope.slope, "window": slope.window,
            "i_lo": slope.i_lo, "i_hi": slope.i_hi})
    except LqgailError as exc:
        report["prox_decay"] = {"skipped": str(exc)}
    return report
