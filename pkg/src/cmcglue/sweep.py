"""Shrink-parameter sweep: run the glue/repair/solve pipeline per epsilon,
measure the weighted norms and point-particle limit errors, fit log-log
rates against their target exponents, and emit CSV + JSON + SVG reports.

Rate acceptance is one-sided (slope >= target - margin): the targets come
from upper bounds, so faster measured decay is a pass.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .gluing import ConfigError, Cutoff, GluedData, GluingConfig, weight_for_config
from .lichnerowicz import (
    LichnerowiczProblem,
    n_residual,
    picard_solve,
    transformed_hamiltonian_residual,
    transformed_momentum_residual,
)
from .models import bowen_york_ae, cosmological_background
from .modes import RepairResult, repair_momentum
from .norms import NormSpec, weighted_norm
from .radial import (
    CmcExtrinsicCurvature,
    DiagRadialTensor,
    RadialGrid,
    RadialMetric,
    RadialVectorField,
    TraceFreeRadialTensor,
    covariant_modulus,
    momentum_residual,
)


class AdmissibilityError(ValueError):
    pass


DEFAULT_EPSILONS = tuple(2.0**-k for k in range(4, 10))


@dataclass(frozen=True)
class SweepConfig:
    """Sweep parameters; every field maps to a config-file key / CLI flag."""

    epsilons: tuple = DEFAULT_EPSILONS
    nu: float = 1.75
    C: float = 2.0
    grid_n: int = 1024
    grid_rmin: float | None = None  # per-epsilon C*eps/2 when None
    grid_rmax: float = 3.0
    tol_linear: float = 1e-8
    tol_picard: float = 1e-8
    M: float = 0.2
    Lambda: float = 0.2
    tau: float = 0.0
    mu0_c: float = 0.5
    out_dir: str = "runs/default"
    parallel: bool = False
    seed: int = 0

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if len(eps) < 1:
            raise ConfigError("need at least one epsilon")
        if any(e2 >= e1 for e1, e2 in zip(eps[:-1], eps[1:])):
            raise ConfigError("epsilon list must be strictly decreasing")
        cap = 1.0 / (2.0 * self.C) ** 2
        if any(e > cap * (1.0 + 1e-12) or e <= 0.0 for e in eps):
            raise ConfigError(f"every epsilon must lie in (0, (2C)^-2] = (0, {cap:.6g}]")
        if not 1.5 < self.nu < 2.0:
            raise ConfigError("nu must lie strictly inside (3/2, 2)")

    # -- derived compact windows for the limit errors -----------------------

    @property
    def outer_window(self) -> tuple:
        ref = self.epsilons[-4] if len(self.epsilons) >= 4 else self.epsilons[0]
        lo = 8.0 * math.sqrt(ref) * 1.05
        hi = min(0.92 * self.grid_rmax, 2.0 * lo)
        return (lo, hi)

    @property
    def inner_window(self) -> tuple:
        lo = 1.05 * self.C / 2.0
        hi = min(0.95 / (2.0 * math.sqrt(self.epsilons[0])), 2.0 * lo)
        return (lo, hi)


def rate_targets(nu: float) -> dict:
    """Target slope per fitted quantity (uniform-bound quantities get 0)."""
    return {
        "mu_norm_m1": 0.0,
        "mu_norm_m2_outer": 0.0,
        "mu_norm_0_inner": 1.0,
        "div_mu_norm": nu / 2.0 - 1.0,
        "repair_X_norm": nu / 2.0,
        "repair_dmu_norm": nu / 2.0,
        "musq_shift_norm": nu / 2.0,
        "musq_shift_outer": nu / 2.0,
        "musq_norm_2": 0.0,
        "musq_norm_0_outer": 0.0,
        "musq_norm_np1_inner": nu - 1.0,
        "musq_norm_nu_collar": nu / 2.0,
        "defect_norm": nu / 2.0,
        "phi_dev_norm": nu / 2.0,
        "ord_metric_err_c0": nu / 2.0,
        "ord_metric_err_c1": nu / 2.0,
        "ord_curv_err_c0": nu / 2.0,
        "ord_curv_err_c1": nu / 2.0,
        "scaled_metric_err_c0": 1.0 - nu / 2.0,
        "scaled_metric_err_c1": 1.0 - nu / 2.0,
        "scaled_curv_err_c0": 1.0 - nu / 2.0,
        "scaled_curv_err_c1": 1.0 - nu / 2.0,
    }


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    quantity: str
    epsilons: tuple
    values: tuple
    slope: float
    intercept: float
    r2: float
    target: float
    margin: float

    @property
    def passed(self) -> bool:
        return self.slope >= self.target - self.margin


def fit_rate(epsilons, values, target: float, margin: float = 0.2, quantity: str = "") -> RateFit:
    """Least-squares log-log fit; pass iff slope >= target - margin."""
    eps = np.asarray(epsilons, dtype=float)
    vals = np.asarray(values, dtype=float)
    if eps.size < 4:
        raise ValueError("need at least 4 points for a rate fit")
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0.0):
        raise ValueError("rate fit needs finite positive values")
    x = np.log10(eps)
    y = np.log10(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(
        quantity=quantity,
        epsilons=tuple(float(e) for e in eps),
        values=tuple(float(v) for v in vals),
        slope=float(slope),
        intercept=float(intercept),
        r2=r2,
        target=float(target),
        margin=float(margin),
    )


# ---------------------------------------------------------------------------
# one epsilon of the pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CaseResult:
    epsilon: float
    rows: dict
    notes: tuple = ()


def build_case(cfg: SweepConfig, eps: float) -> GluedData:
    """Glued data for one epsilon of the sweep's model family."""
    from .gluing import build_glued_data

    rmin = cfg.grid_rmin if cfg.grid_rmin is not None else cfg.C * eps / 2.0
    grid = RadialGrid.make(rmin, cfg.grid_rmax, cfg.grid_n, "log")
    gcfg = GluingConfig(C=cfg.C, epsilon=eps, nu=cfg.nu, grid=grid)
    m_side = cosmological_background(cfg.Lambda, cfg.tau)
    ae = bowen_york_ae(cfg.M, cfg.mu0_c)
    return build_glued_data(gcfg, m_side, ae, Cutoff())


def _ck_norm(profile, g, j_max: int):
    """C^k numbers sum_j sup |nabla^j T| for j <= j_max over the given mask."""
    sups = []
    for j in range(j_max + 1):
        sups.append(covariant_modulus(profile, g, j))
    return sups


def limit_errors(
    cfg: SweepConfig,
    glued: GluedData,
    repair: RepairResult,
    phi: np.ndarray,
    k_max: int = 1,
) -> dict:
    """Point-particle limit errors on the derived compact windows.

    Ordinary errors compare the transformed data against the background on
    the outer window (in the background metric); scaled errors compare the
    1/eps^2-rescaled data against the AE seed on the inner window (in the
    seed metric).  Raises if either window touches a transition band.
    """
    eps = glued.cfg.epsilon
    se = glued.cfg.sqrt_eps
    grid = glued.grid
    r = grid.r
    out_lo, out_hi = cfg.outer_window
    in_lo, in_hi = cfg.inner_window

    if out_lo <= 8.0 * se or out_hi > grid.rmax:
        raise AdmissibilityError("compact set not admissible for this epsilon (outer)")
    if eps * in_hi >= 0.5 * se or eps * in_lo < grid.rmin * (1.0 - 1e-12):
        raise AdmissibilityError("compact set not admissible for this epsilon (inner)")

    rows: dict = {}
    tau = glued.tau
    m_tilde = repair.mu_tilde.m

    # --- ordinary limit on the outer window, measured in the background ---
    mask = (r >= out_lo) & (r <= out_hi)
    sub = RadialGrid(r[mask], grid.spacing)
    bg = RadialMetric(
        sub,
        "F",
        glued.m_side.F(sub.r),
        deriv1=glued.m_side.dF(sub.r),
        deriv2=glued.m_side.d2F(sub.r),
    )
    phi_m = phi[mask]
    e_scalar = phi_m**4 - 1.0
    metric_err = DiagRadialTensor(sub, e_scalar, e_scalar)
    mods = _ck_norm(metric_err, bg, min(k_max, 1))
    rows["ord_metric_err_c0"] = float(np.max(mods[0]))
    if k_max >= 1:
        rows["ord_metric_err_c1"] = rows["ord_metric_err_c0"] + float(np.max(mods[1]))

    mt = m_tilde[mask]
    t_r = 2.0 * phi_m**-2.0 * mt + tau / 3.0 * e_scalar
    t_t = -(phi_m**-2.0) * mt + tau / 3.0 * e_scalar
    curv_err = DiagRadialTensor(sub, t_r, t_t)
    mods = _ck_norm(curv_err, bg, min(k_max, 1))
    rows["ord_curv_err_c0"] = float(np.max(mods[0]))
    if k_max >= 1:
        rows["ord_curv_err_c1"] = rows["ord_curv_err_c0"] + float(np.max(mods[1]))

    # pre-conformal check: the glued metric coincides with the background here
    rows["pre_conformal_metric_err"] = float(
        np.max(np.abs(glued.metric.values[mask] - 1.0 / (1.0 - glued.m_side.F(sub.r))))
    )

    # --- scaled limit on the inner window, measured in the AE seed --------
    mask_i = (r >= eps * in_lo) & (r <= eps * in_hi)
    rho_grid = RadialGrid(r[mask_i] / eps, grid.spacing)
    ae = glued.scaled_ae.ae
    g0 = RadialMetric(
        rho_grid,
        "A",
        ae.a0(rho_grid.r),
        deriv1=ae.da0(rho_grid.r),
        deriv2=ae.d2a0(rho_grid.r),
    )
    phi_i = phi[mask_i]
    e0 = phi_i**4 - 1.0
    mods = _ck_norm(DiagRadialTensor(rho_grid, e0, e0), g0, min(k_max, 1))
    rows["scaled_metric_err_c0"] = float(np.max(mods[0]))
    if k_max >= 1:
        rows["scaled_metric_err_c1"] = rows["scaled_metric_err_c0"] + float(np.max(mods[1]))

    m0 = ae.m0(rho_grid.r) if ae.m0 is not None else np.zeros(rho_grid.n)
    m_scaled = eps * phi_i**-2.0 * m_tilde[mask_i]
    t_r = 2.0 * (m_scaled - m0) + tau / 3.0 * phi_i**4 * eps
    t_t = -(m_scaled - m0) + tau / 3.0 * phi_i**4 * eps
    mods = _ck_norm(DiagRadialTensor(rho_grid, t_r, t_t), g0, min(k_max, 1))
    rows["scaled_curv_err_c0"] = float(np.max(mods[0]))
    if k_max >= 1:
        rows["scaled_curv_err_c1"] = rows["scaled_curv_err_c0"] + float(np.max(mods[1]))
    return rows


def run_case(cfg: SweepConfig, eps: float) -> CaseResult:
    """Glue, measure, repair, solve, transform, and collect one epsilon."""
    glued = build_case(cfg, eps)
    grid = glued.grid
    g = glued.metric
    w = weight_for_config(glued.cfg)
    nu = cfg.nu
    se = glued.cfg.sqrt_eps
    rows: dict = {}
    notes: list = []

    mu = glued.mu
    K_glued = CmcExtrinsicCurvature(glued.tau, mu)
    U = w.preimage_interval(grid, lo=se / 4.0)
    V = w.preimage_interval(grid, hi=12.0 * se)
    Wc = w.preimage_interval(grid, lo=se / 4.0, hi=12.0 * se)

    rows["mu_norm_m1"] = weighted_norm(mu, g, w, NormSpec(nu=-1.0, tensor_type=(0, 2)))
    rows["mu_norm_m2_outer"] = weighted_norm(mu, g, w, NormSpec(nu=-2.0, tensor_type=(0, 2), subset=U))
    rows["mu_norm_0_inner"] = weighted_norm(mu, g, w, NormSpec(nu=0.0, tensor_type=(0, 2), subset=V))

    div_cov = momentum_residual(g, K_glued)
    div_sharp = RadialVectorField(grid, div_cov / g.a())
    rows["div_mu_norm"] = weighted_norm(div_sharp, g, w, NormSpec(nu=nu, tensor_type=(1, 0)))

    rep = repair_momentum(glued, weight=w)
    rows["repair_div_ratio"] = rep.report["div_ratio"]
    rows["repair_X_norm"] = rep.report["x_weighted_norm"]
    rows["repair_condition"] = rep.report["pivot_condition_estimate"]
    rows["div_sup_before"] = rep.report["div_sup_before"]
    dmu = TraceFreeRadialTensor(grid, rep.mu_tilde.m - mu.m)
    rows["repair_dmu_norm"] = weighted_norm(dmu, g, w, NormSpec(nu=nu - 2.0, tensor_type=(0, 2)))

    musq_t = rep.mu_tilde.modulus_sq()
    shift = np.abs(musq_t - mu.modulus_sq())
    rows["musq_shift_norm"] = weighted_norm(shift, g, w, NormSpec(nu=nu + 1.0))
    rows["musq_shift_outer"] = weighted_norm(shift, g, w, NormSpec(nu=nu, subset=U))
    rows["musq_norm_2"] = weighted_norm(musq_t, g, w, NormSpec(nu=2.0))
    rows["musq_norm_0_outer"] = weighted_norm(musq_t, g, w, NormSpec(nu=0.0, subset=U))
    rows["musq_norm_np1_inner"] = weighted_norm(musq_t, g, w, NormSpec(nu=nu + 1.0, subset=V))
    rows["musq_norm_nu_collar"] = weighted_norm(musq_t, g, w, NormSpec(nu=nu, subset=Wc))

    prob = LichnerowiczProblem(metric=g, mu_tilde=rep.mu_tilde, tau=glued.tau, Lambda=glued.Lambda)
    defect = n_residual(prob, np.ones(grid.n))
    rows["defect_norm"] = weighted_norm(defect, g, w, NormSpec(nu=nu + 1.0))

    phi, sol = picard_solve(prob, nu, tol=cfg.tol_picard, weight=w)
    rows["phi_dev_norm"] = sol.eta_norm
    rows["picard_iterations"] = float(sol.iterations)
    rows["picard_max_ratio"] = float(max(sol.contraction_ratios)) if sol.contraction_ratios else 0.0
    rows["picard_residual"] = sol.final_residual

    ham = transformed_hamiltonian_residual(prob, phi, eta=sol.eta)
    mom = transformed_momentum_residual(prob, phi)
    rows["closure_hamiltonian"] = float(np.max(np.abs(ham[2:-2])))
    rows["closure_momentum"] = float(np.max(np.abs(mom[2:-2])))

    try:
        rows.update(limit_errors(cfg, glued, rep, phi))
    except AdmissibilityError as exc:
        notes.append(str(exc))

    rows["status"] = 1.0
    return CaseResult(epsilon=eps, rows=rows, notes=tuple(notes))


def _case_worker(args):
    cfg, eps = args
    return run_case(cfg, eps)


# ---------------------------------------------------------------------------
# the sweep driver and report emission
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RunResult:
    cfg: SweepConfig
    cases: tuple
    fits: dict
    manifest: dict


def run_sweep(cfg: SweepConfig) -> RunResult:
    """Run every epsilon (a stage error records a failure row and the sweep
    continues), then fit the catalogued rates."""
    results: list = []
    if cfg.parallel and len(cfg.epsilons) > 1:
        with concurrent.futures.ProcessPoolExecutor() as pool:
            futures = {e: pool.submit(run_case, cfg, e) for e in cfg.epsilons}
            for e in cfg.epsilons:
                try:
                    results.append(futures[e].result())
                except Exception as exc:  # noqa: BLE001 - failure rows by contract
                    results.append(CaseResult(e, {"status": 0.0}, (f"{type(exc).__name__}: {exc}",)))
    else:
        for e in cfg.epsilons:
            try:
                results.append(run_case(cfg, e))
            except Exception as exc:  # noqa: BLE001
                results.append(CaseResult(e, {"status": 0.0}, (f"{type(exc).__name__}: {exc}",)))

    targets = rate_targets(cfg.nu)
    fits: dict = {}
    for name, target in targets.items():
        eps_v = [(c.epsilon, c.rows[name]) for c in results if name in c.rows]
        if len(eps_v) < 4:
            continue
        vals = np.array([v for _, v in eps_v])
        if np.any(vals <= 0.0) or np.any(~np.isfinite(vals)):
            continue
        fits[name] = fit_rate([e for e, _ in eps_v], vals, target, quantity=name)

    manifest = {
        "tool": "cmcglue",
        "version": __version__,
        "config": _config_dict(cfg),
        "windows": {"outer": list(cfg.outer_window), "inner": list(cfg.inner_window)},
        "cases": [
            {
                "epsilon": c.epsilon,
                "status": "ok" if c.rows.get("status") == 1.0 else "failed",
                "notes": list(c.notes),
            }
            for c in results
        ],
        "fits": {
            name: {
                "slope": f.slope,
                "intercept": f.intercept,
                "r2": f.r2,
                "target": f.target,
                "margin": f.margin,
                "passed": f.passed,
            }
            for name, f in sorted(fits.items())
        },
    }
    return RunResult(cfg=cfg, cases=tuple(results), fits=fits, manifest=manifest)


def _config_dict(cfg: SweepConfig) -> dict:
    d = asdict(cfg)
    d["epsilons"] = list(cfg.epsilons)
    return d


def csv_rows(run: RunResult) -> list:
    rows = []
    for case in sorted(run.cases, key=lambda c: -c.epsilon):
        for name in sorted(case.rows):
            rows.append((case.epsilon, name, case.rows[name]))
    return rows


def emit_report(run: RunResult, out_dir=None) -> dict:
    """Write results.csv, manifest.json, and one SVG per fitted quantity."""
    out = Path(out_dir if out_dir is not None else run.cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    csv_path = out / "results.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epsilon,quantity,value\n")
        for eps, name, value in csv_rows(run):
            fh.write(f"{format(eps, '.17g')},{name},{format(float(value), '.17g')}\n")
    paths["csv"] = str(csv_path)

    man_path = out / "manifest.json"
    with open(man_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(run.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["manifest"] = str(man_path)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "cmcglue"
    svg_paths = []
    for name, f in sorted(run.fits.items()):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        x = np.log10(np.array(f.epsilons))
        y = np.log10(np.array(f.values))
        ax.plot(x, y, "o", label="measured")
        ax.plot(x, f.slope * x + f.intercept, "-", label=f"fit slope {f.slope:.3f}")
        ax.set_xlabel("log10(epsilon)")
        ax.set_ylabel("log10(value)")
        ax.set_title(f"{name} (target {f.target:.3f})")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        p = out / f"{name}.svg"
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        svg_paths.append(str(p))
    paths["plots"] = svg_paths
    return paths


def check_acceptance(run: RunResult) -> tuple:
    """Evaluate the sweep-level acceptance checks; returns (ok, messages)."""
    cfg = run.cfg
    nu = cfg.nu
    msgs = []
    ok = True

    def fail(msg):
        nonlocal ok
        ok = False
        msgs.append("FAIL " + msg)

    def note(msg):
        msgs.append("pass " + msg)

    f = run.fits.get("div_mu_norm")
    if f is None:
        fail("div_mu_norm: no fit")
    elif f.slope >= nu / 2.0 - 1.0 - 0.2 and f.r2 >= 0.95:
        note(f"div_mu_norm slope={f.slope:.3f} r2={f.r2:.4f}")
    else:
        fail(f"div_mu_norm slope={f.slope:.3f} r2={f.r2:.4f}")

    for name in ("repair_X_norm", "repair_dmu_norm", "defect_norm", "phi_dev_norm"):
        f = run.fits.get(name)
        if f is None or not f.passed:
            fail(f"{name}: {'no fit' if f is None else f'slope={f.slope:.3f} target>={f.target - f.margin:.3f}'}")
        else:
            note(f"{name} slope={f.slope:.3f}")

    for name in ("ord_metric_err_c0", "ord_metric_err_c1", "ord_curv_err_c0", "ord_curv_err_c1",
                 "scaled_metric_err_c0", "scaled_metric_err_c1", "scaled_curv_err_c0", "scaled_curv_err_c1"):
        f = run.fits.get(name)
        if f is None or not f.passed:
            fail(f"{name}: {'no fit' if f is None else f'slope={f.slope:.3f}'}")
        else:
            note(f"{name} slope={f.slope:.3f}")

    for case in run.cases:
        if case.rows.get("status") != 1.0:
            fail(f"epsilon={case.epsilon:.6g} pipeline failed: {case.notes}")
            continue
        if case.rows["repair_div_ratio"] > cfg.tol_linear:
            fail(f"epsilon={case.epsilon:.6g} repair ratio {case.rows['repair_div_ratio']:.3e}")
        if case.rows["picard_max_ratio"] >= 1.0:
            fail(f"epsilon={case.epsilon:.6g} contraction ratio >= 1")
        # combined solver tolerances through the exact conformal identities:
        # hamiltonian = -8 phi^-5 N(phi), momentum = (scaling factor) * div
        ham_tol = 8.0 * 1.5 * cfg.tol_picard
        mom_tol = 1.5 * cfg.tol_linear * case.rows.get("div_sup_before", 1.0)
        if case.rows["closure_hamiltonian"] > 10.0 * ham_tol:
            fail(f"epsilon={case.epsilon:.6g} hamiltonian closure {case.rows['closure_hamiltonian']:.3e}")
        if case.rows["closure_momentum"] > 10.0 * mom_tol:
            fail(f"epsilon={case.epsilon:.6g} momentum closure {case.rows['closure_momentum']:.3e}")
        if "pre_conformal_metric_err" in case.rows and case.rows["pre_conformal_metric_err"] != 0.0:
            fail(f"epsilon={case.epsilon:.6g} pre-conformal outer error nonzero")
    return ok, msgs
