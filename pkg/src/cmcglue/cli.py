"""Command-line interface.

Subcommands: generate, glue, repair, solve, verify-kernel, spectrum, kid,
sweep, report.  Every config-file key (C, epsilons, nu, grid.n, grid.rmin,
grid.rmax, tol.linear, tol.picard, M, Lambda, tau, mu0.c, out_dir,
parallel, seed) can be overridden by a same-named flag.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 acceptance failure (sweep --check / verify checks).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_ACCEPTANCE = 3

_KEYMAP = {
    "C": "C",
    "epsilons": "epsilons",
    "nu": "nu",
    "grid.n": "grid_n",
    "grid.rmin": "grid_rmin",
    "grid.rmax": "grid_rmax",
    "tol.linear": "tol_linear",
    "tol.picard": "tol_picard",
    "M": "M",
    "Lambda": "Lambda",
    "tau": "tau",
    "mu0.c": "mu0_c",
    "out_dir": "out_dir",
    "parallel": "parallel",
    "seed": "seed",
}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "epsilons":
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    if key == "out_dir":
        return raw
    if key == "parallel":
        return raw.lower() in ("1", "true", "yes", "on")
    if key in ("grid.n", "seed"):
        return int(raw)
    if key == "grid.rmin" and raw.lower() in ("none", "auto"):
        return None
    return float(raw)


def load_config_file(path) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (tok.strip() for tok in line.split("=", 1))
        if key not in _KEYMAP:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[_KEYMAP[key]] = _parse_value(key, raw)
    return out


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key = value config file")
    for key, dest in _KEYMAP.items():
        parser.add_argument(f"--{key}", dest=f"cfg_{dest}", default=None, metavar="V")


def build_sweep_config(args) -> "SweepConfig":
    from .sweep import SweepConfig

    values = {}
    if args.config:
        values.update(load_config_file(args.config))
    for key, dest in _KEYMAP.items():
        raw = getattr(args, f"cfg_{dest}", None)
        if raw is not None:
            values[dest] = _parse_value(key, raw)
    return SweepConfig(**values)


def _single_epsilon(cfg, args) -> float:
    return float(args.epsilon) if args.epsilon is not None else cfg.epsilons[0]


def _write_json(path, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    from .models import bowen_york_ae, flat_ae, save_ae_profile, schwarzschild_ae

    if args.model == "flat":
        ae = flat_ae()
    elif args.model == "schwarzschild":
        ae = schwarzschild_ae(args.mass)
    else:
        ae = bowen_york_ae(args.mass, args.seed_amplitude)
    # default to the truncation scale; the deep interior is never sampled
    lo = args.rho_min if args.rho_min is not None else max(ae.rho_min * 1.05, 0.5)
    rho = np.geomspace(lo, args.rho_max, args.n)
    m0 = ae.m0(rho) if ae.m0 is not None else None
    save_ae_profile(args.out, rho, ae.a0(rho), m0)
    print(f"wrote {args.out} ({args.n} samples, rho in [{lo:.6g}, {args.rho_max:.6g}])")
    return EXIT_OK


def cmd_glue(args) -> int:
    from .sweep import build_case

    cfg = build_sweep_config(args)
    eps = _single_epsilon(cfg, args)
    glued = build_case(cfg, eps)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .gluing import region_classify, weight_for_config

    w = weight_for_config(glued.cfg)
    prof = out / f"glued_eps{eps:.8g}.csv"
    with open(prof, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("r,A,m,w,metric_regime,mu_regime\n")
        wr = w(glued.grid.r)
        for i, r in enumerate(glued.grid.r):
            reg = region_classify(glued.cfg, r)
            fh.write(
                f"{r:.17g},{glued.metric.values[i]:.17g},{glued.mu.m[i]:.17g},"
                f"{wr[i]:.17g},{reg[0]},{reg[1]}\n"
            )
    report = {
        "epsilon": eps,
        "bands": {
            "metric": list(glued.cfg.metric_band),
            "mu_inner": list(glued.cfg.mu_inner_band),
            "mu_outer": list(glued.cfg.mu_outer_band),
        },
        "profile_csv": str(prof),
    }
    _write_json(out / f"glue_report_eps{eps:.8g}.json", report)
    print(f"glued data written under {out}")
    return EXIT_OK


def cmd_repair(args) -> int:
    from .modes import repair_momentum
    from .sweep import build_case

    cfg = build_sweep_config(args)
    eps = _single_epsilon(cfg, args)
    glued = build_case(cfg, eps)
    rep = repair_momentum(glued)
    report = {"epsilon": eps, **rep.report}
    out = Path(cfg.out_dir)
    _write_json(out / f"repair_report_eps{eps:.8g}.json", report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if rep.report["div_ratio"] <= cfg.tol_linear else EXIT_NUMERICAL


def cmd_solve(args) -> int:
    from .lichnerowicz import LichnerowiczProblem, picard_solve, n_residual
    from .lichnerowicz import transformed_hamiltonian_residual, transformed_momentum_residual
    from .modes import repair_momentum
    from .gluing import weight_for_config
    from .norms import NormSpec, weighted_norm
    from .sweep import build_case

    cfg = build_sweep_config(args)
    eps = _single_epsilon(cfg, args)
    glued = build_case(cfg, eps)
    rep = repair_momentum(glued)
    prob = LichnerowiczProblem(glued.metric, rep.mu_tilde, glued.tau, glued.Lambda)
    w = weight_for_config(glued.cfg)
    n1 = n_residual(prob, np.ones(glued.grid.n))
    phi, sol = picard_solve(prob, cfg.nu, tol=cfg.tol_picard, weight=w)
    ham = transformed_hamiltonian_residual(prob, phi)
    mom = transformed_momentum_residual(prob, phi)
    report = {
        "epsilon": eps,
        "iterations": sol.iterations,
        "contraction_ratios": list(sol.contraction_ratios),
        "final_residual": sol.final_residual,
        "eta_norm": sol.eta_norm,
        "defect_norm": weighted_norm(n1, glued.metric, w, NormSpec(nu=cfg.nu + 1.0)),
        "closure_hamiltonian": float(np.max(np.abs(ham[2:-2]))),
        "closure_momentum": float(np.max(np.abs(mom[2:-2]))),
        "repair_div_ratio": rep.report["div_ratio"],
    }
    _write_json(Path(cfg.out_dir) / f"solve_report_eps{eps:.8g}.json", report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify_kernel(args) -> int:
    from .modes import KernelFamilyTag, ModeIndex, apply_flat_mode, kernel_mode, kernel_profile_degrees
    from .radial import RadialGrid

    ok = True
    shapes = [KernelFamilyTag(g, f) for g in ("at-infinity", "at-origin")
              for f in ("radial-special", "V-coupled-a", "V-coupled-b", "W")]
    for tag in shapes:
        ls = [1] if tag.family == "radial-special" else [1, 2, 3, 4]
        for l in ls:
            errs = []
            for n in (args.coarse, 2 * args.coarse):
                grid = RadialGrid.make(1.0, 2.0, n, "uniform")
                mode = kernel_mode(tag, ModeIndex(l, 0), grid)
                out = apply_flat_mode(mode, grid)
                parts = [out.u] + [p for p in (out.v, out.w) if p is not None]
                errs.append(max(float(np.max(np.abs(p))) for p in parts))
            degs = kernel_profile_degrees(tag, l)
            poly = all(0 <= d <= 2 for d in degs)
            label = f"{tag.growth}/{tag.family} l={l}"
            if poly:
                # stencils are exact on these profiles; the residual sits at
                # the machine-epsilon/h^2 cancellation floor
                grid = RadialGrid.make(1.0, 2.0, 2 * args.coarse, "uniform")
                mode = kernel_mode(tag, ModeIndex(l, 0), grid)
                scale = max(float(np.max(np.abs(mode.u))), 1.0)
                passed = errs[1] <= 200.0 * np.finfo(float).eps * scale / grid.h**2
                print(f"{'PASS' if passed else 'FAIL'} {label}: exact-case residual {errs[1]:.3e}")
            else:
                order = np.log2(errs[0] / errs[1]) if errs[1] > 0 else np.inf
                passed = order >= 1.8
                print(f"{'PASS' if passed else 'FAIL'} {label}: order {order:.2f} "
                      f"(residuals {errs[0]:.3e} -> {errs[1]:.3e})")
            ok = ok and passed
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_spectrum(args) -> int:
    from .lichnerowicz import injectivity_spectrum, injectivity_spectrum_polar
    from .radial import (
        CmcExtrinsicCurvature,
        RadialGrid,
        TraceFreeRadialTensor,
        flat_metric,
    )

    if args.case == "round-sphere":
        a = float(np.sqrt(3.0 / args.Lambda))
        s = np.linspace(args.pole_offset * a, a * np.pi / 2.0, args.n)
        rho = lambda ss: a * np.sin(ss / a)
        rep = injectivity_spectrum_polar(rho, -args.Lambda, s, bc=("neumann", "dirichlet"))
    else:
        grid = RadialGrid.make(1.0, 2.0, args.n, "uniform")
        g = flat_metric(grid)
        K = CmcExtrinsicCurvature(args.tau, TraceFreeRadialTensor(grid, np.zeros(grid.n)))
        rep = injectivity_spectrum(g, K, args.Lambda)
    print(json.dumps({
        "case": args.case,
        "eigenvalues": list(rep.eigenvalues),
        "has_kernel": rep.has_kernel,
        "zero_tol": rep.zero_tol,
    }, indent=2))
    return EXIT_OK


def cmd_kid(args) -> int:
    from .lichnerowicz import KidCandidate, kid_residual
    from .models import SdSParams, sds_profile
    from .radial import CmcExtrinsicCurvature, RadialGrid, TraceFreeRadialTensor

    results = {}
    for n in (args.n, 2 * args.n - 1):
        if args.case == "round-sphere":
            lam = args.Lambda
            grid = RadialGrid.make(0.1, 0.8 / np.sqrt(lam / 3.0), n, "uniform")
            g = sds_profile(SdSParams(M=0.0, Lambda=lam, epsilon=1.0), grid)
            C = np.sqrt(1.0 - lam / 3.0 * grid.r**2)
        else:
            lam = 0.0
            grid = RadialGrid.make(2.5 * args.mass, 8.0 * args.mass, n, "uniform")
            g = sds_profile(SdSParams(M=args.mass, Lambda=0.0, epsilon=1.0), grid)
            C = np.sqrt(1.0 - 2.0 * args.mass / grid.r)
        K = CmcExtrinsicCurvature(0.0, TraceFreeRadialTensor(grid, np.zeros(grid.n)))
        e1, e2 = kid_residual(g, K, lam, KidCandidate(C=C))
        results[n] = max(float(np.max(e1)), float(np.max(e2)))
    ns = sorted(results)
    order = float(np.log2(results[ns[0]] / results[ns[1]])) if results[ns[1]] > 0 else np.inf
    print(json.dumps({"case": args.case, "residual_sup": results[ns[1]], "order": order}, indent=2))
    return EXIT_OK if order >= 1.8 else EXIT_NUMERICAL


def cmd_sweep(args) -> int:
    from .sweep import check_acceptance, emit_report, run_sweep

    cfg = build_sweep_config(args)
    run = run_sweep(cfg)
    paths = emit_report(run)
    print(f"results: {paths['csv']}")
    print(f"manifest: {paths['manifest']}")
    for name, f in sorted(run.fits.items()):
        flag = "ok " if f.passed else "LOW"
        print(f"  {flag} {name:<24s} slope {f.slope:+.3f} target {f.target:+.3f} r2 {f.r2:.4f}")
    if any(c.rows.get("status") != 1.0 for c in run.cases):
        bad = [c.epsilon for c in run.cases if c.rows.get("status") != 1.0]
        print(f"failed epsilons: {bad}")
    if args.check:
        ok, msgs = check_acceptance(run)
        for m in msgs:
            print(m)
        return EXIT_OK if ok else EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_report(args) -> int:
    import csv as _csv
    from collections import defaultdict

    from .sweep import fit_rate, rate_targets

    cfg = build_sweep_config(args)
    src = Path(args.results or (Path(cfg.out_dir) / "results.csv"))
    if not src.exists():
        print(f"no results file at {src}", file=sys.stderr)
        return EXIT_VALIDATION
    series = defaultdict(list)
    with open(src, newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            series[row["quantity"]].append((float(row["epsilon"]), float(row["value"])))
    targets = rate_targets(cfg.nu)
    fits = {}
    for name, pts in series.items():
        if name not in targets or len(pts) < 4:
            continue
        pts.sort(key=lambda t: -t[0])
        vals = [v for _, v in pts]
        if any(v <= 0 for v in vals):
            continue
        fits[name] = fit_rate([e for e, _ in pts], vals, targets[name], quantity=name)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        name: {"slope": f.slope, "r2": f.r2, "target": f.target, "passed": f.passed}
        for name, f in sorted(fits.items())
    }
    _write_json(out / "fit_summary.json", summary)
    for name, f in sorted(fits.items()):
        print(f"{name:<24s} slope {f.slope:+.3f} target {f.target:+.3f} r2 {f.r2:.4f}")
    # re-render the plots from the stored series
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "cmcglue"
    for name, f in sorted(fits.items()):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        x = np.log10(np.array(f.epsilons))
        y = np.log10(np.array(f.values))
        ax.plot(x, y, "o")
        ax.plot(x, f.slope * x + f.intercept, "-")
        ax.set_xlabel("log10(epsilon)")
        ax.set_ylabel("log10(value)")
        ax.set_title(f"{name} (target {f.target:.3f})")
        fig.tight_layout()
        fig.savefig(out / f"{name}.svg", format="svg", metadata={"Date": None})
        plt.close(fig)
    return EXIT_OK


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmcglue", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write an AE profile file from a built-in model")
    p.add_argument("--model", choices=("flat", "schwarzschild", "bowen-york"), default="bowen-york")
    p.add_argument("--mass", type=float, default=0.2)
    p.add_argument("--seed-amplitude", type=float, default=0.5)
    p.add_argument("--rho-min", type=float, default=None)
    p.add_argument("--rho-max", type=float, default=2048.0)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--out", default="ae_profile.txt")
    p.set_defaults(func=cmd_generate)

    for name, fn, extra in (
        ("glue", cmd_glue, True),
        ("repair", cmd_repair, True),
        ("solve", cmd_solve, True),
    ):
        p = sub.add_parser(name)
        _add_config_flags(p)
        if extra:
            p.add_argument("--epsilon", type=float, default=None)
        p.set_defaults(func=fn)

    p = sub.add_parser("verify-kernel", help="mode-block kernel suite")
    p.add_argument("--coarse", type=int, default=512)
    p.set_defaults(func=cmd_verify_kernel)

    p = sub.add_parser("spectrum", help="injectivity-operator spectrum diagnostic")
    p.add_argument("--case", choices=("round-sphere", "flat-tau"), default="round-sphere")
    p.add_argument("--Lambda", type=float, default=3.0)
    p.add_argument("--tau", type=float, default=3.0)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--pole-offset", type=float, default=1e-3)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("kid", help="Killing initial-data residual diagnostic")
    p.add_argument("--case", choices=("round-sphere", "schwarzschild"), default="round-sphere")
    p.add_argument("--Lambda", type=float, default=3.0)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--n", type=int, default=512)
    p.set_defaults(func=cmd_kid)

    p = sub.add_parser("sweep", help="run the epsilon sweep and emit reports")
    _add_config_flags(p)
    p.add_argument("--check", action="store_true", help="exit 3 unless the rate checks pass")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-fit and re-plot an existing results.csv")
    _add_config_flags(p)
    p.add_argument("--results", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
