"""Command-line interface: ``twinmix <command> [options]``.

Exit codes: 0 success, 1 internal error, 2 input or usage error,
3 convergence failure.
"""

import argparse
import math
import sys

from . import __version__
from .dataio import (
    format_report,
    load_trait_file,
    load_twin_csv,
    normality_check,
    variance_diagnostic,
)
from .demo import write_demo
from .errors import ConvergenceError, DegenerateDataError, DomainError, InputError
from .estimation import (
    FitOptions,
    fit_combined,
    fit_combined_null,
    fit_dz_separate,
    fit_mz,
    pearson_r,
)
from .inference import CALIBRATION_GRID, bootstrap_ci, calibrate_an, lrt_homogeneity
from .simulation import ScenarioConfig, run_null_qq, run_table1, run_table2, table1_grid, table2_grid

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_CONVERGENCE = 0, 1, 2, 3


def _level(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {text}")
    return x


def _positive_int(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return x


def _grid(text):
    if text in ("full", "paper"):
        return list(CALIBRATION_GRID)
    cells = []
    for part in text.split(","):
        try:
            m, d = part.lower().split("x")
            cells.append((int(m), int(d)))
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"grid cells are NMxND separated by commas, got {part!r}") from None
    return cells


def _opts(args):
    return FitOptions(n_starts=args.starts, max_iter=args.max_iter, seed=args.seed)


def _load(args):
    return load_twin_csv(args.input, frequencies=args.frequencies, trait=args.trait)


# --- commands ------------------------------------------------------------------

def _fit_record(fit):
    return {
        "model": fit.model,
        "estimates": fit.params.as_dict(),
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "start_index": fit.start_index,
        "n_converged": fit.n_converged,
    }


def cmd_fit(args):
    ds = _load(args)
    opts = _opts(args)
    if args.model == "mz-only":
        mu, rho, s2, ll = fit_mz(ds.mz)
        rec = {"model": "mz-only", "estimates": {"mu_m": mu, "rho_m": rho, "sigma2": s2},
               "loglik": ll, "iterations": 0, "converged": True}
    else:
        fitter = {"combined": lambda: fit_combined(ds.mz, ds.dz, opts),
                  "null": lambda: fit_combined_null(ds.mz, ds.dz, opts),
                  "separate": lambda: fit_dz_separate(ds.dz, opts)}[args.model]
        fit = fitter()
        if not fit.converged:
            raise ConvergenceError(f"{args.model} fit did not converge in {fit.iterations} iterations")
        rec = _fit_record(fit)
    rec.update(trait=ds.trait_name, n_mz=ds.n_mz, n_dz=ds.n_dz)
    return rec


def cmd_test(args):
    ds = _load(args)
    r = lrt_homogeneity(ds.mz, ds.dz, _opts(args))
    null = "unadjusted" if args.unadjusted else "adjusted"
    return {
        "trait": ds.trait_name,
        "statistic": r.statistic,
        "a_n": r.a_n,
        "p_unadjusted": r.p_unadjusted,
        "p_adjusted": r.p_adjusted,
        "null": null,
        "p_value": r.p_unadjusted if args.unadjusted else r.p_adjusted,
        "loglik_alt": r.fit_alt.loglik,
        "loglik_null": r.fit_null.loglik,
    }


def cmd_delta(args):
    ds = _load(args)
    b = bootstrap_ci(ds.mz, ds.dz, target=args.target, n_boot=args.n_boot, level=args.level,
                     seed=args.seed, opts=_opts(args), method=args.method, threads=args.threads)
    return {
        "trait": ds.trait_name,
        "target": b.target,
        "method": b.method,
        "estimate": b.point,
        "ci_low": b.ci_low,
        "ci_high": b.ci_high,
        "level": b.level,
        "n_boot": b.n_boot,
        "n_failed": b.n_failed,
        "flagged": b.flagged,
    }


class _Text(str):
    """Pre-rendered output that bypasses the generic formatter."""


def _emit_report(rep, fmt):
    if fmt == "csv":
        return _Text(rep.to_csv())
    if fmt == "table":
        return _Text(rep.to_text())
    return {"rows": rep.to_records()}


def cmd_simulate(args):
    opts = _opts(args)
    if args.scenario == "qq":
        cfg = ScenarioConfig(args.nm, args.nd, 0.0, args.rho_d[0], rho_m=args.rho_m,
                             n_reps=args.reps, seed=args.seed)
        q = run_null_qq(cfg, opts, args.threads)
        if args.format == "json":
            return {"a_n": q.a_n, "n_failed": q.n_failed, "ks_adjusted": q.ks_adjusted(),
                    "ks_unadjusted": q.ks_unadjusted(), "rows": q.to_records()}
        return _Text(q.to_csv())
    mu = args.mu_d2 or [1.0, 0.5, 0.0]
    if args.scenario == "table1":
        grid = table1_grid(args.n, args.rho_d or (0.3, 0.5, 0.8), mu, args.reps, args.seed)
        rep = run_table1(grid, opts, args.threads)
    else:
        grid = table2_grid(args.n, args.delta, mu, args.rho_m, args.reps, args.seed)
        rep = run_table2(grid, args.n_boot, args.level, opts, args.threads)
    return _emit_report(rep, args.format)


def cmd_calibrate(args):
    rep = calibrate_an(args.grid, args.reps, args.seed, _opts(args), args.threads)
    if args.format == "csv":
        return _Text(rep.to_csv() + f"# fitted slope {rep.fitted_slope!r}, intercept 0.5, "
                     f"residual SD {rep.residual_sd!r}\n")
    if args.format == "table":
        return _Text(rep.to_text() + "\n")
    return {
        "fitted_slope": rep.fitted_slope,
        "fixed_intercept": rep.fixed_intercept,
        "residual_sd": rep.residual_sd,
        "n_reps": rep.n_reps,
        "rows": [{"n_M": c.n_m, "n_D": c.n_d, "a_hat": c.a_hat, "n_ok": c.n_ok,
                  "n_failed": c.n_failed, "aborted": c.aborted} for c in rep.cells],
    }


def analyze_dataset(ds, n_boot=500, level=0.95, seed=0, opts=None, threads=1, repeats=200):
    """One trait through the full pipeline; returns the nested report record."""
    opts = opts or FitOptions(seed=seed)
    fit = fit_combined(ds.mz, ds.dz, opts)
    if not fit.converged:
        raise ConvergenceError(f"trait {ds.trait_name!r}: combined fit did not converge")
    p = fit.params
    pr_m, pr_d = pearson_r(ds.mz), pearson_r(ds.dz)
    ci_c = bootstrap_ci(ds.mz, ds.dz, "delta", n_boot, level, seed, opts, "combined", threads)
    ci_p = bootstrap_ci(ds.mz, ds.dz, "delta", n_boot, level, seed, opts, "pearson", threads)
    lrt = lrt_homogeneity(ds.mz, ds.dz, opts)
    var = variance_diagnostic(ds.mz, ds.dz, opts)
    return {
        "trait": ds.trait_name,
        "n_mz": ds.n_mz,
        "n_dz": ds.n_dz,
        "estimates": {
            "combined": {"rho_m": p.rho_m, "rho_d": p.rho_d, "delta": p.delta,
                         "mu_m": p.mu_m, "mu_d1": p.mu_d1, "mu_d2": p.mu_d2,
                         "sigma2": p.sigma2, "loglik": fit.loglik},
            "pearson": {"rho_m": pr_m, "rho_d": pr_d, "delta": pr_m - pr_d},
        },
        "ci": {
            "level": level,
            "n_boot": n_boot,
            "combined": {"low": ci_c.ci_low, "high": ci_c.ci_high, "n_failed": ci_c.n_failed,
                         "flagged": ci_c.flagged},
            "pearson": {"low": ci_p.ci_low, "high": ci_p.ci_high, "n_failed": ci_p.n_failed,
                        "flagged": ci_p.flagged},
        },
        "lrt": {"statistic": lrt.statistic, "a_n": lrt.a_n,
                "p_unadjusted": lrt.p_unadjusted, "p_adjusted": lrt.p_adjusted},
        "diagnostics": {
            "transformed": ds.transformed,
            "normality_mean_p": normality_check(ds, "MZ", repeats, seed),
            "sigma2_m": var.sigma2_m,
            "sigma2_d": var.sigma2_d,
            "variance_ratio": var.ratio,
        },
    }


def cmd_analyze(args):
    datasets = load_trait_file(args.input, frequencies=args.frequencies)
    opts = _opts(args)
    rows = [analyze_dataset(ds, args.n_boot, args.level, args.seed, opts, args.threads,
                            args.normality_repeats) for ds in datasets]
    if args.format == "table":
        return [{
            "trait": r["trait"],
            "rho_m": r["estimates"]["combined"]["rho_m"],
            "rho_d": r["estimates"]["combined"]["rho_d"],
            "delta": r["estimates"]["combined"]["delta"],
            "ci_low": r["ci"]["combined"]["low"],
            "ci_high": r["ci"]["combined"]["high"],
            "pearson_rho_m": r["estimates"]["pearson"]["rho_m"],
            "pearson_rho_d": r["estimates"]["pearson"]["rho_d"],
            "pearson_delta": r["estimates"]["pearson"]["delta"],
            "R": r["lrt"]["statistic"],
            "p_adj": r["lrt"]["p_adjusted"],
            "norm_p": r["diagnostics"]["normality_mean_p"],
            "var_ratio": r["diagnostics"]["variance_ratio"],
        } for r in rows]
    return {"rows": rows}


def cmd_demo(args):
    import io

    buf = io.StringIO()
    write_demo(buf, seed=args.demo_seed)
    return _Text(buf.getvalue())


# --- parser ----------------------------------------------------------------------

def _common(fmt_default):
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    g.add_argument("--threads", type=_positive_int, default=1,
                   help="worker threads for Monte Carlo and bootstrap loops (default 1)")
    g.add_argument("--format", choices=("json", "csv", "table"), default=fmt_default,
                   help=f"output format (default {fmt_default})")
    g.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    g.add_argument("--starts", type=_positive_int, default=8, help="EM starts per fit (default 8)")
    g.add_argument("--max-iter", type=_positive_int, default=2000,
                   help="EM iteration cap per start (default 2000)")
    return p


def _input_args(p):
    p.add_argument("input", help="CSV with columns pair_id,zygosity,y1,y2[,trait]")
    p.add_argument("--frequencies", action="store_true",
                   help="y columns are proportions in (0, 1); apply the probit transform")
    p.add_argument("--trait", help="trait to use when the file holds several")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="twinmix",
        description="Correlation estimation and homogeneity testing for unordered twin pairs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    js, tb = _common("json"), _common("table")

    p = sub.add_parser("fit", parents=[js], help="maximum-likelihood fit of one model")
    _input_args(p)
    p.add_argument("--model", choices=("combined", "separate", "null", "mz-only"),
                   default="combined", help="which likelihood to maximise (default combined)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", parents=[js], help="likelihood-ratio test of DZ mean homogeneity")
    _input_args(p)
    p.add_argument("--unadjusted", action="store_true",
                   help="report the 50:50 chi-bar p-value as the headline instead of the "
                        "small-sample adjusted one")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("delta", parents=[js], help="bootstrap CI for rho_M - rho_D")
    _input_args(p)
    p.add_argument("--n-boot", type=_positive_int, default=500, help="bootstrap draws (default 500)")
    p.add_argument("--level", type=_level, default=0.95, help="confidence level (default 0.95)")
    p.add_argument("--method", choices=("combined", "separate", "pearson"), default="combined")
    p.add_argument("--target", choices=("delta", "rho_m", "rho_d"), default="delta")
    p.set_defaults(func=cmd_delta)

    p = sub.add_parser("simulate", parents=[tb], help="Monte Carlo experiments")
    p.add_argument("scenario", choices=("table1", "table2", "qq"))
    p.add_argument("--n", type=_positive_int, nargs="+", default=[100, 400],
                   help="pairs per stratum, one value per cell (default 100 400)")
    p.add_argument("--reps", type=_positive_int, default=None,
                   help="replicates per cell (default 1000; 100 for table2; 2000 for qq)")
    p.add_argument("--rho-d", type=float, nargs="+", default=None,
                   help="DZ correlations for table1 (default 0.3 0.5 0.8); qq uses the first "
                        "(default 0.3)")
    p.add_argument("--mu-d2", type=float, nargs="+", default=None,
                   help="second DZ mean, the first being 0 (default 1 0.5 0)")
    p.add_argument("--delta", type=float, nargs="+", default=[0.10, 0.35, 0.60],
                   help="table2 values of rho_M - rho_D")
    p.add_argument("--rho-m", type=float, default=0.9, help="MZ correlation (default 0.9)")
    p.add_argument("--n-boot", type=_positive_int, default=500, help="table2 bootstrap draws")
    p.add_argument("--level", type=_level, default=0.95)
    p.add_argument("--nm", type=_positive_int, default=400, help="qq: MZ pairs")
    p.add_argument("--nd", type=_positive_int, default=400, help="qq: DZ pairs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[tb],
                       help="Monte Carlo mean of the null LRT statistic over a size grid")
    p.add_argument("--grid", type=_grid, default=list(CALIBRATION_GRID),
                   help="'full' (8x8 grid of 50..400) or cells like 50x50,100x400")
    p.add_argument("--reps", type=_positive_int, default=1000, help="replicates per cell")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("analyze", parents=[js], help="full per-trait pipeline on a trait file")
    p.add_argument("input", help="CSV with columns trait,pair_id,zygosity,y1,y2")
    p.add_argument("--frequencies", action="store_true",
                   help="y columns are proportions in (0, 1); apply the probit transform")
    p.add_argument("--n-boot", type=_positive_int, default=500)
    p.add_argument("--level", type=_level, default=0.95)
    p.add_argument("--normality-repeats", type=_positive_int, default=200)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("demo", parents=[js], help="write the synthetic six-trait frequency file")
    p.add_argument("--demo-seed", type=int, default=None, help="generator seed")
    p.set_defaults(func=cmd_demo)
    return parser


def _render(result, fmt):
    if isinstance(result, _Text):
        return str(result)
    return format_report(result, fmt)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "reps", 0) is None:
        args.reps = {"table2": 100, "qq": 2000}.get(getattr(args, "scenario", ""), 1000)
    if getattr(args, "rho_d", 0) is None and getattr(args, "scenario", "") == "qq":
        args.rho_d = [0.3]
    if getattr(args, "demo_seed", 0) is None:
        from .demo import DEMO_SEED

        args.demo_seed = DEMO_SEED
    try:
        text = _render(args.func(args), args.format)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except (InputError, DomainError, DegenerateDataError) as exc:
        print(f"twinmix: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"twinmix: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"twinmix: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - mapped to the internal-error exit code
        print(f"twinmix: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
