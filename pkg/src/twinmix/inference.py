"""Homogeneity likelihood-ratio test, its small-sample weight, and bootstrap CIs."""

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from ._parallel import pmap, stream
from .errors import ConvergenceError, DegenerateDataError, DomainError
from .estimation import (
    FitOptions,
    FitResult,
    as_pairs,
    fit_combined,
    fit_combined_null,
    fit_dz_separate,
    fit_mz,
    pearson_r,
)
from .model import BvnParams, sample_pairs

__all__ = [
    "A_N_SLOPE",
    "CALIBRATION_GRID",
    "LrtResult",
    "BootstrapResult",
    "CalibrationCell",
    "CalibrationReport",
    "a_n_empirical",
    "chibar_sf",
    "chibar_cdf",
    "chibar_ppf",
    "ks_chibar",
    "lrt_homogeneity",
    "lrt_statistic",
    "calibrate_an",
    "fit_an_slope",
    "bootstrap_ci",
    "estimate_rhos",
]

A_N_SLOPE = 6.828
# |R| below this is optimiser noise around the boundary, reported as exactly 0
ZERO_BAND = 1e-6
CALIBRATION_GRID = tuple((m, d) for m in range(50, 401, 50) for d in range(50, 401, 50))


def a_n_empirical(n_m):
    """Weight on chi2(1) matching the mean of the LRT statistic at MZ size ``n_m``."""
    if n_m < 1:
        raise DomainError(f"n_m must be >= 1, got {n_m!r}")
    return 0.5 + A_N_SLOPE / n_m


def chibar_sf(x, w):
    """Upper tail of ``(1 - w)*chi2(0) + w*chi2(1)``; equals 1 at ``x <= 0``."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0.0, w * stats.chi2.sf(np.maximum(x, 0.0), 1), 1.0)
    return out[()] if out.ndim == 0 else out


def chibar_cdf(x, w):
    x = np.asarray(x, dtype=float)
    out = np.where(x < 0.0, 0.0, (1.0 - w) + w * stats.chi2.cdf(np.maximum(x, 0.0), 1))
    return out[()] if out.ndim == 0 else out


def chibar_ppf(q, w):
    """Quantile of the mixture: 0 up to the point mass, a rescaled chi2(1) quantile beyond."""
    q = np.asarray(q, dtype=float)
    z = np.clip((q - (1.0 - w)) / w, 0.0, 1.0)
    out = np.where(q <= 1.0 - w, 0.0, stats.chi2.ppf(z, 1))
    return out[()] if out.ndim == 0 else out


def ks_chibar(x, w):
    """Kolmogorov-Smirnov distance between the sample ``x`` and the chi-bar mixture.

    Both CDFs jump at 0, so the supremum is taken over the sample points and
    zero, each with its left limit.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n == 0:
        raise DomainError("empty sample")
    pts = np.unique(np.concatenate([x, [0.0]]))
    right = np.searchsorted(x, pts, side="right") / n
    left = np.searchsorted(x, pts, side="left") / n
    f = np.asarray(chibar_cdf(pts, w), dtype=float)
    f_left = np.where(pts > 0.0, f, 0.0)
    return float(max(np.max(np.abs(right - f)), np.max(np.abs(left - f_left))))


@dataclass(frozen=True)
class LrtResult:
    statistic: float
    p_unadjusted: float
    p_adjusted: float
    a_n: float
    fit_alt: FitResult = field(repr=False)
    fit_null: FitResult = field(repr=False)


def lrt_statistic(mz, dz, opts=None):
    """``(R, unrestricted fit, null fit)``; ``R`` is clamped to 0 inside the noise band.

    A statistic below ``-ZERO_BAND`` means the unrestricted optimiser missed
    the null maximum; the fit is retried once with twice as many starts and
    :class:`ConvergenceError` is raised if that does not help.
    """
    opts = opts or FitOptions()
    null = fit_combined_null(mz, dz, opts)
    alt = fit_combined(mz, dz, opts)
    r = 2.0 * (alt.loglik - null.loglik)
    if r < -ZERO_BAND:
        alt = fit_combined(mz, dz, replace(opts, n_starts=2 * opts.n_starts))
        r = 2.0 * (alt.loglik - null.loglik)
        if r < -ZERO_BAND:
            raise ConvergenceError(f"negative likelihood ratio {r:.3g}")
    if not (alt.converged and null.converged):
        raise ConvergenceError("EM did not converge")
    if abs(r) <= ZERO_BAND:
        r = 0.0
    return r, alt, null


def lrt_homogeneity(mz, dz, opts=None):
    """Test ``mu_d1 == mu_d2`` with the combined likelihood.

    The unadjusted p-value uses the 50:50 mixture of a point mass at zero and
    chi2(1); the adjusted one moves weight ``a_n = a_n_empirical(n_M)`` onto
    chi2(1).
    """
    r, alt, null = lrt_statistic(mz, dz, opts)
    n_m = as_pairs(mz).shape[0]
    a_n = a_n_empirical(n_m)
    return LrtResult(
        statistic=r,
        p_unadjusted=float(chibar_sf(r, 0.5)),
        p_adjusted=float(min(1.0, chibar_sf(r, a_n))),
        a_n=a_n,
        fit_alt=alt,
        fit_null=null,
    )


# --- a_n calibration ------------------------------------------------------

@dataclass(frozen=True)
class CalibrationCell:
    n_m: int
    n_d: int
    a_hat: float
    n_ok: int
    n_failed: int
    aborted: bool = False


def fit_an_slope(n_m, a_hat, intercept=0.5):
    """Least-squares slope of ``a_hat - intercept`` on ``1/n_m`` and the residual SD."""
    x = 1.0 / np.asarray(n_m, dtype=float)
    y = np.asarray(a_hat, dtype=float) - intercept
    slope = float(np.sum(x * y) / np.sum(x * x))
    res = y - slope * x
    sd = float(np.sqrt(np.sum(res ** 2) / (len(res) - 1))) if len(res) > 1 else 0.0
    return slope, sd


@dataclass(frozen=True)
class CalibrationReport:
    cells: tuple
    fitted_slope: float
    fixed_intercept: float
    residual_sd: float
    n_reps: int

    def a_hat(self, n_m, n_d):
        for c in self.cells:
            if c.n_m == n_m and c.n_d == n_d:
                return c.a_hat
        raise KeyError((n_m, n_d))

    def to_csv(self, fh=None):
        """Rows ``n_M, n_D, a_hat`` (plus failure counts); returns the text if ``fh`` is None."""
        out = fh if fh is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n_M", "n_D", "a_hat", "n_ok", "n_failed"])
        for c in self.cells:
            w.writerow([c.n_m, c.n_d, repr(float(c.a_hat)), c.n_ok, c.n_failed])
        return out.getvalue() if fh is None else None

    def to_text(self):
        """Aligned matrix with ``n_M`` rows and ``n_D`` columns."""
        ms = sorted({c.n_m for c in self.cells})
        ds = sorted({c.n_d for c in self.cells})
        lines = ["n_M\\n_D " + "".join(f"{d:>7d}" for d in ds)]
        for m in ms:
            row = []
            for d in ds:
                try:
                    row.append(f"{self.a_hat(m, d):7.3f}")
                except KeyError:
                    row.append(f"{'':>7}")
            lines.append(f"{m:<8d}" + "".join(row))
        lines.append(f"a_hat = {self.fixed_intercept} + a/n_M: a = {self.fitted_slope:.3f} "
                     f"(residual SD {self.residual_sd:.4f}, {self.n_reps} reps per cell)")
        return "\n".join(lines)


_STD = BvnParams(0.0, 0.0, 0.0, 1.0)


def _null_replicate(args):
    seed, n_m, n_d, rep, opts = args
    rng = stream(seed, n_m, n_d, rep)
    mz = sample_pairs(rng, _STD, n_m)
    dz = sample_pairs(rng, _STD, n_d)
    try:
        return lrt_statistic(mz, dz, opts)[0]
    except (ConvergenceError, DegenerateDataError):
        return math.nan


def calibrate_an(grid=CALIBRATION_GRID, n_reps=1000, seed=0, opts=None, threads=1,
                 max_fail_frac=0.01, progress=None):
    """Monte Carlo mean of the LRT statistic under standard-normal nulls, per grid cell.

    Failed replicates are dropped and counted; a cell with more than
    ``max_fail_frac`` failures is marked aborted (``a_hat`` NaN) and left out
    of the slope fit.
    """
    if n_reps < 1:
        raise DomainError("n_reps must be >= 1")
    opts = opts or FitOptions()
    cells = []
    for n_m, n_d in grid:
        rs = np.array(pmap(_null_replicate,
                           [(seed, int(n_m), int(n_d), i, opts) for i in range(n_reps)],
                           threads))
        ok = rs[np.isfinite(rs)]
        n_fail = int(rs.size - ok.size)
        aborted = n_fail > max_fail_frac * n_reps
        a_hat = math.nan if aborted or ok.size == 0 else float(ok.mean())
        cells.append(CalibrationCell(int(n_m), int(n_d), a_hat, int(ok.size), n_fail, aborted))
        if progress is not None:
            progress(cells[-1])
    good = [c for c in cells if not c.aborted and np.isfinite(c.a_hat)]
    if good:
        slope, sd = fit_an_slope([c.n_m for c in good], [c.a_hat for c in good])
    else:
        slope, sd = math.nan, math.nan
    return CalibrationReport(tuple(cells), slope, 0.5, sd, int(n_reps))


# --- bootstrap ---------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    point: float
    ci_low: float
    ci_high: float
    level: float
    n_boot: int
    replicates: np.ndarray = field(repr=False, compare=False)
    n_failed: int = 0
    flagged: bool = False
    target: str = "delta"
    method: str = "combined"


METHODS = ("combined", "separate", "pearson")
TARGETS = ("rho_m", "rho_d", "delta")


def estimate_rhos(mz, dz, method="combined", opts=None, init=None):
    """``(rho_m, rho_d, fit)`` by one of the three pipelines.

    ``fit`` is the combined or separate-DZ :class:`FitResult` (None for Pearson)
    and can be passed back as ``init`` for a warm start.
    """
    if method == "combined":
        fit = fit_combined(mz, dz, opts, init=init)
        if not fit.converged:
            raise ConvergenceError("combined fit did not converge")
        return fit.params.rho_m, fit.params.rho_d, fit
    if method == "separate":
        fit = fit_dz_separate(dz, opts, init=init)
        if not fit.converged:
            raise ConvergenceError("separate DZ fit did not converge")
        return fit_mz(mz).rho, fit.params.rho_d, fit
    if method == "pearson":
        return pearson_r(mz), pearson_r(dz), None
    raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")


def _pick_target(rm, rd, target):
    if target == "rho_m":
        return rm
    if target == "rho_d":
        return rd
    return rm - rd


def _boot_replicate(args):
    mz, dz, method, opts, init, seed, b = args
    rng = stream(seed, b)
    im = rng.integers(0, mz.shape[0], mz.shape[0])
    idd = rng.integers(0, dz.shape[0], dz.shape[0])
    try:
        rm, rd, _ = estimate_rhos(mz[im], dz[idd], method, opts, init)
    except (ConvergenceError, DegenerateDataError):
        return math.nan, math.nan
    return rm, rd


def bootstrap_rhos(mz, dz, method="combined", n_boot=500, seed=0, opts=None, threads=1):
    """Point estimates and stratified-bootstrap replicates of ``(rho_m, rho_d)``.

    Pairs are resampled with replacement within each zygosity group. Replicate
    ``b`` uses the stream ``(seed, b)``, so every method sees the same resamples.
    Failed refits come back as NaN rows.
    """
    if n_boot < 1:
        raise DomainError("n_boot must be >= 1")
    mz = as_pairs(mz, 3, "MZ pairs")
    dz = as_pairs(dz, 3, "DZ pairs")
    opts = opts or FitOptions()
    rm, rd, fit = estimate_rhos(mz, dz, method, opts)
    init = fit.params if fit is not None else None
    reps = np.array(pmap(_boot_replicate,
                         [(mz, dz, method, opts, init, seed, b) for b in range(n_boot)],
                         threads), dtype=float).reshape(n_boot, 2)
    return (rm, rd), reps


def bootstrap_ci(mz, dz, target="delta", n_boot=500, level=0.95, seed=0, opts=None,
                 method="combined", threads=1, max_fail_frac=0.05):
    """Percentile bootstrap interval for ``rho_m``, ``rho_d`` or ``delta = rho_m - rho_d``."""
    if target not in TARGETS:
        raise DomainError(f"unknown target {target!r}; expected one of {TARGETS}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level!r}")
    if n_boot < 100:
        raise DomainError(f"n_boot must be >= 100, got {n_boot!r}")
    (rm, rd), reps = bootstrap_rhos(mz, dz, method, n_boot, seed, opts, threads)
    vals = _pick_target(reps[:, 0], reps[:, 1], target)
    ok = vals[np.isfinite(vals)]
    n_failed = int(vals.size - ok.size)
    if ok.size == 0:
        raise ConvergenceError("every bootstrap replicate failed")
    lo, hi = np.quantile(ok, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return BootstrapResult(
        point=float(_pick_target(rm, rd, target)),
        ci_low=float(lo),
        ci_high=float(hi),
        level=float(level),
        n_boot=int(n_boot),
        replicates=ok,
        n_failed=n_failed,
        flagged=n_failed > max_fail_frac * n_boot,
        target=target,
        method=method,
    )
