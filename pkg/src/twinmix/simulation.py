"""Monte Carlo experiments on simulated twin data.

Every replicate draws from its own stream ``(seed, cell key, replicate)``,
so cells and replicates may run in any order or on several threads without
changing a single output value.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import key_id, pmap, stream
from .dataio import TwinDataset
from .errors import ConvergenceError, DegenerateDataError, DomainError
from .estimation import (
    FitOptions,
    fit_combined,
    fit_combined_null,
    fit_dz_separate,
    fit_dz_separate_equal_means,
    pearson_r,
)
from .inference import (
    a_n_empirical,
    bootstrap_rhos,
    chibar_ppf,
    ks_chibar,
    lrt_statistic,
)
from .model import BvnParams, ModelParams, sample_pairs

__all__ = [
    "ScenarioConfig",
    "ReportRow",
    "ScenarioReport",
    "QQResult",
    "generate_dataset",
    "table1_grid",
    "table2_grid",
    "run_table1",
    "run_table2",
    "run_null_qq",
]

_FAIL = (ConvergenceError, DegenerateDataError)


@dataclass(frozen=True)
class ScenarioConfig:
    n_m: int
    n_d: int
    mu_d2: float
    rho_d: float
    mu_m: float = 0.0
    rho_m: float = 0.9
    mu_d1: float = 0.0
    sigma2: float = 1.0
    n_reps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_m < 3 or self.n_d < 3:
            raise DomainError(f"sample sizes must be >= 3, got ({self.n_m}, {self.n_d})")
        if self.n_reps < 1:
            raise DomainError("n_reps must be >= 1")
        self.params()

    def params(self):
        return ModelParams(self.mu_m, self.rho_m, self.mu_d1, self.mu_d2, self.rho_d, self.sigma2)

    @property
    def delta(self):
        return self.rho_m - self.rho_d

    @property
    def homogeneous(self):
        return self.mu_d1 == self.mu_d2

    def key(self):
        """Cell identity for stream derivation; excludes ``n_reps`` and ``seed``."""
        return key_id((self.n_m, self.n_d, self.mu_m, self.rho_m, self.mu_d1, self.mu_d2,
                       self.rho_d, self.sigma2))


def generate_dataset(cfg, rng):
    """MZ pairs from the equal-means normal, then DZ pairs from the swap mixture."""
    p = cfg.params()
    mz = sample_pairs(rng, BvnParams(p.mu_m, p.mu_m, p.rho_m, p.sigma2), cfg.n_m)
    dz = sample_pairs(rng, BvnParams(p.mu_d1, p.mu_d2, p.rho_d, p.sigma2), cfg.n_d)
    return TwinDataset(mz, dz, trait_name="simulated")


def _replicate_data(cfg, rep):
    rng = stream(cfg.seed, cfg.key(), rep)
    return generate_dataset(cfg, rng), rng


@dataclass(frozen=True)
class ReportRow:
    n_m: int
    n_d: int
    rho_d: float
    mu_d2: float
    delta: float
    estimator: str
    mean: float
    sd: float
    n_ok: int
    n_failed: int
    ci_low: float = math.nan
    ci_high: float = math.nan
    coverage: float = math.nan

    def as_dict(self):
        return asdict(self)


def _fmt(x):
    return repr(float(x)) if math.isfinite(x) else ""


@dataclass(frozen=True)
class ScenarioReport:
    """Per cell and estimator summaries; ``raw`` maps ``(cell index, estimator)`` to replicate values."""

    kind: str
    rows: tuple
    raw: dict = field(default=None, repr=False, compare=False)

    def find(self, estimator, **cell):
        for r in self.rows:
            if r.estimator == estimator and all(getattr(r, k) == v for k, v in cell.items()):
                return r
        raise KeyError((estimator, cell))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = list(ReportRow.__dataclass_fields__)
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in
                        (getattr(r, c) for c in cols)])
        return buf.getvalue()

    def to_records(self):
        return [r.as_dict() for r in self.rows]

    def to_text(self):
        if self.kind == "table1":
            head = f"{'(n_M,n_D)':<11}{'rho_D':>6}{'mu_D2':>7}  {'Estimator':<11}{'mean':>8}{'sd':>8}{'fail':>6}"
            lines = [head]
            for r in self.rows:
                lines.append(f"{f'({r.n_m},{r.n_d})':<11}{r.rho_d:>6.2f}{r.mu_d2:>7.2f}  "
                             f"{r.estimator:<11}{r.mean:>8.3f}{r.sd:>8.3f}{r.n_failed:>6d}")
            return "\n".join(lines) + "\n"
        head = (f"{'(n_M,n_D)':<11}{'delta':>6}{'mu_D2':>7}  {'Estimator':<10}{'estimate':>9}"
                f"{'CI':>18}{'%':>6}{'fail':>6}")
        lines = [head]
        for r in self.rows:
            ci = f"({r.ci_low:.3f}, {r.ci_high:.3f})"
            lines.append(f"{f'({r.n_m},{r.n_d})':<11}{r.delta:>6.2f}{r.mu_d2:>7.2f}  "
                         f"{r.estimator:<10}{r.mean:>9.3f}{ci:>18}{r.coverage:>6.0f}{r.n_failed:>6d}")
        return "\n".join(lines) + "\n"


def table1_grid(n_values=(100, 400), rho_d=(0.3, 0.5, 0.8), mu_d2=(1.0, 0.5, 0.0),
                n_reps=1000, seed=0):
    return [ScenarioConfig(n, n, m, r, n_reps=n_reps, seed=seed)
            for r in rho_d for n in n_values for m in mu_d2]


def table2_grid(n_values=(100, 400), delta=(0.10, 0.35, 0.60), mu_d2=(1.0, 0.5, 0.0),
                rho_m=0.9, n_reps=100, seed=0):
    return [ScenarioConfig(n, n, m, round(rho_m - d, 12), rho_m=rho_m, n_reps=n_reps, seed=seed)
            for m in mu_d2 for d in delta for n in n_values]


TABLE1_ESTIMATORS = ("Combined", "Combined*", "Mixture", "Mixture*", "Pearson")


def _converged_rho(fit):
    if not fit.converged:
        raise ConvergenceError("fit did not converge")
    return fit.params.rho_d


def _table1_replicate(args):
    cfg, rep, opts = args
    ds, _ = _replicate_data(cfg, rep)
    jobs = [
        ("Combined", lambda: _converged_rho(fit_combined(ds.mz, ds.dz, opts))),
        ("Mixture", lambda: _converged_rho(fit_dz_separate(ds.dz, opts))),
        ("Pearson", lambda: pearson_r(ds.dz)),
    ]
    if cfg.homogeneous:
        jobs += [
            ("Combined*", lambda: _converged_rho(fit_combined_null(ds.mz, ds.dz, opts))),
            ("Mixture*", lambda: fit_dz_separate_equal_means(ds.dz).params.rho_d),
        ]
    out = {}
    for name, job in jobs:
        try:
            out[name] = float(job())
        except _FAIL:
            out[name] = math.nan
    return out


def _summary(vals):
    ok = vals[np.isfinite(vals)]
    mean = float(ok.mean()) if ok.size else math.nan
    sd = float(ok.std(ddof=1)) if ok.size > 1 else math.nan
    return mean, sd, int(ok.size), int(vals.size - ok.size)


def run_table1(grid=None, opts=None, threads=1, keep_raw=False):
    """Mean and SD of each rho_D estimator per cell.

    Starred estimators (equal DZ means imposed) are run only in homogeneous
    cells. Failed fits are excluded and counted.
    """
    grid = table1_grid() if grid is None else list(grid)
    opts = opts or FitOptions()
    rows, raw = [], {}
    for ci, cfg in enumerate(grid):
        res = pmap(_table1_replicate, [(cfg, i, opts) for i in range(cfg.n_reps)], threads)
        for name in TABLE1_ESTIMATORS:
            if name not in res[0]:
                continue
            vals = np.array([r[name] for r in res])
            mean, sd, n_ok, n_fail = _summary(vals)
            rows.append(ReportRow(cfg.n_m, cfg.n_d, cfg.rho_d, cfg.mu_d2, cfg.delta, name,
                                  mean, sd, n_ok, n_fail))
            if keep_raw:
                raw[(ci, name)] = vals
    return ScenarioReport("table1", tuple(rows), raw if keep_raw else None)


TABLE2_METHODS = (("Combined", "combined"), ("Mixture", "separate"), ("Pearson", "pearson"))


def _table2_replicate(args):
    cfg, rep, opts, n_boot, level, methods = args
    ds, rng = _replicate_data(cfg, rep)
    boot_seed = int(rng.integers(0, 2 ** 63 - 1))
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    out = {}
    for label, method in methods:
        try:
            (rm, rd), reps = bootstrap_rhos(ds.mz, ds.dz, method, n_boot, boot_seed, opts)
        except _FAIL:
            out[label] = (math.nan, math.nan, math.nan)
            continue
        d = reps[:, 0] - reps[:, 1]
        d = d[np.isfinite(d)]
        lo, hi = np.quantile(d, [lo_q, hi_q]) if d.size else (math.nan, math.nan)
        out[label] = (float(rm - rd), float(lo), float(hi))
    return out


def run_table2(grid=None, n_boot=500, level=0.95, opts=None, threads=1, keep_raw=False,
               methods=TABLE2_METHODS):
    """Delta estimates with percentile bootstrap CIs and their coverage of the true delta.

    Within a replicate every method sees the same bootstrap resamples.
    ``mean`` and ``sd`` describe the point estimates; ``ci_low``/``ci_high``
    are averaged interval endpoints and ``coverage`` is in percent.
    """
    grid = table2_grid() if grid is None else list(grid)
    opts = opts or FitOptions()
    rows, raw = [], {}
    for ci, cfg in enumerate(grid):
        args = [(cfg, i, opts, n_boot, level, tuple(methods)) for i in range(cfg.n_reps)]
        res = pmap(_table2_replicate, args, threads)
        for label, _ in methods:
            arr = np.array([r[label] for r in res], dtype=float).reshape(-1, 3)
            good = np.all(np.isfinite(arr), axis=1)
            a = arr[good]
            mean, sd, n_ok, n_fail = _summary(np.where(good, arr[:, 0], math.nan))
            cover = (100.0 * float(np.mean((a[:, 1] <= cfg.delta) & (cfg.delta <= a[:, 2])))
                     if a.size else math.nan)
            rows.append(ReportRow(
                cfg.n_m, cfg.n_d, cfg.rho_d, cfg.mu_d2, cfg.delta, label, mean, sd, n_ok, n_fail,
                ci_low=float(a[:, 1].mean()) if a.size else math.nan,
                ci_high=float(a[:, 2].mean()) if a.size else math.nan,
                coverage=cover,
            ))
            if keep_raw:
                raw[(ci, label)] = arr
    return ScenarioReport("table2", tuple(rows), raw if keep_raw else None)


@dataclass(frozen=True)
class QQResult:
    """Sorted null statistics against unadjusted and adjusted mixture quantiles."""

    empirical: np.ndarray
    unadjusted: np.ndarray
    adjusted: np.ndarray
    a_n: float
    n_failed: int

    def ks_adjusted(self):
        return ks_chibar(self.empirical, self.a_n)

    def ks_unadjusted(self):
        return ks_chibar(self.empirical, 0.5)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["empirical", "unadjusted", "adjusted"])
        for row in zip(self.empirical, self.unadjusted, self.adjusted):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_records(self):
        return [{"empirical": float(e), "unadjusted": float(u), "adjusted": float(a)}
                for e, u, a in zip(self.empirical, self.unadjusted, self.adjusted)]


def _null_stat(args):
    cfg, rep, opts = args
    ds, _ = _replicate_data(cfg, rep)
    try:
        return lrt_statistic(ds.mz, ds.dz, opts)[0]
    except _FAIL:
        return math.nan


def null_statistics(cfg, opts=None, threads=1):
    """Homogeneity LRT statistics over ``cfg.n_reps`` replicates (NaN marks a failure)."""
    if not cfg.homogeneous:
        raise DomainError("null simulation needs mu_d1 == mu_d2")
    opts = opts or FitOptions()
    return np.array(pmap(_null_stat, [(cfg, i, opts) for i in range(cfg.n_reps)], threads))


def run_null_qq(cfg, opts=None, threads=1):
    """QQ data for the homogeneity statistic under a null configuration.

    Plotting positions are ``(i - 0.5)/N``; the adjusted reference puts
    weight ``a_n_empirical(n_M)`` on chi2(1), the unadjusted one 1/2.
    """
    rs = null_statistics(cfg, opts, threads)
    ok = np.sort(rs[np.isfinite(rs)])
    q = (np.arange(1, ok.size + 1) - 0.5) / ok.size
    a_n = a_n_empirical(cfg.n_m)
    return QQResult(ok, np.asarray(chibar_ppf(q, 0.5)), np.asarray(chibar_ppf(q, a_n)), a_n,
                    int(rs.size - ok.size))
