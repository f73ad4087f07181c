"""Maximum-likelihood fitters for MZ, DZ and combined twin data.

All fitters take pairs as an ``(n, 2)`` array-like (a list of
:class:`~twinmix.model.PairObs` works too). The mixture fits run EM from
several deterministic starts and keep the highest log-likelihood; the
reported parameters are canonicalised so that ``mu_d1 <= mu_d2``.
"""

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import optimize

from . import _kernels
from .errors import DegenerateDataError, DomainError
from .model import (
    RHO_EPS,
    SIGMA2_MIN,
    BvnParams,
    ModelParams,
    bvn_logpdf,
    from_unconstrained,
    mixture_logpdf,
    to_unconstrained,
)

__all__ = [
    "FitOptions",
    "FitResult",
    "MzFit",
    "as_pairs",
    "fit_mz",
    "fit_dz_separate",
    "fit_dz_separate_equal_means",
    "fit_combined",
    "fit_combined_null",
    "fit_combined_generic",
    "pearson_r",
    "canonicalize",
    "combined_loglik",
    "dz_loglik",
]

_SQRT2 = math.sqrt(2.0)
_TIE = 1e-9
_CM_CYCLES = 50


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 2000
    tol: float = 1e-10
    n_starts: int = 8
    seed: int = 0
    # natural-scale fixed-point residual required on top of ``tol``
    param_tol: float = 1e-8
    # SQUAREM extrapolation of the EM map
    accelerate: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if not self.tol > 0:
            raise DomainError("tol must be > 0")
        if self.n_starts < 1:
            raise DomainError("n_starts must be >= 1")


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    loglik: float
    iterations: int
    converged: bool
    start_index: int
    model: str = "combined"
    n_converged: int = 0
    # objective at the start of every iteration of the winning run
    trace: np.ndarray = field(default=None, repr=False, compare=False)


class MzFit(NamedTuple):
    mu: float
    rho: float
    sigma2: float
    loglik: float


def as_pairs(pairs, min_pairs=1, name="pairs"):
    """Validate and convert to a float ``(n, 2)`` array."""
    arr = np.asarray(pairs, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    if arr.shape[0] < min_pairs:
        raise DegenerateDataError(f"{name}: need at least {min_pairs} pairs, got {arr.shape[0]}")
    return arr


class _Rotated(NamedTuple):
    n: int
    mean: float  # mean of all 2n values
    ss_s: float  # centred sum of squares of (y1 + y2)/sqrt(2)
    t: np.ndarray  # (y1 - y2)/sqrt(2)
    tt: float

    @property
    def A(self):
        # sum of squared deviations about the common mean
        return self.ss_s + self.tt

    @property
    def C(self):
        return 0.5 * (self.ss_s - self.tt)


def _rotate(arr):
    s = (arr[:, 0] + arr[:, 1]) / _SQRT2
    t = np.ascontiguousarray((arr[:, 0] - arr[:, 1]) / _SQRT2)
    sbar = s.mean()
    ss_s = float(np.sum((s - sbar) ** 2))
    return _Rotated(arr.shape[0], float(sbar / _SQRT2), ss_s, t, float(np.sum(t * t)))


def _clip_rho(r, lim=1.0 - RHO_EPS):
    return min(lim, max(-lim, r))


def _check_spread(rot, name):
    if rot.A / (2.0 * rot.n) < SIGMA2_MIN:
        raise DegenerateDataError(f"{name}: values are (numerically) constant")


def fit_mz(pairs):
    """Closed-form MLE of the equal-means, equal-variance bivariate normal.

    Two pairs are enough for the closed form to be defined.
    """
    arr = as_pairs(pairs, 2, "MZ pairs")
    rot = _rotate(arr)
    _check_spread(rot, "MZ pairs")
    n = rot.n
    sigma2 = rot.A / (2.0 * n)
    rho = _clip_rho(rot.C / (n * sigma2))
    ll = _kernels.gauss_loglik(n, rot.ss_s, rot.tt, sigma2, rho)
    return MzFit(rot.mean, rho, sigma2, float(ll))


def pearson_r(pairs):
    """Sample correlation of first versus second recorded coordinate."""
    arr = as_pairs(pairs, 3)
    d1 = arr[:, 0] - arr[:, 0].mean()
    d2 = arr[:, 1] - arr[:, 1].mean()
    den = math.sqrt(float(np.sum(d1 * d1)) * float(np.sum(d2 * d2)))
    if not den > 0.0:
        raise DegenerateDataError("a coordinate has zero variance")
    return float(np.sum(d1 * d2)) / den


def canonicalize(params):
    if params.mu_d1 > params.mu_d2:
        return replace(params, mu_d1=params.mu_d2, mu_d2=params.mu_d1)
    return params


def dz_loglik(params, dz):
    p = BvnParams(params.mu_d1, params.mu_d2, params.rho_d, params.sigma2)
    arr = np.asarray(dz, dtype=float)
    return float(np.sum(mixture_logpdf(arr[:, 0], arr[:, 1], p)))


def combined_loglik(params, mz, dz):
    """Combined log-likelihood evaluated directly from the pair densities."""
    arr = np.asarray(mz, dtype=float)
    pm = BvnParams(params.mu_m, params.mu_m, params.rho_m, params.sigma2)
    return float(np.sum(bvn_logpdf(arr[:, 0], arr[:, 1], pm))) + dz_loglik(params, dz)


def _theta_starts(arr, rot, opts):
    """Initial half-separations on the rotated scale, one per start.

    Start 0 uses the first/second coordinate means, start 1 the symmetric
    point (equal means), the rest spread separations of up to 1.5 pooled SDs
    drawn from ``opts.seed``.
    """
    thetas = [float(arr[:, 0].mean() - arr[:, 1].mean()) / _SQRT2, 0.0]
    if opts.n_starts > 2:
        sd = math.sqrt(rot.A / (2.0 * rot.n))
        ks = np.random.default_rng(opts.seed).uniform(0.1, 1.5, opts.n_starts - 2)
        thetas.extend(float(-_SQRT2 * k * sd) for k in ks)
    return thetas[: opts.n_starts]


def _pick(runs):
    best = max(r[4] for r in runs)
    for i, r in enumerate(runs):
        if r[4] >= best - _TIE:
            return i
    raise AssertionError("unreachable")


def _dz_means(rot, theta):
    return rot.mean + theta / _SQRT2, rot.mean - theta / _SQRT2


def _run(nM, mz_rot, dz_rot, starts, opts, fix_theta=False):
    runs = []
    for theta, s2, rm, rd in starts:
        runs.append(_kernels.em_fit(
            nM,
            mz_rot.ss_s if mz_rot else 0.0,
            mz_rot.tt if mz_rot else 0.0,
            dz_rot.t, dz_rot.ss_s,
            float(theta), float(s2), float(rm), float(rd),
            opts.max_iter, opts.tol, opts.param_tol, _CM_CYCLES, fix_theta, opts.accelerate,
        ))
    return runs


def _result(run, idx, runs, mz_rot, dz_rot, model):
    theta, s2, rm, rd, ll, iters, conv, trace = run
    mu1, mu2 = _dz_means(dz_rot, theta)
    params = canonicalize(ModelParams(
        mu_m=mz_rot.mean if mz_rot else math.nan,
        rho_m=float(rm) if mz_rot else math.nan,
        mu_d1=float(mu1),
        mu_d2=float(mu2),
        rho_d=float(rd),
        sigma2=float(s2),
    ))
    return FitResult(
        params=params,
        loglik=float(ll),
        iterations=int(iters),
        converged=bool(conv),
        start_index=idx,
        model=model,
        n_converged=sum(bool(r[6]) for r in runs),
        trace=np.asarray(trace),
    )


def _pooled_start(mz_rot, dz_rot):
    n = dz_rot.n + (mz_rot.n if mz_rot else 0)
    a = dz_rot.A + (mz_rot.A if mz_rot else 0.0)
    s2 = a / (2.0 * n)
    rm = _clip_rho(2.0 * mz_rot.C / mz_rot.A, 0.99) if mz_rot else 0.0
    rd = _clip_rho(2.0 * dz_rot.C / dz_rot.A, 0.99)
    return s2, rm, rd


def _warm(params):
    theta = (params.mu_d1 - params.mu_d2) / _SQRT2
    rm = 0.0 if math.isnan(params.rho_m) else params.rho_m
    return theta, params.sigma2, rm, params.rho_d


def _prepare(mz, dz, min_mz, min_dz):
    dz_arr = as_pairs(dz, min_dz, "DZ pairs")
    dz_rot = _rotate(dz_arr)
    _check_spread(dz_rot, "DZ pairs")
    mz_rot = None
    if mz is not None:
        mz_arr = as_pairs(mz, min_mz, "MZ pairs")
        mz_rot = _rotate(mz_arr)
        _check_spread(mz_rot, "MZ pairs")
    return mz_rot, dz_arr, dz_rot


def _starts_for(dz_arr, dz_rot, mz_rot, opts, init):
    s2, rm, rd = _pooled_start(mz_rot, dz_rot)
    moment = (_theta_starts(dz_arr, dz_rot, replace(opts, n_starts=1))[0], s2, rm, rd)
    if init is not None:
        return [_warm(init), moment]
    return [(th, s2, rm, rd) for th in _theta_starts(dz_arr, dz_rot, opts)]


def fit_combined(mz, dz, opts=None, init=None):
    """Maximise the combined MZ + DZ likelihood with a shared variance.

    ``init`` (a :class:`ModelParams`) replaces the multi-start scheme with a
    warm start followed by the moment start, which is what bootstrap refits use.
    """
    opts = opts or FitOptions()
    mz_rot, dz_arr, dz_rot = _prepare(mz, dz, 3, 3)
    starts = _starts_for(dz_arr, dz_rot, mz_rot, opts, init)
    runs = _run(mz_rot.n, mz_rot, dz_rot, starts, opts)
    i = _pick(runs)
    return _result(runs[i], i, runs, mz_rot, dz_rot, "combined")


def fit_combined_null(mz, dz, opts=None):
    """Combined fit restricted to ``mu_d1 == mu_d2`` (the homogeneity null)."""
    opts = opts or FitOptions()
    mz_rot, dz_arr, dz_rot = _prepare(mz, dz, 3, 3)
    s2, rm, rd = _pooled_start(mz_rot, dz_rot)
    runs = _run(mz_rot.n, mz_rot, dz_rot, [(0.0, s2, rm, rd)], opts, fix_theta=True)
    return _result(runs[0], 0, runs, mz_rot, dz_rot, "null")


def fit_dz_separate(dz, opts=None, init=None):
    """Swap-mixture MLE from DZ pairs alone, with their own variance.

    The MZ slots of the returned parameters are NaN.
    """
    opts = opts or FitOptions()
    _, dz_arr, dz_rot = _prepare(None, dz, 0, 4)
    starts = _starts_for(dz_arr, dz_rot, None, opts, init)
    runs = _run(0, None, dz_rot, starts, opts)
    i = _pick(runs)
    return _result(runs[i], i, runs, None, dz_rot, "separate")


def fit_dz_separate_equal_means(dz):
    """DZ-only fit with ``mu_d1 == mu_d2``; the same closed form as :func:`fit_mz`."""
    mu, rho, sigma2, ll = fit_mz(dz)
    params = ModelParams(math.nan, math.nan, mu, mu, rho, sigma2)
    return FitResult(params, ll, 0, True, 0, model="separate_equal_means", n_converged=1,
                     trace=np.array([ll]))


def _generic_starts(mz_arr, dz_arr):
    mu_m = float(mz_arr.mean())
    m = float(dz_arr.mean())
    both = np.concatenate([mz_arr.ravel() - mu_m, dz_arr.ravel() - m])
    s2 = float(np.mean(both ** 2))
    sd = math.sqrt(s2)

    def corr(a, c):
        d = a - c
        return _clip_rho(2.0 * float(np.sum(d[:, 0] * d[:, 1])) / float(np.sum(d * d)), 0.95)

    rm = corr(mz_arr, mu_m)
    out = []
    # the pooled DZ correlation is biased down by any mean gap, so also try fixed values
    for rd in (corr(dz_arr, m), 0.0, 0.5):
        for k in (0.0, 0.25, 0.5, 1.0, 1.5):
            out.append(ModelParams(mu_m, rm, m - k * sd, m + k * sd, rd, s2))
    return out


def fit_combined_generic(mz, dz, starts=None):
    """Combined MLE by a general-purpose optimiser on the unconstrained scale.

    Independent of the EM machinery: the objective is the direct sum of pair
    log-densities, minimised by BFGS and polished by Nelder-Mead from several
    starts. Used as a cross-check of :func:`fit_combined`.
    """
    mz_arr = as_pairs(mz, 3, "MZ pairs")
    dz_arr = as_pairs(dz, 3, "DZ pairs")
    if starts is None:
        starts = _generic_starts(mz_arr, dz_arr)

    def nll(u):
        try:
            p = from_unconstrained(u)
        except DomainError:
            return np.inf
        v = -combined_loglik(p, mz_arr, dz_arr)
        return v if np.isfinite(v) else np.inf

    best = None
    for p0 in starts:
        x0 = np.asarray(to_unconstrained(p0), dtype=float)
        # finite differences may straddle the domain edge, where nll is inf
        with np.errstate(invalid="ignore"):
            r1 = optimize.minimize(nll, x0, method="BFGS", options={"gtol": 1e-10, "maxiter": 5000})
            r2 = optimize.minimize(nll, r1.x, method="Nelder-Mead",
                                   options={"xatol": 1e-11, "fatol": 1e-13, "maxiter": 40000,
                                            "maxfev": 80000})
        r = r2 if r2.fun <= r1.fun else r1
        if best is None or r.fun < best.fun:
            best = r
    params = canonicalize(from_unconstrained(best.x))
    return FitResult(params, float(-best.fun), int(best.nit), bool(best.success), 0,
                     model="generic")
