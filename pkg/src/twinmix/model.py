"""Densities, samplers and parameter plumbing for the swap-mixture model.

An observed pair ``(y1, y2)`` is an equal-variance bivariate normal draw
whose coordinates were recorded in random order, so its density is the
equal-weight mixture of the bivariate normal with means ``(mu1, mu2)`` and
the one with means ``(mu2, mu1)``. The mixture weight is fixed at 1/2.
"""

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from ._kernels import RHO_EPS, SIGMA2_MIN
from .errors import DomainError

__all__ = [
    "RHO_EPS",
    "SIGMA2_MIN",
    "PairObs",
    "BvnParams",
    "ModelParams",
    "UnconstrainedParams",
    "bvn_logpdf",
    "mixture_logpdf",
    "sample_pair",
    "sample_pairs",
    "pearson_limit",
    "mixture_moments",
    "to_unconstrained",
    "from_unconstrained",
]

_LOG_HALF = math.log(0.5)


class PairObs(NamedTuple):
    """One recorded pair; ``y1`` is whichever member happened to be listed first."""

    y1: float
    y2: float


def _check_bvn(rho, sigma2):
    if not sigma2 > 0.0:
        raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
    if not abs(rho) < 1.0:
        raise DomainError(f"|rho| must be < 1, got {rho!r}")


@dataclass(frozen=True)
class BvnParams:
    mu1: float
    mu2: float
    rho: float
    sigma2: float

    def __post_init__(self):
        _check_bvn(self.rho, self.sigma2)

    def swapped(self):
        return BvnParams(self.mu2, self.mu1, self.rho, self.sigma2)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the combined MZ + DZ model.

    A fit of the DZ stratum alone leaves ``mu_m`` and ``rho_m`` as NaN.
    """

    mu_m: float
    rho_m: float
    mu_d1: float
    mu_d2: float
    rho_d: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2!r}")
        for name in ("rho_m", "rho_d"):
            r = getattr(self, name)
            if not (math.isnan(r) and name == "rho_m") and not abs(r) < 1.0:
                raise DomainError(f"|{name}| must be < 1, got {r!r}")

    @property
    def delta(self):
        return self.rho_m - self.rho_d

    def mz(self):
        return BvnParams(self.mu_m, self.mu_m, self.rho_m, self.sigma2)

    def dz(self):
        return BvnParams(self.mu_d1, self.mu_d2, self.rho_d, self.sigma2)

    def as_dict(self):
        return asdict(self)


class UnconstrainedParams(NamedTuple):
    """``ModelParams`` mapped to the real line: atanh for correlations, log for sigma2."""

    mu_m: float
    z_m: float
    mu_d1: float
    mu_d2: float
    z_d: float
    log_sigma2: float


def bvn_logpdf(y1, y2, p):
    """Log density of the equal-variance bivariate normal; broadcasts over arrays."""
    _check_bvn(p.rho, p.sigma2)
    d1 = np.asarray(y1, dtype=float) - p.mu1
    d2 = np.asarray(y2, dtype=float) - p.mu2
    om = 1.0 - p.rho * p.rho
    out = (-math.log(2.0 * math.pi * p.sigma2) - 0.5 * math.log(om)
           - ((d1 * d1 + d2 * d2) - 2.0 * p.rho * (d1 * d2)) / (2.0 * p.sigma2 * om))
    return out[()] if out.ndim == 0 else out


def mixture_logpdf(y1, y2, p):
    """Log density of the swap mixture 0.5*phi(mu1, mu2) + 0.5*phi(mu2, mu1)."""
    a = bvn_logpdf(y1, y2, p)
    if p.mu1 == p.mu2:
        return a
    b = bvn_logpdf(y1, y2, p.swapped())
    out = np.logaddexp(a, b) + _LOG_HALF
    return out[()] if np.ndim(out) == 0 else out


def sample_pair(rng, p):
    """Draw one unordered pair.

    Consumes two standard normals and then one uniform from ``rng``; the
    uniform decides the swap.
    """
    _check_bvn(p.rho, p.sigma2)
    z1, z2 = rng.standard_normal(2)
    sd = math.sqrt(p.sigma2)
    y1 = p.mu1 + sd * z1
    y2 = p.mu2 + sd * (p.rho * z1 + math.sqrt(1.0 - p.rho * p.rho) * z2)
    if rng.random() < 0.5:
        y1, y2 = y2, y1
    return PairObs(float(y1), float(y2))


def sample_pairs(rng, p, n):
    """Draw ``n`` unordered pairs as an ``(n, 2)`` array.

    Batched form of :func:`sample_pair`: all ``2n`` normals are drawn first
    (row-major), then ``n`` uniforms for the swaps, so the stream is not
    consumed in the same order as ``n`` single calls.
    """
    _check_bvn(p.rho, p.sigma2)
    n = int(n)
    if n < 0:
        raise DomainError("n must be non-negative")
    z = rng.standard_normal((n, 2))
    u = rng.random(n)
    sd = math.sqrt(p.sigma2)
    y1 = p.mu1 + sd * z[:, 0]
    y2 = p.mu2 + sd * (p.rho * z[:, 0] + math.sqrt(1.0 - p.rho * p.rho) * z[:, 1])
    swap = u < 0.5
    out = np.empty((n, 2))
    out[:, 0] = np.where(swap, y2, y1)
    out[:, 1] = np.where(swap, y1, y2)
    return out


def pearson_limit(mu1, mu2, rho, sigma2):
    """Probability limit of Pearson's r computed on unordered pairs."""
    if not sigma2 > 0.0:
        raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
    g = 0.25 * (mu1 - mu2) ** 2
    return (rho * sigma2 - g) / (sigma2 + g)


def mixture_moments(p):
    """``(E[Y1], E[Y1*Y2], E[Y1**2])`` under the swap mixture."""
    return (
        0.5 * (p.mu1 + p.mu2),
        p.rho * p.sigma2 + p.mu1 * p.mu2,
        p.sigma2 + 0.5 * (p.mu1 ** 2 + p.mu2 ** 2),
    )


def to_unconstrained(p):
    if not isinstance(p, ModelParams):
        p = ModelParams(**p)
    if math.isnan(p.rho_m):
        raise DomainError("rho_m is undefined")
    return UnconstrainedParams(
        p.mu_m, math.atanh(p.rho_m), p.mu_d1, p.mu_d2, math.atanh(p.rho_d), math.log(p.sigma2)
    )


def from_unconstrained(u):
    u = UnconstrainedParams(*u)
    return ModelParams(
        mu_m=u.mu_m,
        rho_m=math.tanh(u.z_m),
        mu_d1=u.mu_d1,
        mu_d2=u.mu_d2,
        rho_d=math.tanh(u.z_d),
        sigma2=math.exp(u.log_sigma2),
    )
