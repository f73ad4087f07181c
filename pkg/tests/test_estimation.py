import math

import numpy as np
import pytest

from conftest import make_data
from twinmix.errors import DegenerateDataError, DomainError
from twinmix.estimation import (
    FitOptions,
    canonicalize,
    combined_loglik,
    dz_loglik,
    fit_combined,
    fit_combined_generic,
    fit_combined_null,
    fit_dz_separate,
    fit_dz_separate_equal_means,
    fit_mz,
    pearson_r,
)
from twinmix.model import BvnParams, ModelParams, PairObs, sample_pairs


def reswap(arr, seed):
    flip = np.random.default_rng(seed).random(len(arr)) < 0.5
    out = arr.copy()
    out[flip] = out[flip][:, ::-1]
    return out


def assert_same_fit(a, b, tol=1e-6):
    for k, v in a.params.as_dict().items():
        w = getattr(b.params, k)
        if math.isnan(v):
            assert math.isnan(w)
        else:
            assert w == pytest.approx(v, abs=tol), k
    assert b.loglik == pytest.approx(a.loglik, abs=1e-8)


class TestFitOptions:
    @pytest.mark.parametrize("kw", [{"max_iter": 0}, {"tol": 0.0}, {"n_starts": 0}])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            FitOptions(**kw)


class TestFitMz:
    def test_hand_computed(self):
        mu, rho, s2, _ = fit_mz([(0.0, 0.0), (2.0, 1.0)])
        assert mu == pytest.approx(0.75)
        assert s2 == pytest.approx(0.6875)
        assert rho == pytest.approx(0.875 / 1.375)

    def test_matches_numerical_maximum(self):
        from scipy import optimize

        y = sample_pairs(np.random.default_rng(0), BvnParams(0, 0, 0.6, 2.0), 40)
        fit = fit_mz(y)

        def nll(x):
            p = BvnParams(x[0], x[0], math.tanh(x[1]), math.exp(x[2]))
            from twinmix.model import bvn_logpdf

            return -np.sum(bvn_logpdf(y[:, 0], y[:, 1], p))

        r = optimize.minimize(nll, [0.0, 0.0, 0.0], method="Nelder-Mead",
                              options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        assert fit.mu == pytest.approx(r.x[0], abs=1e-6)
        assert fit.rho == pytest.approx(math.tanh(r.x[1]), abs=1e-6)
        assert fit.sigma2 == pytest.approx(math.exp(r.x[2]), abs=1e-6)
        assert fit.loglik == pytest.approx(-r.fun, abs=1e-9)

    def test_constant_data(self):
        with pytest.raises(DegenerateDataError):
            fit_mz([(2.0, 2.0)] * 5)

    def test_accepts_pair_objects(self):
        pairs = [PairObs(0.0, 0.0), PairObs(2.0, 1.0), PairObs(1.0, 1.5)]
        assert fit_mz(pairs) == fit_mz(np.array(pairs))

    def test_consistency(self):
        y = sample_pairs(np.random.default_rng(1), BvnParams(0, 0, 0.9, 1), 10_000)
        mu, rho, s2, _ = fit_mz(y)
        n = len(y)
        assert abs(mu) < 3 * math.sqrt((1 + 0.9) / (2 * n))
        assert abs(rho - 0.9) < 3 * (1 - 0.81) / math.sqrt(n)
        assert abs(s2 - 1.0) < 3 * math.sqrt(2.0 / (2 * n)) * 1.5


class TestPearson:
    def test_perfect_line(self):
        assert pearson_r([(0, 0), (1, 1), (2, 2)]) == pytest.approx(1.0)

    def test_location_invariant(self):
        y = sample_pairs(np.random.default_rng(2), BvnParams(0, 1, 0.5, 1), 50)
        assert pearson_r(y + 7.5) == pytest.approx(pearson_r(y), abs=1e-12)

    def test_uses_coordinate_means(self):
        y = np.array([[0.0, 10.0], [1.0, 12.0], [2.0, 11.0], [3.0, 14.0]])
        assert pearson_r(y) == pytest.approx(np.corrcoef(y[:, 0], y[:, 1])[0, 1])

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            pearson_r([(1, 0), (1, 2), (1, 3)])


class TestCanonicalize:
    def test_orders_means(self):
        p = canonicalize(ModelParams(0, 0.5, 1.0, 0.0, 0.2, 1.0))
        assert (p.mu_d1, p.mu_d2) == (0.0, 1.0)

    def test_fixed_point(self):
        p = ModelParams(0, 0.5, 0.0, 1.0, 0.2, 1.0)
        assert canonicalize(p) == p

    def test_loglik_unchanged(self):
        mz, dz = make_data(3)
        p = ModelParams(0.1, 0.7, 1.2, -0.3, 0.25, 1.1)
        assert combined_loglik(canonicalize(p), mz, dz) == pytest.approx(combined_loglik(p, mz, dz),
                                                                          abs=1e-10)


class TestSeparate:
    def test_swap_duplicated_data_gives_same_fit(self):
        _, dz = make_data(4, n_d=80)
        a = fit_dz_separate(dz)
        b = fit_dz_separate(np.vstack([dz, dz[:, ::-1]]))
        for k in ("mu_d1", "mu_d2", "rho_d", "sigma2"):
            assert getattr(b.params, k) == pytest.approx(getattr(a.params, k), abs=1e-6)
        assert b.loglik == pytest.approx(2 * a.loglik, abs=1e-7)

    def test_mz_slots_are_nan(self):
        _, dz = make_data(5)
        p = fit_dz_separate(dz).params
        assert math.isnan(p.rho_m) and math.isnan(p.mu_m)
        assert p.mu_d1 <= p.mu_d2

    def test_monotone_em(self):
        for seed in range(8):
            _, dz = make_data(seed, n_d=60, mu_d2=0.4)
            f = fit_dz_separate(dz, FitOptions(accelerate=False, max_iter=3000))
            assert np.all(np.diff(f.trace) >= -1e-9)

    def test_loglik_matches_direct_density(self):
        _, dz = make_data(6)
        f = fit_dz_separate(dz)
        assert dz_loglik(f.params, dz) == pytest.approx(f.loglik, abs=1e-9)

    def test_too_few_pairs(self):
        with pytest.raises(DegenerateDataError):
            fit_dz_separate([(0, 1), (1, 2), (2, 0)])

    def test_equal_means_variant_is_mz_closed_form(self):
        _, dz = make_data(7)
        f = fit_dz_separate_equal_means(dz)
        mu, rho, s2, ll = fit_mz(dz)
        assert (f.params.mu_d1, f.params.mu_d2, f.params.rho_d, f.params.sigma2, f.loglik) == (
            mu, mu, rho, s2, ll)

    def test_equal_means_close_to_pearson(self):
        _, dz = make_data(8, n_d=400, mu_d2=0.0)
        r = fit_dz_separate_equal_means(dz).params.rho_d
        assert abs(r - pearson_r(dz)) < 5.0 / 400


class TestCombined:
    def test_loglik_matches_direct_density(self):
        mz, dz = make_data(10)
        f = fit_combined(mz, dz)
        assert combined_loglik(f.params, mz, dz) == pytest.approx(f.loglik, abs=1e-9)

    def test_not_below_truth(self):
        truth = ModelParams(0.0, 0.8, 0.0, 1.0, 0.4, 1.0)
        for seed in range(10):
            mz, dz = make_data(seed)
            assert fit_combined(mz, dz).loglik >= combined_loglik(truth, mz, dz) - 1e-9

    def test_null_not_above_alternative(self):
        for seed in range(10):
            mz, dz = make_data(seed, mu_d2=0.3)
            alt, null = fit_combined(mz, dz), fit_combined_null(mz, dz)
            assert null.loglik <= alt.loglik + 1e-9
            assert null.params.mu_d1 == null.params.mu_d2

    def test_monotone_em(self):
        for seed in range(8):
            mz, dz = make_data(seed, mu_d2=0.2)
            for accel in (False, True):
                f = fit_combined(mz, dz, FitOptions(accelerate=accel, max_iter=3000))
                assert np.all(np.diff(f.trace) >= -1e-9)

    def test_converges_and_reports_winner(self):
        mz, dz = make_data(11)
        f = fit_combined(mz, dz, FitOptions(n_starts=5))
        assert f.converged
        assert 0 <= f.start_index < 5
        assert 1 <= f.n_converged <= 5

    def test_deterministic(self):
        mz, dz = make_data(12)
        assert fit_combined(mz, dz) == fit_combined(mz, dz)

    def test_swap_invariance(self):
        mz, dz = make_data(13, mu_d2=0.8)
        a = fit_combined(mz, dz)
        b = fit_combined(reswap(mz, 1), reswap(dz, 2))
        assert_same_fit(a, b)

    @pytest.mark.parametrize("shift,scale", [(5.0, 1.0), (0.0, 3.0), (-2.0, 0.25)])
    def test_location_scale_equivariance(self, shift, scale):
        mz, dz = make_data(14, mu_d2=0.9)
        a = fit_combined(mz, dz).params
        b = fit_combined(scale * mz + shift, scale * dz + shift).params
        for k in ("rho_m", "rho_d"):
            assert getattr(b, k) == pytest.approx(getattr(a, k), abs=1e-8)
        assert b.sigma2 == pytest.approx(scale ** 2 * a.sigma2, rel=1e-8)
        for k in ("mu_m", "mu_d1", "mu_d2"):
            assert getattr(b, k) == pytest.approx(scale * getattr(a, k) + shift, abs=1e-7 * scale)

    def test_symmetric_dz_restriction_inactive(self):
        # pairs listed in both orders make equal DZ means stationary; with the DZ
        # spread below the shared variance a mean gap cannot help, so the
        # restriction is inactive and R is exactly 0
        g = np.random.default_rng(15)
        mz = sample_pairs(g, BvnParams(0, 0, 0.8, 3.0), 50)
        s = g.standard_normal(60)
        t = g.standard_normal(60) * 0.3
        base = np.column_stack([s + t, s - t]) / math.sqrt(2.0)
        dz = np.vstack([base, base[:, ::-1]])
        alt, null = fit_combined(mz, dz), fit_combined_null(mz, dz)
        assert alt.loglik == pytest.approx(null.loglik, abs=1e-9)
        assert alt.params.mu_d2 - alt.params.mu_d1 == pytest.approx(0.0, abs=1e-6)

    def test_matches_generic_optimizer(self):
        g = np.random.default_rng(16)
        for _ in range(3):
            mz = sample_pairs(g, BvnParams(0, 0, 0.7, 1.3), 30)
            dz = sample_pairs(g, BvnParams(0, g.uniform(0, 1.5), 0.3, 1.3), 30)
            assert fit_combined(mz, dz).loglik == pytest.approx(
                fit_combined_generic(mz, dz).loglik, abs=1e-6)

    def test_warm_start(self):
        mz, dz = make_data(17)
        a = fit_combined(mz, dz)
        b = fit_combined(mz, dz, init=a.params)
        assert b.loglik == pytest.approx(a.loglik, abs=1e-9)

    def test_stratum_too_small(self):
        mz, dz = make_data(18)
        with pytest.raises(DegenerateDataError):
            fit_combined(mz[:2], dz)

    def test_non_finite(self):
        mz, dz = make_data(19)
        mz[0, 0] = np.nan
        with pytest.raises(DomainError):
            fit_combined(mz, dz)


@pytest.mark.slow
class TestReferenceCells:
    """Monte Carlo means and SDs of rho_D estimators against printed values."""

    @staticmethod
    def _rho(n, mu_d2, rho_d, fitter, reps=1000, seed=99):
        out = []
        for i in range(reps):
            mz, dz = make_data(seed * 100_000 + i, n_m=n, n_d=n, mu_d2=mu_d2, rho_m=0.9, rho_d=rho_d)
            out.append(fitter(mz, dz))
        return np.mean(out), np.std(out, ddof=1)

    def test_mixture_heterogeneous(self):
        m, s = self._rho(400, 1.0, 0.3, lambda mz, dz: fit_dz_separate(dz).params.rho_d)
        assert abs(m - 0.294) < 0.02 and abs(s - 0.089) < 0.2 * 0.089

    def test_mixture_star_homogeneous(self):
        m, s = self._rho(400, 0.0, 0.3,
                         lambda mz, dz: fit_dz_separate_equal_means(dz).params.rho_d)
        assert abs(m - 0.298) < 0.02 and abs(s - 0.045) < 0.2 * 0.045

    def test_combined_homogeneous(self):
        m, s = self._rho(400, 0.0, 0.3, lambda mz, dz: fit_combined(mz, dz).params.rho_d)
        assert abs(m - 0.351) < 0.02 and abs(s - 0.080) < 0.2 * 0.080

    def test_combined_high_correlation(self):
        m, s = self._rho(400, 1.0, 0.8, lambda mz, dz: fit_combined(mz, dz).params.rho_d)
        assert abs(m - 0.800) < 0.02 and abs(s - 0.020) < 0.2 * 0.020

    def test_pearson_mean(self):
        m, _ = self._rho(400, 1.0, 0.5, lambda mz, dz: pearson_r(dz))
        assert abs(m - 0.201) < 0.02
