import io
import json
import math

import mpmath
import numpy as np
import pytest
from scipy import optimize, special, stats

from twinmix.errors import DegenerateDataError, DomainError, InputError
from twinmix.dataio import (
    TraitTable,
    TwinDataset,
    format_report,
    inv_norm_cdf,
    load_trait_file,
    load_twin_csv,
    normality_check,
    probit_transform,
    read_trait_tables,
    variance_diagnostic,
    write_dataset_csv,
    write_report,
)
from twinmix.model import BvnParams, sample_pairs


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestInvNormCdf:
    def test_centre(self):
        assert inv_norm_cdf(0.5) == 0.0

    def test_upper_quantile(self):
        # root of ndtr(x) = 0.975 at tight tolerance
        root = optimize.brentq(lambda x: special.ndtr(x) - 0.975, 0, 5, xtol=1e-15)
        assert inv_norm_cdf(0.975) == pytest.approx(root, abs=1e-12)
        assert inv_norm_cdf(0.975) == pytest.approx(1.9599639845400527, abs=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, math.nan])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            inv_norm_cdf(p)

    def test_against_high_precision(self):
        mpmath.mp.dps = 40
        ps = np.concatenate([np.logspace(-12, -1, 23), np.linspace(0.1, 0.9, 17),
                             1 - np.logspace(-1, -12, 23)])
        for p in ps:
            exact = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
            assert inv_norm_cdf(p) == pytest.approx(exact, abs=1e-9)

    def test_odd_and_increasing(self):
        p = np.linspace(1e-6, 0.5, 2001)
        q = inv_norm_cdf(p)
        assert np.all(np.diff(q) > 0)
        np.testing.assert_allclose(inv_norm_cdf(1 - p), -q, atol=1e-9)


class TestProbit:
    def test_half_maps_to_zero(self):
        t = TraitTable.from_arrays(np.full((3, 2), 0.5), np.full((2, 2), 0.5), "x")
        ds = probit_transform(t)
        assert ds.transformed
        assert np.all(ds.mz == 0) and np.all(ds.dz == 0)

    def test_monotone_within_rows(self):
        v = np.random.default_rng(1).uniform(size=(50, 2))
        ds = probit_transform(TraitTable.from_arrays(v, np.zeros((0, 2))))
        assert np.all((v[:, 0] < v[:, 1]) == (ds.mz[:, 0] < ds.mz[:, 1]))

    def test_boundary_names_the_row(self, tmp_path):
        p = _write(tmp_path, "pair_id,zygosity,y1,y2\na,MZ,0.2,0.3\nb,DZ,0.4,1.0\n")
        with pytest.raises(InputError, match="line 3.*'b'"):
            load_twin_csv(p, frequencies=True)

    def test_uniformity_recovered(self):
        z = np.random.default_rng(2).standard_normal(100_000)
        freq = special.ndtr(z).reshape(-1, 2)
        ds = probit_transform(TraitTable.from_arrays(freq, np.zeros((0, 2))))
        back = special.ndtr(ds.mz.ravel())
        assert stats.kstest(back, "uniform").statistic <= 0.02

    def test_uniform_frequencies_look_normal(self):
        g = np.random.default_rng(3)
        ds = probit_transform(TraitTable.from_arrays(g.uniform(size=(96, 2)), np.zeros((0, 2))))
        assert normality_check(ds, repeats=100, rng=4) > 0.1


class TestNormalityCheck:
    def test_normal_data(self):
        ps = [normality_check(TwinDataset(np.random.default_rng(s).standard_normal((96, 2)),
                                          np.zeros((0, 2))), repeats=200, rng=s)
              for s in range(20)]
        assert np.mean(ps) == pytest.approx(0.5, abs=0.1)

    def test_skewed_data(self):
        x = np.random.default_rng(5).exponential(size=(96, 2))
        assert normality_check(TwinDataset(x, np.zeros((0, 2))), repeats=50) < 0.05

    def test_shapiro_uniform_under_null(self):
        g = np.random.default_rng(6)
        p = [stats.shapiro(g.standard_normal(96)).pvalue for _ in range(2000)]
        assert 0.45 < np.mean(p) < 0.55

    def test_errors(self):
        with pytest.raises(DegenerateDataError):
            normality_check(TwinDataset(np.ones((20, 2)), np.zeros((0, 2))))
        with pytest.raises(DegenerateDataError):
            normality_check(TwinDataset(np.eye(2)[:, :2] * [1, 2], np.zeros((0, 2))))
        with pytest.raises(DomainError):
            normality_check(TwinDataset(np.zeros((9, 2)), np.zeros((0, 2))), stratum="XZ")

    def test_dz_stratum(self):
        ds = TwinDataset(np.zeros((0, 2)), np.random.default_rng(7).standard_normal((40, 2)))
        assert 0 < normality_check(ds, "dz", repeats=10) <= 1


class TestVarianceDiagnostic:
    def test_identical_strata(self):
        # heavy-tailed within-pair differences keep the DZ means together,
        # so both fits reduce to the same equal-means normal
        g = np.random.default_rng(1)
        s, t = g.standard_normal(300), g.laplace(size=300) * 0.4
        y = np.column_stack([s + t, s - t]) / math.sqrt(2)
        assert variance_diagnostic(y, y).ratio == pytest.approx(1.0, abs=1e-5)

    def test_quarter(self):
        g = np.random.default_rng(9)
        mz = sample_pairs(g, BvnParams(0, 0, 0.8, 1.0), 2000)
        dz = sample_pairs(g, BvnParams(0, 1, 0.4, 4.0), 2000)
        assert variance_diagnostic(mz, dz).ratio == pytest.approx(0.25, abs=0.03)

    @pytest.mark.slow
    def test_equal_variance_band(self):
        hits = 0
        for s in range(100):
            g = np.random.default_rng(100 + s)
            mz = sample_pairs(g, BvnParams(0, 0, 0.9, 1.0), 400)
            dz = sample_pairs(g, BvnParams(0, 1, 0.3, 1.0), 400)
            hits += 0.8 < variance_diagnostic(mz, dz).ratio < 1.25
        assert hits >= 95


class TestCsv:
    def test_two_rows(self, tmp_path):
        ds = load_twin_csv(_write(tmp_path, "pair_id,zygosity,y1,y2\n1,MZ,0.1,0.2\n2,dz,3,4\n"))
        assert (ds.n_mz, ds.n_dz) == (1, 1)
        np.testing.assert_array_equal(ds.dz, [[3.0, 4.0]])
        assert not ds.transformed

    @pytest.mark.parametrize("body,match", [
        ("1,XZ,0.1,0.2\n", "line 2.*zygosity"),
        ("1,MZ,0.1\n", "line 2.*fields"),
        ("1,MZ,0.1,0.2\n1,DZ,1,2\n", "line 3.*duplicate"),
        ("1,MZ,0.1,abc\n", "line 2.*not a number"),
        ("1,MZ,0.1,0.2\n2,MZ,inf,0\n", "line 3.*non-finite"),
    ])
    def test_row_errors(self, tmp_path, body, match):
        with pytest.raises(InputError, match=match):
            load_twin_csv(_write(tmp_path, "pair_id,zygosity,y1,y2\n" + body))

    def test_header_errors(self, tmp_path):
        with pytest.raises(InputError, match="missing column"):
            load_twin_csv(_write(tmp_path, "id,zyg,a,b\n1,MZ,1,2\n"))
        with pytest.raises(InputError, match="empty"):
            load_twin_csv(_write(tmp_path, ""))
        with pytest.raises(InputError, match="cannot read"):
            load_twin_csv(tmp_path / "missing.csv")

    def test_traits(self, tmp_path):
        text = "trait,pair_id,zygosity,y1,y2\nA,1,MZ,1,2\nB,1,MZ,3,4\nA,2,DZ,5,6\n"
        p = _write(tmp_path, text)
        ds = load_trait_file(p)
        assert [d.trait_name for d in ds] == ["A", "B"]
        assert load_twin_csv(p, trait="B").mz.tolist() == [[3.0, 4.0]]
        with pytest.raises(InputError, match="several traits"):
            load_twin_csv(p)
        with pytest.raises(InputError, match="not found"):
            load_twin_csv(p, trait="C")

    def test_round_trip(self, tmp_path):
        g = np.random.default_rng(10)
        ds = TwinDataset(g.standard_normal((25, 2)) * 1e-7, g.standard_normal((31, 2)) * 1e9, "t")
        p = tmp_path / "rt.csv"
        write_dataset_csv(ds, p)
        assert load_twin_csv(p) == ds

    def test_round_trip_several(self):
        g = np.random.default_rng(11)
        a = TwinDataset(g.standard_normal((3, 2)), g.standard_normal((4, 2)), "a")
        b = TwinDataset(g.standard_normal((5, 2)), g.standard_normal((2, 2)), "b")
        buf = io.StringIO()
        write_dataset_csv([a, b], buf)
        tables = read_trait_tables(io.StringIO(buf.getvalue()))
        assert [t.to_dataset() for t in tables] == [a, b]


class TestReports:
    REPORT = {"rows": [{"trait": "x", "est": {"delta": 0.25, "ci": math.nan}, "n": 3}]}

    def test_json_nulls(self):
        out = json.loads(format_report(self.REPORT, "json"))
        assert out["rows"][0]["est"]["ci"] is None

    def test_csv_flattens(self):
        text = format_report(self.REPORT, "csv")
        assert text.splitlines() == ["trait,est.delta,est.ci,n", "x,0.25,,3"]

    def test_table(self):
        assert "0.2500" in format_report(self.REPORT, "table")

    def test_write_report_file(self, tmp_path):
        p = tmp_path / "r.json"
        write_report(self.REPORT, p)
        assert json.loads(p.read_text())["rows"][0]["n"] == 3

    def test_unknown_format(self):
        with pytest.raises(DomainError):
            format_report(self.REPORT, "xml")
