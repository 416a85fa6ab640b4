import math

import numpy as np
import pytest
from scipy import stats

from seqoutlier.detector import DetectorConfig
from seqoutlier.sim import (
    DISTRIBUTIONS,
    METRICS_COLUMNS,
    MetricsReport,
    Scenario,
    gen_errors,
    inject_outliers,
    make_rng,
    mean_value,
    outlier_height,
    paper_grid,
    process_moments,
    run_scenario,
    run_scenario_variants,
    score,
    simulate_series,
    write_metrics_csv,
)

N_DRAWS = 1_000_000


class TestMeans:
    def test_mu0(self):
        assert np.all(mean_value("mu0", np.linspace(0, 11, 50)) == 1.0)

    def test_mu1_values(self):
        assert mean_value("mu1", 0.0) == pytest.approx(1.0, abs=1e-15)
        assert mean_value("mu1", 5.5) == pytest.approx(0.75, abs=1e-15)

    def test_mu2_continuous(self):
        for t in (11 / 4, 33 / 4):
            left = mean_value("mu2", t - 1e-13)
            right = mean_value("mu2", t + 1e-13)
            assert abs(left - right) < 1e-12
        assert mean_value("mu2", 0.0) == 0.5
        assert mean_value("mu2", 10.0) == 1.0

    def test_mu3_single_jump(self):
        assert mean_value("mu3", 5.5) == 0.5
        assert mean_value("mu3", 5.6) == 1.0
        jumps = np.flatnonzero(np.diff(mean_value("mu3", np.linspace(0, 11, 10_001))))
        assert jumps.size == 1

    def test_unknown(self):
        with pytest.raises(ValueError):
            mean_value("mu9", 0.0)


class TestErrors:
    @pytest.mark.parametrize("process", ["iid", "ma", "ar"])
    @pytest.mark.parametrize("dist", ["normal", "uniform", "exp", "pareto4"])
    def test_moments(self, process, dist):
        e = gen_errors(process, dist, N_DRAWS, 1)
        # loose enough for the exponential-type tails at 10^6 draws
        assert abs(e.mean()) < 5 * 0.05 / math.sqrt(N_DRAWS) * (3 if process != "iid" else 1)
        assert e.std() == pytest.approx(0.05, rel=0.02 if dist == "pareto4" else 0.005)

    def test_normal_iid_sd(self):
        e = gen_errors("iid", "normal", N_DRAWS, 2)
        assert 0.0498 <= e.std() <= 0.0502

    def test_pareto2_centred_not_scaled(self):
        e = gen_errors("iid", "pareto2", N_DRAWS, 3)
        assert abs(np.median(e + 1.0) - (math.sqrt(2) - 1)) < 0.01
        assert process_moments("iid", "pareto2") == (1.0, None)
        assert process_moments("ar", "pareto2") == (2.0, None)

    def test_ma_construction(self):
        eta = make_rng(9).standard_normal(11)
        e = gen_errors("ma", "normal", 10, make_rng(9))
        expected = (eta[1:] + 0.5 * eta[:-1]) * 0.05 / math.sqrt(1.25)
        assert np.allclose(e, expected, rtol=1e-14, atol=0)

    def test_ar_construction(self):
        eta = make_rng(4).standard_normal(110)
        eps = np.zeros(110)
        prev = 0.0
        for k, v in enumerate(eta):
            prev = v + 0.5 * prev
            eps[k] = prev
        e = gen_errors("ar", "normal", 10, make_rng(4))
        assert np.allclose(e, eps[100:] * 0.05 / math.sqrt(4 / 3), rtol=1e-12, atol=0)

    def test_ar_autocorrelation(self):
        e = gen_errors("ar", "normal", N_DRAWS, 5)
        assert np.corrcoef(e[1:], e[:-1])[0, 1] == pytest.approx(0.5, abs=0.01)

    def test_uniform_support(self):
        e = gen_errors("iid", "uniform", 10_000, 6)
        half = 0.5 * 0.05 * math.sqrt(12)
        assert e.min() >= -half and e.max() <= half

    def test_reproducible(self):
        assert np.array_equal(gen_errors("ar", "exp", 500, 7), gen_errors("ar", "exp", 500, 7))
        assert not np.array_equal(gen_errors("ar", "exp", 500, 7), gen_errors("ar", "exp", 500, 8))


class TestHeight:
    @pytest.mark.parametrize("n", [50, 100, 200])
    def test_normal_closed_form(self, n):
        assert outlier_height("normal", n) == pytest.approx(2 * 0.05 * stats.norm.ppf(1 - 1 / (2 * n)), rel=1e-12)

    @pytest.mark.parametrize("dist", ["uniform", "exp", "pareto4", "pareto2"])
    def test_iid_against_empirical(self, dist):
        e = gen_errors("iid", dist, 2 * N_DRAWS, 11)
        emp = 2 * np.quantile(np.abs(e), 1 - 1 / 100)
        assert outlier_height(dist, 100) == pytest.approx(emp, rel=0.02)

    def test_gaussian_dependent_uses_marginal(self):
        assert outlier_height("normal", 100, "ar") == outlier_height("normal", 100, "iid")

    def test_nonnormal_dependent_monte_carlo(self):
        h = outlier_height("exp", 100, "ma")
        e = gen_errors("ma", "exp", N_DRAWS, 12)
        assert h == pytest.approx(2 * np.quantile(np.abs(e), 0.99), rel=0.03)


class TestInjection:
    def test_counts_and_heights(self):
        x = np.zeros(1100)
        y, mask = inject_outliers(x, "normal", 100, 0.05, 1)
        h = outlier_height("normal", 100)
        assert mask.sum() == 50
        assert not mask[:100].any()
        assert np.all(np.abs(y[mask]) >= h) and np.all(np.abs(y[mask]) <= 2 * h)
        assert np.all(y[~mask] == 0)
        assert (y[mask] > 0).any() and (y[mask] < 0).any()

    def test_zero_selected(self):
        x = np.arange(120.0)
        y, mask = inject_outliers(x, "normal", 100, 0.01, 1)
        assert np.array_equal(x, y) and not mask.any()

    def test_custom_height(self):
        y, mask = inject_outliers(np.zeros(300), "exp", 100, 0.1, 2, height=3.0)
        assert np.all((np.abs(y[mask]) >= 3.0) & (np.abs(y[mask]) <= 6.0))

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            inject_outliers(np.zeros(300), "normal", 100, 0.0, 1)


class TestScenario:
    def test_defaults(self):
        sc = Scenario()
        assert sc.horizon == 1100
        assert sc.outlier_rate == 0.05

    @pytest.mark.parametrize("kw", [dict(mean_fn="x"), dict(process="garch"), dict(dist="t"), dict(n=10), dict(horizon=150)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Scenario(**kw)

    def test_series_reproducible(self):
        sc = Scenario("mu2", "ma", "exp", 50, True, seed=42)
        a, ma = simulate_series(sc, 3)
        b, mb = simulate_series(sc, 3)
        assert np.array_equal(a, b) and np.array_equal(ma, mb)
        c, _ = simulate_series(sc, 4)
        assert not np.array_equal(a, c)

    def test_paper_grid(self):
        cells = list(paper_grid(True, seed=5))
        assert len(cells) == 180
        assert len(set(cells)) == 180
        assert {c.n for c in cells} == {50, 100, 200}
        assert all(c.contaminated and c.seed == 5 for c in cells)


class TestMetrics:
    def test_score(self):
        r = score([1, 0, 1, 0, 0], [1, 1, 0, 0, 0])
        assert (r.tp, r.fn, r.fp, r.tn) == (1, 1, 1, 2)
        assert r.specificity == pytest.approx(2 / 3)
        assert r.sensitivity == 0.5

    def test_undefined_sensitivity(self):
        assert MetricsReport(tn=5).sensitivity is None
        assert MetricsReport(tp=5).specificity is None

    def test_addition(self):
        a = MetricsReport(1, 2, 3, 4, 0) + MetricsReport(10, 20, 30, 40, 1)
        assert a == MetricsReport(11, 22, 33, 44, 1)
        assert a.total == 110

    def test_bookkeeping(self):
        sc = Scenario("mu1", "iid", "normal", 50, True, seed=8)
        reps = 4
        r = run_scenario(sc, DetectorConfig(50), reps)
        assert r.failed == 0
        assert r.total == reps * 10 * 50
        assert r.tp + r.fn == reps * math.floor(0.05 * 500)

    def test_reproducible_metrics(self):
        sc = Scenario("mu0", "ar", "uniform", 50, True, seed=9)
        cfgs = [DetectorConfig(50), DetectorConfig(50, variant="partial")]
        assert run_scenario_variants(sc, cfgs, 3) == run_scenario_variants(sc, cfgs, 3)

    def test_variants_need_matching_calibration(self):
        sc = Scenario(n=50)
        with pytest.raises(ValueError):
            run_scenario_variants(sc, [DetectorConfig(50), DetectorConfig(50, bandwidth=0.3)], 1)
        with pytest.raises(ValueError):
            run_scenario(sc, DetectorConfig(100), 1)

    def test_separable_case(self):
        # noise only in the calibration prefix, exactly zero afterwards, one
        # huge outlier: every verdict is right
        def errors(rng, size):
            e = np.zeros(size)
            e[:100] = 1e-3 * rng.normal(size=100)
            return e

        sc = Scenario("mu0", "iid", "normal", 100, True, outlier_rate=0.0015, seed=1)
        r = run_scenario(sc, DetectorConfig(100, variant="partial"), 3, errors_fn=errors)
        assert r.tp == 3 and r.fn == 0
        assert r.specificity == 1.0 and r.sensitivity == 1.0

    def test_zero_noise_calibration_fails(self):
        sc = Scenario("mu0", n=50, contaminated=True, seed=1)
        r = run_scenario(sc, DetectorConfig(50), 2, errors_fn=lambda rng, k: np.zeros(k))
        assert r == MetricsReport(failed=2)


class TestCsv:
    def test_format(self):
        rows = [
            (Scenario("mu0", "iid", "normal", 50, False), "full", MetricsReport(0, 3, 497, 0, 1)),
            (Scenario("mu3", "ar", "pareto2", 100, True), "partial", MetricsReport(40, 5, 945, 10)),
        ]
        text = write_metrics_csv(rows)
        lines = text.split("\n")
        assert lines[0] == ",".join(METRICS_COLUMNS)
        assert lines[1] == "mu0,iid,normal,50,0,full,0,3,497,0," + repr(497 / 500) + ",,1"
        assert lines[2].startswith("mu3,ar,pareto2,100,1,partial,40,5,945,10,")
        assert lines[-1] == ""
        assert "\r" not in text
