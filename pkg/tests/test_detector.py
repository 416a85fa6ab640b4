import math
from dataclasses import replace

import numpy as np
import pytest

from seqoutlier.bandwidth import CvConfig
from seqoutlier.evt import DegenerateSampleError, GevParams, InsufficientDataError, gev_quantile
from seqoutlier.detector import (
    DetectorConfig,
    LevelSchedule,
    NotCalibratedError,
    alpha_for_index,
    calibrate,
    default_block_count,
    run_stream,
    step,
    upper_quantile,
)

SD = 0.05


def clean(rng, size, mean=1.0):
    return mean + SD * rng.normal(size=size)


@pytest.fixture
def state(rng):
    return calibrate(clean(rng, 100), DetectorConfig(100))


def fork(state, **changes):
    """Independent copy of a calibrated state with some config fields changed."""
    cfg = replace(state.config, **changes)
    return replace(state, config=cfg, buffer=state.buffer.copy(), _thresholds={})


class TestSchedule:
    def test_constant(self):
        s = LevelSchedule.constant(0.01)
        assert alpha_for_index(s, 101, 100) == 0.01
        assert alpha_for_index(s, 10_000, 100) == 0.01

    def test_summable_examples(self):
        s = LevelSchedule.summable(0.01)
        n = 100
        assert alpha_for_index(s, n + 1, n) == 0.005
        assert alpha_for_index(s, 2 * n, n) == 0.005
        assert alpha_for_index(s, 2 * n + 1, n) == 0.0025

    def test_partial_sums_bounded(self):
        s = LevelSchedule.summable(0.01)
        total = math.fsum(s.block_level(k) for k in range(1, 200))
        assert total <= 0.01
        assert total == pytest.approx(0.01, abs=1e-12)

    def test_finite_weights(self):
        s = LevelSchedule.summable(0.02, [0.5, 0.25, 0.25])
        assert [s.block_level(k) for k in (1, 2, 3, 4)] == [0.01, 0.005, 0.005, 0.0]

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            LevelSchedule.summable(0.01, [0.5, 0.4])

    def test_prefix_index_rejected(self):
        with pytest.raises(ValueError):
            alpha_for_index(LevelSchedule.summable(0.01), 100, 100)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5])
    def test_bad_alpha(self, alpha):
        with pytest.raises(ValueError):
            LevelSchedule.constant(alpha)


class TestUpperQuantile:
    @pytest.mark.parametrize("g", [-0.2, 0.0, 0.3])
    def test_matches_gev_quantile(self, g):
        theta = GevParams(g, 1.0, 0.5)
        for a in (0.2, 0.01, 1e-4):
            assert upper_quantile(theta, a) == pytest.approx(gev_quantile(theta, 1 - a), rel=1e-12)

    def test_tiny_alpha_stays_finite(self):
        theta = GevParams(0.1, 0.0, 1.0)
        q = upper_quantile(theta, 1e-17)
        assert math.isfinite(q) and q > upper_quantile(theta, 1e-15)
        assert upper_quantile(theta, 0.0) == math.inf


class TestConfig:
    def test_defaults(self):
        cfg = DetectorConfig(100)
        assert cfg.schedule == LevelSchedule.constant(0.01)
        assert isinstance(cfg.bandwidth, CvConfig)
        assert cfg.blocks == 10

    @pytest.mark.parametrize("n,m", [(25, 5), (50, 7), (100, 10), (200, 14), (5000, 30)])
    def test_block_count(self, n, m):
        assert default_block_count(n) == m

    @pytest.mark.parametrize("kw", [dict(n=24), dict(n=100, alpha=0.0), dict(n=100, variant="half"), dict(n=100, block_count=3)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            DetectorConfig(**kw)


class TestCalibrate:
    def test_state_fields(self, state):
        assert state.i == 100
        assert state.block_len == state.residuals.size // 10
        assert state.n_maxima == 10
        assert state.theta_n.block_len == 100
        assert state.buffer.indices[-1] == 100
        assert state.residuals.size == 100 - math.ceil(100 * state.h)

    def test_scaling_applied(self, state):
        from seqoutlier.evt import scale_params

        assert state.theta_n == scale_params(state.theta_r, state.block_len, 100)

    def test_affine_tiny_noise(self, rng):
        x = 1.0 + 0.3 * np.arange(1, 101) / 100 + 1e-6 * rng.normal(size=100)
        st = calibrate(x, DetectorConfig(100))
        assert 1e-8 < st.theta_n.params.sigma0 < 1e-4
        assert st.threshold(0.01) < 1e-4

    def test_identical_values(self):
        with pytest.raises(DegenerateSampleError):
            calibrate(np.full(100, 1.0), DetectorConfig(100))

    def test_wrong_length(self, rng):
        with pytest.raises(ValueError):
            calibrate(clean(rng, 99), DetectorConfig(100))

    def test_non_finite(self, rng):
        x = clean(rng, 100)
        x[3] = np.nan
        with pytest.raises(ValueError):
            calibrate(x, DetectorConfig(100))

    def test_too_few_residuals(self, rng):
        # h = 0.9 leaves 10 residuals for 10 blocks
        with pytest.raises(InsufficientDataError):
            calibrate(clean(rng, 100), DetectorConfig(100, bandwidth=0.9))

    def test_fixed_bandwidth(self, rng):
        st = calibrate(clean(rng, 100), DetectorConfig(100, bandwidth=0.3))
        assert st.h == 0.3

    @pytest.mark.slow
    def test_threshold_brackets_folded_normal_oracle(self):
        # 0.99 quantile of the max of 100 |N(0, sd^2)| draws, by simulation
        orng = np.random.default_rng(11)
        oracle = np.quantile(np.abs(orng.normal(0, SD, size=(100_000, 100))).max(axis=1), 0.99)
        assert oracle / SD == pytest.approx(3.89, abs=0.03)
        rng = np.random.default_rng(12)
        th = [calibrate(clean(rng, 100), DetectorConfig(100)).threshold(0.01) for _ in range(200)]
        lo, hi = np.quantile(th, [0.05, 0.95])
        assert lo < oracle < hi


class TestStep:
    def test_not_calibrated(self, state):
        state.calibrated = False
        with pytest.raises(NotCalibratedError):
            step(state, 1.0)
        with pytest.raises(NotCalibratedError):
            step(None, 1.0)

    def test_exact_estimate_not_flagged(self, state):
        probe = fork(state)
        est = step(probe, 1.0).estimate
        v = step(fork(state), est)
        assert v.residual == 0.0 and not v.flag

    def test_rule_equivalence(self, state, rng):
        x = clean(rng, 1000)
        x[rng.choice(1000, 30, replace=False)] += 0.6
        for v in run_stream(state, x):
            assert v.residual >= 0
            assert v.residual == abs(v.value - v.estimate)
            assert v.threshold == state.threshold(v.alpha_i)
            assert v.threshold == pytest.approx(gev_quantile(state.theta_n.params, 1 - v.alpha_i), rel=1e-12)
            assert v.flag == (v.residual > v.threshold)

    def test_comparison_semantics(self, state):
        thr = state.threshold(0.01)
        est = step(fork(state), 0.0).estimate
        assert step(fork(state), est + 1.28 * thr).flag
        assert not step(fork(state), est + 0.999 * thr).flag

    def test_level_monotonicity(self, state):
        est = step(fork(state), 0.0).estimate
        thr = state.threshold(0.01)
        x = est + 1.01 * thr
        assert step(fork(state), x).flag
        for a in (0.02, 0.05, 0.2):
            s = fork(state, schedule=LevelSchedule.constant(a), alpha=a)
            assert step(s, x).flag
        assert [state.threshold(a) for a in (0.001, 0.01, 0.1)] == sorted(
            [state.threshold(a) for a in (0.001, 0.01, 0.1)], reverse=True
        )

    def test_indices_advance(self, state, rng):
        vs = run_stream(state, clean(rng, 5))
        assert [v.index for v in vs] == [101, 102, 103, 104, 105]
        assert state.i == 105

    def test_summable_levels_in_verdicts(self, rng):
        cfg = DetectorConfig(50, schedule=LevelSchedule.summable(0.01))
        st = calibrate(clean(rng, 50), cfg)
        vs = run_stream(st, clean(rng, 150))
        assert {v.alpha_i for v in vs[:50]} == {0.005}
        assert {v.alpha_i for v in vs[50:100]} == {0.0025}
        assert vs[60].threshold > vs[10].threshold

    def test_deterministic(self, rng):
        calib, stream = clean(rng, 100), clean(rng, 500)
        stream[::37] += 0.5
        a = run_stream(calibrate(calib, DetectorConfig(100, variant="partial")), stream)
        b = run_stream(calibrate(calib.copy(), DetectorConfig(100, variant="partial")), stream.copy())
        assert a == b


class TestVariants:
    def test_agree_on_clean_stream(self, state, rng):
        stream = clean(rng, 600)
        full = run_stream(fork(state, variant="full"), stream)
        part = run_stream(fork(state, variant="partial"), stream)
        if any(v.flag for v in full):
            pytest.skip("seeded stream produced a flag")
        assert full == part

    def test_partial_hygiene(self, state, rng):
        stream = clean(rng, 300)
        stream[150] += 2.0
        other = stream.copy()
        other[150] += 5.0  # a different outlier value, also flagged
        a = run_stream(fork(state, variant="partial"), stream)
        b = run_stream(fork(state, variant="partial"), other)
        assert a[150].flag and b[150].flag
        assert [v.estimate for v in a] == [v.estimate for v in b]

    def test_partial_marks_flagged_unusable(self, state, rng):
        st = fork(state, variant="partial")
        run_stream(st, clean(rng, 10))
        v = step(st, 5.0)
        assert v.flag
        assert not st.buffer.usable[-1]
        assert st.buffer.usable[:-1].all()

    def test_full_keeps_flagged_points(self, state, rng):
        st = fork(state, variant="full")
        run_stream(st, clean(rng, 10))
        assert step(st, 5.0).flag
        assert st.buffer.usable.all()

    def test_partial_fallback_on_starved_window(self, rng):
        # a level shift flags every new point until the window runs dry
        st = calibrate(clean(rng, 100), DetectorConfig(100, bandwidth=0.1, variant="partial"))
        vs = run_stream(st, clean(rng, 60, mean=3.0))
        assert any(v.fallback for v in vs)
        # the estimate follows the shift instead of freezing at the old level
        assert abs(vs[-1].estimate - 3.0) < 0.5
        assert not vs[-1].flag


class TestConsistency:
    def test_large_outliers_detected(self, rng):
        hits = total = 0
        for _ in range(10):
            st = calibrate(clean(rng, 100), DetectorConfig(100))
            height = 10 * st.threshold(0.01)
            x = clean(rng, 1000)
            pos = rng.choice(np.arange(10, 1000), 50, replace=False)
            x[pos] += height * rng.choice([-1, 1], 50)
            vs = run_stream(st, x)
            hits += sum(vs[p].flag for p in pos)
            total += pos.size
        assert hits / total > 0.99
