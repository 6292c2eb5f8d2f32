import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gptree.bench import (
    SUMMARY_HEADER,
    RunRecord,
    accuracy_fraction_batches,
    compute_indicators,
    coverage_batches,
    emit_csv,
    read_records_csv,
    read_summary_csv,
    run,
    write_records_csv,
)
from gptree.streams import UniformStream
from gptree.targets import make_target
from gptree.tree import TreeConfig


def records_from(y, mu, sigma=None, sigma_cal=None):
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.ones_like(y) if sigma is None else np.asarray(sigma, dtype=float)
    sigma_cal = sigma if sigma_cal is None else np.asarray(sigma_cal, dtype=float)
    return [RunRecord(i, np.array([i / max(len(y), 1)]), y[i], mu[i], sigma[i], sigma_cal[i], 1e-4, 1e-5)
            for i in range(len(y))]


class SlowTarget:
    """Wraps a target and sleeps on every evaluation."""

    def __init__(self, inner, delay):
        self.inner, self.delay = inner, delay

    def __call__(self, x):
        time.sleep(self.delay)
        return self.inner(x)


def small_run(n=120, burn_in=20, seed=0, **tree):
    config = TreeConfig(**{"nbar": 15, "retrain_buffer_length": 5, "seed": seed, **tree})
    return run(config, UniformStream(1, seed=seed), make_target("higdon1d", seed=seed), n, burn_in)


class TestComputeIndicators:
    def test_perfect_predictor(self):
        s = compute_indicators(records_from([5.0] * 50, [5.0] * 50), burn_in=0)
        assert s.rmse == 0.0 and s.delta_005 == 1.0
        assert s.n_outliers_removed == 0

    def test_outlier_removed(self):
        mu = [3.0] * 20
        mu[7] = 1e6
        s = compute_indicators(records_from([3.0] * 20, mu), burn_in=0, outlier_bound=1e5)
        assert s.n_outliers_removed == 1
        assert s.rmse == 0.0 and s.delta_005 == 1.0

    def test_hand_rmse(self):
        s = compute_indicators(records_from([100.0] * 4, [100.0, 101.0, 102.0, 103.0]), burn_in=0)
        assert s.rmse == pytest.approx(math.sqrt(14 / 4), rel=1e-15)
        assert s.delta_005 == 1.0

    def test_burn_in_excluded(self):
        y = np.ones(1500)
        mu = np.ones(1500)
        mu[:1000] = 50.0
        s = compute_indicators(records_from(y, mu))
        assert s.rmse == 0.0 and s.n_eligible == 500

    def test_delta_uses_last_2000(self):
        y = np.ones(3000)
        mu = np.ones(3000)
        mu[:1000] = 2.0
        s = compute_indicators(records_from(y, mu), burn_in=0)
        assert s.delta_005 == 1.0 and not s.delta_partial
        short = compute_indicators(records_from(y[:100], mu[:100]), burn_in=0)
        assert short.delta_partial

    def test_empty_is_nan(self):
        s = compute_indicators([], burn_in=1000)
        assert all(math.isnan(v) for v in (s.rmse, s.delta_005, s.mean_uncertainty,
                                           s.mean_t_update, s.mean_t_pred))

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.floats(1, 100), st.floats(-200, 200)), min_size=1, max_size=60),
           st.randoms())
    def test_rmse_order_invariant(self, pairs, rnd):
        y, mu = zip(*pairs)
        a = compute_indicators(records_from(y, mu), burn_in=0)
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        y2, mu2 = zip(*shuffled)
        b = compute_indicators(records_from(y2, mu2), burn_in=0)
        assert b.rmse == pytest.approx(a.rmse, rel=1e-12)
        assert 0.0 <= a.delta_005 <= 1.0


class TestCoverageBatches:
    def test_zero_residuals(self):
        cov = coverage_batches(records_from(np.ones(5000), np.ones(5000)))
        np.testing.assert_array_equal(cov.fractions, [1.0, 1.0, 1.0])

    def test_gaussian_residuals(self):
        rng = np.random.default_rng(0)
        sigma = rng.uniform(0.5, 2.0, 20_000)
        y = rng.normal(0.0, sigma)
        cov = coverage_batches(records_from(y, np.zeros_like(y), sigma))
        assert len(cov) == 10
        np.testing.assert_allclose(cov.fractions, 0.6827, atol=0.03)

    def test_partial_batch(self):
        cov = coverage_batches(records_from(np.ones(4500), np.ones(4500)))
        np.testing.assert_array_equal(cov.counts, [2000, 2000, 500])
        assert cov.partial
        assert not coverage_batches(records_from(np.ones(4000), np.ones(4000))).partial

    def test_calibrated_flag(self):
        recs = records_from([1.0, 1.0], [0.0, 0.0], sigma=[0.5, 0.5], sigma_cal=[2.0, 0.5])
        assert coverage_batches(recs, use_calibrated=False)[0] == 0.0
        assert coverage_batches(recs, use_calibrated=True)[0] == 0.5


class TestAccuracyFraction:
    def test_perfect(self):
        acc = accuracy_fraction_batches(records_from(np.full(3000, 2.0), np.full(3000, 2.0)), 0.1)
        np.testing.assert_array_equal(acc.fractions, [1.0, 1.0])

    def test_zero_predictor(self):
        acc = accuracy_fraction_batches(records_from(np.full(3000, 1.5), np.zeros(3000)), 0.1)
        np.testing.assert_array_equal(acc.fractions, [0.0, 0.0])

    def test_improving_errors(self):
        rng = np.random.default_rng(1)
        n = 10_000
        rel = np.linspace(0.3, 0.0, n) * rng.random(n)
        acc = accuracy_fraction_batches(records_from(np.ones(n), 1 + rel), 0.05)
        assert np.all(np.diff(acc.fractions) >= 0)

    def test_threshold_positive(self):
        with pytest.raises(ValueError):
            accuracy_fraction_batches([], 0.0)


class TestRun:
    def test_zero_points(self):
        records, s = small_run(n=0)
        assert records == [] and math.isnan(s.rmse)

    def test_records_complete(self):
        records, s = small_run(n=60, burn_in=10)
        assert [r.index for r in records] == list(range(60))
        assert all(r.t_update >= 0 and r.t_pred >= 0 for r in records)
        assert s.n_eligible == 50

    def test_deterministic(self):
        a, sa = small_run(seed=3)
        b, sb = small_run(seed=3)
        assert [r.mu_pred for r in a] == [r.mu_pred for r in b]
        assert [r.sigma_calibrated for r in a] == [r.sigma_calibrated for r in b]
        assert sa.rmse == sb.rmse

    def test_finite_stream_stops(self):
        config = TreeConfig(nbar=10)
        records, _ = run(config, UniformStream(1, n_points=7), make_target("higdon1d"), 100, 0)
        assert len(records) == 7

    def test_pred_time_excludes_target(self):
        config = TreeConfig(nbar=10, retrain_buffer_length=2)
        target = SlowTarget(make_target("higdon1d"), 0.01)
        records, _ = run(config, UniformStream(1), target, 15, 0)
        assert max(r.t_pred for r in records) < 0.01
        assert max(r.t_update for r in records[:1]) < 0.01

    def test_log_written_on_abort(self, tmp_path):
        def failing(x):
            if failing.calls == 5:
                raise RuntimeError("target exploded")
            failing.calls += 1
            return 1.0, 0.0
        failing.calls = 0
        path = tmp_path / "rec.csv"
        with pytest.raises(RuntimeError):
            run(TreeConfig(nbar=10), UniformStream(2), failing, 20, 0, log_path=path)
        assert len(read_records_csv(path)) == 5

    def test_recompute_from_persisted_records(self, tmp_path):
        records, s = small_run(n=150, burn_in=30)
        path = tmp_path / "rec.csv"
        write_records_csv(records, path)
        again = read_records_csv(path)
        for a, b in zip(records, again):
            assert (a.index, a.y_true, a.mu_pred, a.sigma_raw) == (b.index, b.y_true, b.mu_pred, b.sigma_raw)
            np.testing.assert_array_equal(a.x, b.x)
        assert compute_indicators(again, 30) == s


class TestEmitCsv:
    def summary(self):
        return small_run(n=40, burn_in=10)[1]

    def test_single_row(self, tmp_path):
        path = tmp_path / "summary.csv"
        emit_csv([(TreeConfig(nbar=15), self.summary())], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == ",".join(SUMMARY_HEADER)
        assert lines[0] == "nbar,b,theta,kernel,split_dir,rmse,delta005,uncert,t_upd,t_pred"

    def test_round_trip(self, tmp_path):
        s = self.summary()
        path = tmp_path / "summary.csv"
        emit_csv([(TreeConfig(nbar=15, gradual_split=False, theta=0.05), s)], path)
        (row,) = read_summary_csv(path)
        assert row["theta"] == 0.05
        assert (row["rmse"], row["delta005"], row["uncert"], row["t_upd"], row["t_pred"]) == (
            s.rmse, s.delta_005, s.mean_uncertainty, s.mean_t_update, s.mean_t_pred)

    def test_sweep_order_and_markers(self, tmp_path):
        s = self.summary()
        configs = [TreeConfig(nbar=n) for n in (10, 20, 30)]
        path = tmp_path / "summary.csv"
        emit_csv([(configs[0], s), (configs[1], None), (configs[2], s)], path)
        rows = read_summary_csv(path)
        assert len(path.read_text().splitlines()) == 4
        assert [r["nbar"] for r in rows] == [10, 20, 30]
        assert [r["theta"] for r in rows] == ["grad.split"] * 3
        assert math.isnan(rows[1]["rmse"])
        assert "error" in path.read_text().splitlines()[2]

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError, match="summary"):
            emit_csv([], tmp_path / "missing" / "summary.csv")
