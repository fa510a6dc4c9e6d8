# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import unittest
from dataclasses import replace

import numpy as np

from exceptions import EmptyInput
from learners import LearnerSpec
from profiling import duration_summary, eccdf, feature_correlation, outlier_sweep, two_regime_fit
from records import encode
from tuning import TuningSettings

from .helpers import full_incident, incident, small_dataset


def two_regime_sample(n=2000, knee=50.0, low=0.5, high=3.0):
    """Deterministic quantiles of a survival curve whose log-log slope changes at knee."""
    p = 1.0 - (np.arange(n) + 0.5) / n
    at_knee = knee**-low
    body = p ** (-1.0 / low)
    tail = knee * (p / at_knee) ** (-1.0 / high)
    return np.where(p > at_knee, body, tail)


class TestSummary(unittest.TestCase):
    def test_duration_summary(self):
        records = [full_incident(f"I{i}", d) for i, d in enumerate([10.0, 20.0, 50.0, 120.0])]
        records.append(incident("unlabelled", duration=None))
        row = duration_summary(records).iloc[0]
        self.assertEqual(row["count"], 4)
        self.assertEqual((row["mean"], row["median"], row["max"]), (50.0, 35.0, 120.0))
        self.assertEqual(row["share_under_30"], 0.5)
        self.assertEqual(row["share_short"], 0.5)
        self.assertEqual(row["share_long_tail"], 0.25)

    def test_nothing_to_summarize(self):
        with self.assertRaises(EmptyInput):
            duration_summary([incident(duration=None)])

    def test_eccdf(self):
        values, survival = eccdf([3.0, 1.0, 2.0, 2.0])
        np.testing.assert_array_equal(values, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(survival, [0.75, 0.25, 0.0])

    def test_correlation_matrix_is_symmetric(self):
        dataset = small_dataset()
        matrix = encode(dataset.incidents)
        corr = feature_correlation(matrix)
        self.assertEqual(corr.columns.tolist(), matrix.names)
        np.testing.assert_allclose(corr.values, corr.values.T, equal_nan=True)
        self.assertAlmostEqual(corr.loc["hour_of_day", "hour_of_day"], 1.0)


class TestTwoRegimes(unittest.TestCase):
    def test_finds_the_knee(self):
        fit = two_regime_fit(two_regime_sample())
        self.assertGreaterEqual(fit.breakpoint, 25.0)
        self.assertLessEqual(fit.breakpoint, 100.0)
        self.assertLess(fit.slope_high, fit.slope_low - 1.0)
        self.assertLess(fit.sse_two, fit.sse_one)
        self.assertGreater(fit.lr_statistic, 0.0)

    def test_long_tail_of_generated_durations(self):
        durations = [r.duration_min for r in small_dataset().incidents]
        fit = two_regime_fit(durations)
        self.assertLessEqual(fit.sse_two, fit.sse_one)

    def test_too_few_points(self):
        with self.assertRaises(EmptyInput):
            two_regime_fit([1.0, 2.0, 3.0])
        with self.assertRaises(EmptyInput):
            two_regime_fit(np.arange(1.0, 30.0), breakpoints=[1000.0])


class TestOutlierSweep(unittest.TestCase):
    def test_dropping_sub_five_minute_rows_lowers_mape(self):
        dataset = small_dataset()
        frame = outlier_sweep(
            dataset.incidents,
            [0.0, 5.0],
            LearnerSpec(family="mean"),
            TuningSettings(n_iter=0, outer_k=2),
        )
        self.assertEqual(frame["rows_kept"].tolist(), [120, 114])
        before, after = frame["mape_mean"]
        self.assertLess(after, before)

    def test_zero_minute_rows_are_not_scored(self):
        records = list(small_dataset().incidents)
        records[0] = replace(records[0], duration_min=0.0)
        with self.assertLogs("profiling", "WARNING") as logs:
            frame = outlier_sweep(
                records,
                [0.0, 5.0],
                LearnerSpec(family="mean"),
                TuningSettings(n_iter=0, outer_k=2),
            )
        self.assertEqual(frame["rows_kept"].tolist()[0], 119)
        self.assertTrue(np.isfinite(frame["mape_mean"]).all())
        self.assertEqual(len(logs.records), 1)
