# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import unittest

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from parameterized import parameterized

from exceptions import (
    EmptyEvaluation,
    LengthMismatch,
    NonBinary,
    NonPositiveTruth,
    ZeroVariance,
)
from metrics import (
    SCORERS,
    ConfusionCounts,
    classification_scores,
    confusion,
    mae,
    mape,
    mse,
    r2,
    regression_scores,
)

labels = st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=50)


class TestClassification(unittest.TestCase):
    def test_confusion_counts(self):
        counts = confusion([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
        self.assertEqual(counts, ConfusionCounts(tp=2, tn=1, fp=1, fn=1))
        self.assertEqual(counts.total, 5)

    def test_scores_worked_example(self):
        scores = classification_scores(ConfusionCounts(tp=30, tn=50, fp=10, fn=10))
        self.assertAlmostEqual(scores.accuracy, 0.8)
        self.assertAlmostEqual(scores.precision, 0.75)
        self.assertAlmostEqual(scores.recall, 0.75)
        self.assertAlmostEqual(scores.f1, 0.75)
        self.assertFalse(scores.degenerate)

    def test_no_predicted_positive_is_degenerate(self):
        scores = classification_scores(confusion([1, 0, 1], [0, 0, 0]))
        self.assertEqual(scores.precision, 0.0)
        self.assertEqual(scores.f1, 0.0)
        self.assertTrue(scores.degenerate)

    @parameterized.expand(
        [
            ("non_binary", [0, 2], [0, 1], NonBinary),
            ("lengths", [0, 1], [0], LengthMismatch),
        ]
    )
    def test_confusion_errors(self, _, truth, guess, error):
        with self.assertRaises(error):
            confusion(truth, guess)

    def test_empty_confusion(self):
        with self.assertRaises(EmptyEvaluation):
            classification_scores(ConfusionCounts(0, 0, 0, 0))

    @given(labels, st.randoms())
    def test_scores_are_bounded_and_counts_add_up(self, truth, random):
        guess = [random.randint(0, 1) for _ in truth]
        counts = confusion(truth, guess)
        self.assertEqual(counts.total, len(truth))
        scores = classification_scores(counts)
        for value in scores.as_dict().values():
            self.assertGreaterEqual(value, 0.0)
            self.assertLessEqual(value, 1.0)

    @given(labels)
    def test_perfect_prediction(self, truth):
        scores = classification_scores(confusion(truth, truth))
        self.assertEqual(scores.accuracy, 1.0)
        if any(truth):
            self.assertEqual(scores.f1, 1.0)


class TestRegression(unittest.TestCase):
    def test_mape_worked_example(self):
        self.assertAlmostEqual(mape([10.0, 20.0], [12.0, 15.0]), 22.5)

    def test_mape_rejects_non_positive_truth(self):
        with self.assertRaises(NonPositiveTruth):
            mape([0.0, 1.0], [1.0, 1.0])

    def test_r2_of_mean_prediction_is_zero(self):
        y = np.array([3.0, 5.0, 10.0])
        self.assertAlmostEqual(r2(y, np.full(3, y.mean())), 0.0)

    def test_r2_of_perfect_prediction_is_one(self):
        self.assertEqual(r2([1.0, 2.0, 4.0], [1.0, 2.0, 4.0]), 1.0)

    def test_r2_can_be_negative(self):
        self.assertLess(r2([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]), 0.0)

    @parameterized.expand(
        [
            ("constant_truth", [2.0, 2.0], [1.0, 3.0], ZeroVariance),
            ("single_row", [2.0], [1.0], EmptyEvaluation),
            ("lengths", [2.0, 3.0], [1.0], LengthMismatch),
        ]
    )
    def test_r2_errors(self, _, truth, guess, error):
        with self.assertRaises(error):
            r2(truth, guess)

    def test_mse_and_mae(self):
        self.assertAlmostEqual(mse([1.0, 3.0], [2.0, 5.0]), 2.5)
        self.assertAlmostEqual(mae([1.0, 3.0], [2.0, 5.0]), 1.5)

    def test_regression_scores(self):
        scores = regression_scores([10.0, 20.0, 30.0], [10.0, 20.0, 30.0])
        self.assertEqual((scores.mape, scores.r2, scores.n), (0.0, 1.0, 3))

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=1.0, max_value=700.0),
                st.floats(min_value=0.0, max_value=700.0),
            ),
            min_size=1,
            max_size=30,
        )
    )
    def test_mape_is_non_negative_and_zero_on_truth(self, pairs):
        truth = [t for t, _ in pairs]
        guess = [g for _, g in pairs]
        self.assertGreaterEqual(mape(truth, guess), 0.0)
        self.assertEqual(mape(truth, truth), 0.0)

    def test_scorers_cover_every_metric(self):
        self.assertEqual(
            set(SCORERS), {"accuracy", "precision", "recall", "f1", "mape", "r2", "mse", "mae"}
        )
        self.assertEqual(SCORERS["f1"]([1, 0], [1, 0]), 1.0)
