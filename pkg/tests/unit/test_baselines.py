# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import unittest

import numpy as np
from parameterized import parameterized

from exceptions import (
    CorruptModel,
    KTooLarge,
    MissingValues,
    NoConvergence,
    SchemaMismatch,
    SingularSystem,
)
from learners import ESTIMATORS, LearnerSpec, dumps, loads
from learners.base import MedianImputer, Standardizer
from learners.baselines import (
    LOGIT,
    ForestEstimator,
    ForestModel,
    ForestParams,
    KnnEstimator,
    MeanEstimator,
    forest_fit,
    forest_oob_error,
    forest_predict,
    knn_fit,
    knn_predict,
    linear_fit,
    linear_predict,
)
from learners.booster import HyperParams, RegressionTree, TreeNode, grow_tree
from records import ColumnSpec, encode

from .helpers import FAST_BOOSTER, full_incident, random_grid

FAMILY_PARAMS = {
    "booster": FAST_BOOSTER,
    "gbdt": FAST_BOOSTER,
    "forest": {"n_trees": 10, "max_depth": 4},
    "knn": {"k": 3},
    "linear": {},
    "mean": {},
}


class TestKnn(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(1)
        self.values = rng.normal(size=(40, 3))
        self.y = rng.uniform(5, 60, 40)

    def test_k_equal_to_rows_predicts_the_mean(self):
        model = knn_fit(self.values, self.y, 40, "regress")
        np.testing.assert_allclose(knn_predict(model, self.values[:5]), np.full(5, self.y.mean()))

    def test_training_row_is_its_own_neighbour(self):
        model = knn_fit(self.values, self.y, 1, "regress")
        np.testing.assert_allclose(knn_predict(model, self.values[7:9]), self.y[7:9])

    def test_matches_brute_force_on_two_clusters(self):
        rng = np.random.default_rng(2)
        train = np.vstack([rng.normal(-3, 1, (20, 2)), rng.normal(3, 1, (20, 2))])
        labels = np.repeat([0.0, 1.0], 20)
        queries = rng.normal(0, 3, (15, 2))
        model = knn_fit(train, labels, 3, "classify")

        mean, scale = train.mean(axis=0), train.std(axis=0)
        z_train, z_query = (train - mean) / scale, (queries - mean) / scale
        expected = []
        for q in z_query:
            nearest = np.argsort(np.linalg.norm(z_train - q, axis=1), kind="stable")[:3]
            expected.append(labels[nearest].mean())
        np.testing.assert_allclose(knn_predict(model, queries), expected)

    def test_k_too_large(self):
        with self.assertRaises(KTooLarge):
            knn_fit(self.values, self.y, 41, "regress")

    def test_missing_cells_rejected(self):
        values = self.values.copy()
        values[0, 0] = np.nan
        with self.assertRaises(MissingValues):
            knn_fit(values, self.y, 3, "regress")

    def test_estimator_imputes_with_training_medians(self):
        values = self.values.copy()
        values[::4, 1] = np.nan
        estimator = KnnEstimator(params={"k": 3}).fit(values, self.y)
        expected = np.nanmedian(values[:, 1])
        self.assertEqual(estimator.imputer.medians[1], expected)
        query = np.array([[0.0, np.nan, 0.0]])
        np.testing.assert_allclose(
            estimator.predict(query), estimator.predict([[0.0, expected, 0.0]])
        )


class TestLinear(unittest.TestCase):
    def test_recovers_exact_line(self):
        x = np.arange(10.0).reshape(-1, 1)
        model = linear_fit(x, 2.0 * x[:, 0] + 1.0, ridge_alpha=0.0)
        self.assertAlmostEqual(model.weights[0], 2.0, delta=1e-9)
        self.assertAlmostEqual(model.intercept, 1.0, delta=1e-9)

    def test_huge_penalty_predicts_the_mean(self):
        rng = np.random.default_rng(3)
        values, y = rng.normal(size=(30, 3)), rng.uniform(5, 60, 30)
        model = linear_fit(values, y, ridge_alpha=1e12)
        np.testing.assert_allclose(linear_predict(model, values), np.full(30, y.mean()), atol=1e-6)

    def test_solution_satisfies_normal_equations(self):
        rng = np.random.default_rng(4)
        values, y = rng.normal(size=(50, 4)), rng.normal(size=50)
        alpha = 2.5
        model = linear_fit(values, y, ridge_alpha=alpha)
        standardizer = Standardizer().fit(values)
        z = standardizer.transform(values)
        w_std = model.weights * standardizer.scale
        residual = (z.T @ z + alpha * np.eye(4)) @ w_std - z.T @ (y - y.mean())
        self.assertLess(np.linalg.norm(residual), 1e-8 * max(1.0, np.linalg.norm(z.T @ y)))

    def test_duplicate_columns_are_singular_without_penalty(self):
        x = np.arange(8.0)
        with self.assertRaises(SingularSystem):
            linear_fit(np.column_stack([x, x]), x, ridge_alpha=0.0)

    def test_constant_column_gets_zero_weight(self):
        x = np.arange(8.0)
        model = linear_fit(np.column_stack([x, np.full(8, 3.0)]), x, ridge_alpha=0.0)
        self.assertEqual(model.weights[1], 0.0)

    def test_logistic_separates_separable_points(self):
        x = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 0, 1, 1, 1])
        estimator = LearnerSpec(family="linear", task="classify").build().fit(x, y)
        np.testing.assert_array_equal(estimator.predict(x), y)

    def test_unpenalized_separable_logistic_does_not_converge(self):
        x = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        with self.assertRaises(NoConvergence):
            linear_fit(x, y, LOGIT, ridge_alpha=0.0, max_iter=3)


class TestForest(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(6)
        self.values = random_grid(rng, 50, 3, missing=0.1)
        self.y = rng.uniform(5, 60, 50)

    def test_single_unbagged_tree_is_the_plain_tree(self):
        params = HyperParams(max_depth=20, reg_lambda=0.0, gamma=0.0)
        model = forest_fit(self.values, self.y, 1, params, seed=0, task="regress", bootstrap=False)
        self.assertAlmostEqual(model.offsets[0], self.y.mean())
        tree = grow_tree(self.values, model.offsets[0] - self.y, np.ones(50), None, None, params)
        self.assertEqual(model.trees[0], tree)
        np.testing.assert_array_equal(
            forest_predict(model, self.values), model.offsets[0] + tree.predict(self.values)
        )

    def test_tree_order_does_not_matter(self):
        params = ForestParams(n_trees=7, max_depth=4).tree_params()
        model = forest_fit(self.values, self.y, 7, params, seed=3, task="regress")
        shuffled = ForestModel(model.trees[::-1], model.offsets[::-1], "regress")
        np.testing.assert_allclose(
            forest_predict(shuffled, self.values), forest_predict(model, self.values), rtol=1e-12
        )

    def test_threads_do_not_change_the_forest(self):
        params = ForestParams(n_trees=8, max_depth=5).tree_params()
        one = forest_fit(self.values, self.y, 8, params, seed=4, task="regress", threads=1)
        many = forest_fit(self.values, self.y, 8, params, seed=4, task="regress", threads=3)
        self.assertEqual(one, many)

    def test_even_vote_goes_to_short_class(self):
        leaf = RegressionTree((TreeNode(0.0),))
        estimator = ForestEstimator(task="classify")
        estimator.model = ForestModel((leaf, leaf), (1.0, 0.0), "classify")
        estimator.schema = (ColumnSpec("f0", "numeric"),)
        self.assertEqual(forest_predict(estimator.model, [[0.0]])[0], 0.5)
        self.assertEqual(estimator.predict([[0.0]])[0], 1)

    def test_forest_beats_a_single_tree_out_of_bag(self):
        params = ForestParams().tree_params()
        wins = 0
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            values = rng.uniform(0, 10, (150, 3))
            y = 10 * np.sin(values[:, 0]) + rng.normal(0, 3, 150)
            single = forest_fit(values, y, 1, params, seed=seed, task="regress")
            forest = forest_fit(values, y, 60, params, seed=seed, task="regress")
            wins += forest_oob_error(forest, values, y) < forest_oob_error(single, values, y)
        self.assertGreaterEqual(wins, 9)


class TestPreprocessing(unittest.TestCase):
    def test_standardizing_twice_changes_nothing(self):
        values = np.random.default_rng(7).normal(5.0, 3.0, (40, 4))
        once = Standardizer().fit(values).transform(values)
        twice = Standardizer().fit(once).transform(once)
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_all_missing_column_imputes_zero(self):
        values = np.array([[1.0, np.nan], [3.0, np.nan]])
        np.testing.assert_array_equal(
            MedianImputer().fit(values).transform(values), [[1.0, 0.0], [3.0, 0.0]]
        )


class TestDocuments(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(9)
        self.values = random_grid(rng, 40, 3, missing=0.1)
        self.y = rng.uniform(5, 60, 40)
        self.labels = (np.nan_to_num(self.values[:, 0]) > 0).astype(float)

    @parameterized.expand(
        [(family, task) for family in FAMILY_PARAMS for task in ("regress", "classify")]
    )
    def test_round_trip_keeps_predictions(self, family, task):
        targets = self.labels if task == "classify" else self.y
        spec = LearnerSpec(family=family, task=task, params=FAMILY_PARAMS[family])
        estimator = spec.build(seed=5).fit(self.values, targets)
        restored = loads(dumps(estimator))
        self.assertIsInstance(restored, ESTIMATORS[family])
        np.testing.assert_array_equal(
            restored.predict(self.values), estimator.predict(self.values)
        )

    @parameterized.expand(
        [
            ("not_json", "{"),
            ("wrong_format", '{"format": "other"}'),
            ("wrong_version", '{"format": "incident-duration-model", "version": 99}'),
            (
                "unknown_family",
                '{"format": "incident-duration-model", "version": 1, "family": "svm"}',
            ),
            (
                "no_model",
                '{"format": "incident-duration-model", "version": 1, "family": "mean"}',
            ),
        ]
    )
    def test_corrupt_documents(self, _, text):
        with self.assertRaises(CorruptModel):
            loads(text)

    def test_schema_checked_on_predict(self):
        matrix = encode([full_incident("A", 10.0), full_incident("B", 20.0)])
        estimator = MeanEstimator().fit(matrix)
        self.assertEqual(estimator.predict(matrix).tolist(), [15.0, 15.0])
        with self.assertRaises(SchemaMismatch) as raised:
            estimator.predict(matrix.select(matrix.names[1:]))
        self.assertEqual(raised.exception.column, "x")
