# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import math
import unittest

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from parameterized import parameterized

from exceptions import BadParams, CorruptModel, DimensionMismatch, NonPositiveTarget
from learners import LearnerSpec
from learners.booster import (
    BoosterEstimator,
    GbdtEstimator,
    HyperParams,
    LossSpec,
    RegressionTree,
    TreeEnsemble,
    TreeNode,
    deserialize,
    grow_tree,
    leaf_weight,
    log_mape_derivatives,
    loss_derivatives,
    loss_value,
    serialize,
    sigmoid,
    train,
)
from records import encode
from tuning import cross_validate, kfold

from .helpers import FAST_BOOSTER, random_grid, small_dataset


def gain_of(g_left, h_left, g_right, h_right, reg_lambda, gamma=0.0):
    total_g, total_h = g_left + g_right, h_left + h_right
    return (
        0.5
        * (
            g_left * g_left / (h_left + reg_lambda)
            + g_right * g_right / (h_right + reg_lambda)
            - total_g * total_g / (total_h + reg_lambda)
        )
        - gamma
    )


def best_root_gain(values, grad, hess, reg_lambda, mcw):
    """Best gain over every threshold and MISSING side, or None when nothing splits."""
    best = None
    for f in range(values.shape[1]):
        column = values[:, f]
        present = ~np.isnan(column)
        distinct = np.unique(column[present])
        for low, high in zip(distinct[:-1], distinct[1:]):
            threshold = low + (high - low) / 2
            for missing_left in (True, False):
                gain = routed_gain(
                    column, grad, hess, threshold, missing_left, reg_lambda, mcw
                )
                if gain is not None and (best is None or gain > best):
                    best = gain
    return best


def routed_gain(column, grad, hess, threshold, missing_left, reg_lambda, mcw):
    missing = np.isnan(column)
    with np.errstate(invalid="ignore"):
        left = np.where(missing, missing_left, column <= threshold)
    if hess[left].sum() < mcw or hess[~left].sum() < mcw:
        return None
    return gain_of(
        grad[left].sum(), hess[left].sum(), grad[~left].sum(), hess[~left].sum(), reg_lambda
    )


class NaiveGbdt:
    """Unvectorized squared-error GBDT without regularization or MISSING cells."""

    def __init__(self, max_depth: int, learning_rate: float):
        self.max_depth = max_depth
        self.learning_rate = learning_rate

    def fit(self, values, y, n_rounds):
        base = float(y.mean())
        margin = np.full(y.shape[0], base)
        trees = []
        for _ in range(n_rounds):
            grad, hess = margin - y, np.ones_like(y)
            nodes = []
            self._grow(values, grad, hess, np.arange(y.shape[0]), 0, nodes)
            trees.append(nodes)
            margin += self.learning_rate * self.predict_tree(nodes, values)
        return base, trees

    def _grow(self, values, grad, hess, rows, depth, nodes):
        node_id = len(nodes)
        weight = -float(grad[rows].sum()) / float(hess[rows].sum())
        nodes.append([weight, -1, 0.0, True, -1, -1])
        if depth >= self.max_depth or rows.size < 2:
            return node_id
        best_gain, best = -math.inf, None
        for f in range(values.shape[1]):
            column = values[rows, f]
            order = np.argsort(column, kind="stable")
            ordered, g, h = column[order], grad[rows][order], hess[rows][order]
            total_g = total_h = 0.0
            for i in range(rows.size):
                total_g += g[i]
                total_h += h[i]
            g_left = h_left = 0.0
            for p in range(rows.size - 1):
                g_left += g[p]
                h_left += h[p]
                if not ordered[p + 1] > ordered[p]:
                    continue
                gain = gain_of(g_left, h_left, total_g - g_left, total_h - h_left, 0.0)
                if gain > best_gain:
                    best_gain, best = gain, (f, ordered[p], ordered[p + 1])
        if best is None or not best_gain > 0:
            return node_id
        f, low, high = best
        threshold = low + (high - low) / 2
        if threshold >= high:
            threshold = low
        go_left = values[rows, f] <= threshold
        left = self._grow(values, grad, hess, rows[go_left], depth + 1, nodes)
        right = self._grow(values, grad, hess, rows[~go_left], depth + 1, nodes)
        nodes[node_id] = [weight, f, threshold, True, left, right]
        return node_id

    @staticmethod
    def predict_tree(nodes, values):
        out = np.empty(values.shape[0])
        for i, row in enumerate(values):
            node = nodes[0]
            while node[1] >= 0:
                node = nodes[node[4]] if row[node[1]] <= node[2] else nodes[node[5]]
            out[i] = node[0]
        return out


class TestLosses(unittest.TestCase):
    @parameterized.expand(
        [
            ("squared_error", 3.0, 5.0, 2.0, 1.0),
            ("logistic", 1.0, 0.0, -0.5, 0.25),
            ("absolute", 3.0, 5.0, 1.0, 1e-6),
            ("mape", 4.0, 2.0, -0.25, 0.25),
        ]
    )
    def test_worked_derivatives(self, kind, y, yhat, grad, hess):
        g, h = loss_derivatives(LossSpec(kind), np.array([y]), np.array([yhat]))
        self.assertAlmostEqual(g[0], grad)
        self.assertAlmostEqual(h[0], hess)

    @parameterized.expand([("squared_error",), ("absolute",), ("mape",)])
    def test_gradient_matches_finite_difference(self, kind):
        rng = np.random.default_rng(3)
        loss = LossSpec(kind)
        y = rng.uniform(5.0, 100.0, 200)
        # keep the prediction away from the kink at y
        yhat = y + rng.choice([-1.0, 1.0], 200) * rng.uniform(0.5, 20.0, 200)
        eps = 1e-3
        numeric = (loss_value(loss, y, yhat + eps) - loss_value(loss, y, yhat - eps)) / (2 * eps)
        grad, _ = loss_derivatives(loss, y, yhat)
        np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-9)

    def test_logistic_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(4)
        loss = LossSpec("logistic")
        y = rng.integers(0, 2, 200).astype(float)
        margin = rng.uniform(-5.0, 5.0, 200)
        eps = 1e-5
        numeric = (loss_value(loss, y, margin + eps) - loss_value(loss, y, margin - eps)) / (
            2 * eps
        )
        grad, hess = loss_derivatives(loss, y, margin)
        np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-8)
        p = sigmoid(margin)
        np.testing.assert_allclose(hess, p * (1 - p))

    def test_log_mape_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(6)
        loss = LossSpec("mape")
        y = rng.uniform(0.2, 50.0, 200)
        # keep exp(margin) away from the kink at y
        margin = np.log(y) + rng.choice([-1.0, 1.0], 200) * rng.uniform(0.1, 1.0, 200)
        eps = 1e-5
        numeric = (
            loss_value(loss, y, np.exp(margin + eps)) - loss_value(loss, y, np.exp(margin - eps))
        ) / (2 * eps)
        grad, hess = log_mape_derivatives(loss, y, margin)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(hess, np.exp(margin) / y)

    def test_log_mape_accepts_sub_minute_targets(self):
        y = np.array([0.5, 1.0, 3.0])
        grad, _ = log_mape_derivatives(LossSpec("mape"), y, np.log(y) + 0.2)
        self.assertTrue((grad > 0).all())
        with self.assertRaises(NonPositiveTarget):
            log_mape_derivatives(LossSpec("mape"), np.array([0.0]), np.array([0.0]))

    def test_mape_needs_positive_targets(self):
        with self.assertRaises(NonPositiveTarget):
            loss_derivatives(LossSpec("mape"), np.array([0.0]), np.array([1.0]))

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            loss_derivatives(LossSpec(), np.zeros(2), np.zeros(3))

    def test_unknown_loss(self):
        with self.assertRaises(ValueError):
            LossSpec("hinge")

    @given(
        st.floats(min_value=-1e3, max_value=1e3),
        st.floats(min_value=1e-3, max_value=1e3),
        st.floats(min_value=0.0, max_value=10.0),
        st.floats(min_value=1e-3, max_value=1.0),
    )
    def test_leaf_weight_minimizes_second_order_objective(self, g, h, reg_lambda, step):
        w = leaf_weight(g, h, reg_lambda)

        def objective(v):
            return g * v + 0.5 * (h + reg_lambda) * v * v

        tolerance = 1e-9 * max(1.0, abs(objective(w)))
        self.assertLessEqual(objective(w), objective(w + step) + tolerance)
        self.assertLessEqual(objective(w), objective(w - step) + tolerance)


class TestGrowTree(unittest.TestCase):
    def setUp(self):
        self.params = HyperParams(reg_lambda=0.0, min_child_weight=0.0, max_depth=1)

    def test_worked_split(self):
        tree = grow_tree(
            [[1.0], [2.0], [3.0], [4.0]], [-1, -1, 1, 1], np.ones(4), None, None, self.params
        )
        root, left, right = tree.nodes
        self.assertEqual((root.feature_index, root.threshold), (0, 2.5))
        self.assertEqual((left.weight, right.weight), (1.0, -1.0))
        np.testing.assert_array_equal(tree.predict(np.array([[0.0], [9.0]])), [1.0, -1.0])

    def test_no_positive_gain_gives_single_leaf(self):
        params = HyperParams(reg_lambda=1.0, min_child_weight=0.0)
        tree = grow_tree([[1.0], [2.0], [3.0]], [1, 1, 1], np.ones(3), None, None, params)
        self.assertEqual(tree.nodes, (TreeNode(-0.75),))

    @parameterized.expand([("missing_like_low_rows", -1.0, True), ("like_high_rows", 1.0, False)])
    def test_missing_cells_take_the_better_side(self, _, missing_grad, default_left):
        values = np.array([[1.0], [2.0], [np.nan], [np.nan]])
        grad = np.array([-1.0, 1.0, missing_grad, missing_grad])
        tree = grow_tree(values, grad, np.ones(4), None, None, self.params)
        self.assertEqual(tree.nodes[0].default_left, default_left)
        missing_leaf = tree.apply(np.array([[np.nan]]))[0]
        low_leaf = tree.apply(np.array([[1.0]]))[0]
        self.assertEqual(missing_leaf == low_leaf, default_left)

    def test_no_missing_defaults_left(self):
        rng = np.random.default_rng(0)
        values = rng.normal(size=(30, 3))
        tree = grow_tree(values, rng.normal(size=30), np.ones(30), None, None, self.params)
        self.assertTrue(all(n.default_left for n in tree.nodes))

    def test_root_gain_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            rows, cols = int(rng.integers(2, 13)), int(rng.integers(1, 5))
            values = random_grid(rng, rows, cols, missing=0.2)
            grad = rng.normal(size=rows)
            hess = rng.uniform(0.5, 2.0, rows)
            reg_lambda = float(rng.uniform(0.0, 2.0))
            params = HyperParams(reg_lambda=reg_lambda, min_child_weight=1.0, max_depth=1)
            tree = grow_tree(values, grad, hess, None, None, params)
            expected = best_root_gain(values, grad, hess, reg_lambda, 1.0)
            root = tree.nodes[0]
            if expected is None:
                self.assertTrue(root.is_leaf)
                continue
            if expected <= 1e-12:
                continue
            self.assertFalse(root.is_leaf)
            found = routed_gain(
                values[:, root.feature_index],
                grad,
                hess,
                root.threshold,
                root.default_left,
                reg_lambda,
                1.0,
            )
            self.assertAlmostEqual(found, expected, delta=1e-9)

    def test_masks(self):
        values = np.array([[1.0, 5.0], [2.0, 6.0], [3.0, 7.0], [4.0, 8.0]])
        grad = np.array([-1.0, -1.0, 1.0, 1.0])
        tree = grow_tree(values, grad, np.ones(4), None, [False, True], self.params)
        self.assertEqual(tree.split_features(), [1])
        tree = grow_tree(values, grad, np.ones(4), [True, True, False, False], None, self.params)
        self.assertTrue(tree.nodes[0].is_leaf)
        with self.assertRaises(DimensionMismatch):
            grow_tree(values, grad, np.ones(4), [True], None, self.params)


class TestTrain(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(5)
        self.values = random_grid(rng, 60, 4, missing=0.1)
        self.y = 30.0 * np.exp(0.5 * np.nan_to_num(self.values[:, 0])) + rng.uniform(1, 5, 60)

    def test_matches_naive_gbdt(self):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            values = rng.normal(size=(20, 3))
            y = rng.normal(50.0, 10.0, 20)
            params = HyperParams(
                max_depth=3, learning_rate=0.3, reg_lambda=0.0, gamma=0.0, n_rounds=5
            )
            ensemble = train(values, y, LossSpec("squared_error"), params, seed=seed)
            base, trees = NaiveGbdt(3, 0.3).fit(values, y, 5)
            self.assertEqual(ensemble.base_score, base)
            self.assertEqual(len(ensemble.trees), len(trees))
            for tree, naive in zip(ensemble.trees, trees):
                self.assertEqual(
                    [
                        [n.weight, n.feature_index, n.threshold, n.default_left, n.left, n.right]
                        for n in tree.nodes
                    ],
                    naive,
                )

    def test_zero_rounds_predicts_the_mean(self):
        ensemble = train(self.values, self.y, LossSpec(), HyperParams(n_rounds=0))
        np.testing.assert_allclose(ensemble.predict(self.values), np.full(60, self.y.mean()))

    def test_single_full_step_tree_fits_distinct_rows(self):
        values = np.arange(8.0).reshape(-1, 1)
        y = np.array([3.0, 9.0, 1.0, 7.0, 2.0, 8.0, 4.0, 6.5])
        params = HyperParams(
            n_rounds=1, learning_rate=1.0, reg_lambda=0.0, min_child_weight=0.0, max_depth=10
        )
        ensemble = train(values, y, LossSpec(), params)
        np.testing.assert_allclose(ensemble.predict(values), y, atol=1e-9)

    def test_squared_error_training_loss_never_increases(self):
        params = HyperParams(n_rounds=15, max_depth=3, learning_rate=0.3)
        ensemble = train(self.values, self.y, LossSpec(), params)
        losses = []
        for k in range(len(ensemble.trees) + 1):
            partial = TreeEnsemble(ensemble.trees[:k], ensemble.base_score, 0.3)
            losses.append(float(np.mean((partial.predict(self.values) - self.y) ** 2)))
        for before, after in zip(losses, losses[1:]):
            self.assertLessEqual(after, before + 1e-9)
        self.assertLess(losses[-1], losses[0])

    @parameterized.expand(
        [
            ("zero_squared_error", 0.0, "squared_error"),
            ("negative_squared_error", -1.0, "squared_error"),
            ("zero_mape", 0.0, "mape"),
            ("negative_mape", -1.0, "mape"),
        ]
    )
    def test_log_space_needs_positive_targets(self, _, bad, kind):
        y = self.y.copy()
        y[7] = bad
        with self.assertRaises(NonPositiveTarget):
            train(self.values, y, LossSpec(kind), HyperParams(n_rounds=1), target_transform="log")

    @parameterized.expand([("squared_error",), ("mape",)])
    def test_log_space_trains_on_sub_minute_targets(self, kind):
        # several targets at or below one minute, whose logarithm is not positive
        y = np.concatenate([[0.5, 1.0, 3.0], self.y[3:] / 20.0])
        params = HyperParams(n_rounds=30, max_depth=3, learning_rate=0.3)
        ensemble = train(self.values, y, LossSpec(kind), params, target_transform="log")
        prediction = ensemble.predict(self.values)
        self.assertTrue(np.isfinite(prediction).all())
        self.assertTrue((prediction > 0).all())
        start = np.exp(np.mean(np.log(y)))
        self.assertLess(np.mean(np.abs(prediction - y) / y), np.mean(np.abs(start - y) / y))

    def test_logistic_classifier(self):
        labels = (np.nan_to_num(self.values[:, 1]) > 0).astype(float)
        params = HyperParams(n_rounds=20, max_depth=2)
        ensemble = train(self.values, labels, LossSpec("logistic"), params)
        p = ensemble.predict(self.values)
        self.assertTrue(((p > 0) & (p < 1)).all())
        self.assertGreater(np.mean(ensemble.predict_class(self.values) == labels), 0.9)

    def test_same_seed_same_ensemble(self):
        params = HyperParams(n_rounds=10, subsample=0.7, colsample_bytree=0.5)
        first = train(self.values, self.y, LossSpec("mape"), params, seed=9)
        second = train(self.values, self.y, LossSpec("mape"), params, seed=9)
        self.assertEqual(first.trees, second.trees)


class TestEnsemble(unittest.TestCase):
    def test_prediction_arithmetic(self):
        ensemble = TreeEnsemble((RegressionTree((TreeNode(2.5),)),), 40.0, 0.1)
        self.assertAlmostEqual(ensemble.predict(np.zeros((1, 1)))[0], 40.25)

    def test_log_space_prediction(self):
        ensemble = TreeEnsemble((), 4.0, 0.3, target_transform="log")
        self.assertAlmostEqual(ensemble.predict(np.zeros((1, 2)))[0], math.exp(4.0))

    def test_serialize_round_trip(self):
        rng = np.random.default_rng(8)
        values = random_grid(rng, 80, 5, missing=0.15)
        y = rng.uniform(5, 60, 80)
        ensemble = train(values, y, LossSpec("mape"), HyperParams(n_rounds=50), seed=2)
        restored = deserialize(serialize(ensemble))
        query = random_grid(rng, 100, 5, missing=0.15)
        np.testing.assert_array_equal(restored.predict(query), ensemble.predict(query))
        empty = TreeEnsemble((), 12.0, 0.3)
        self.assertEqual(deserialize(serialize(empty)).predict(query[:3]).tolist(), [12.0] * 3)

    @parameterized.expand(
        [
            ("truncated", lambda text: text[: len(text) // 2]),
            ("not_a_document", lambda text: "[1, 2]"),
            ("no_trees", lambda text: text.replace('"trees"', '"shrubs"')),
        ]
    )
    def test_corrupt_documents(self, _, damage):
        ensemble = train(np.arange(6.0).reshape(-1, 1), np.arange(6.0), LossSpec(),
                         HyperParams(n_rounds=2))
        with self.assertRaises(CorruptModel):
            deserialize(damage(serialize(ensemble)))


class TestEstimators(unittest.TestCase):
    def test_gbdt_forces_zero_regularizers(self):
        params = GbdtEstimator(params={"reg_lambda": 5.0, "gamma": 2.0}).hyper_params()
        self.assertEqual((params.reg_lambda, params.gamma), (0.0, 0.0))

    @parameterized.expand([({"max_depth": 0},), ({"learning_rate": 2.0},), ({"depth": 3},)])
    def test_bad_params(self, params):
        with self.assertRaises(BadParams):
            BoosterEstimator(params=params).fit(np.zeros((3, 1)), [1.0, 2.0, 3.0])

    def test_regressor_loss_must_be_a_regression_loss(self):
        with self.assertRaises(BadParams):
            BoosterEstimator(loss="logistic").loss_spec()
        self.assertEqual(BoosterEstimator(task="classify").loss_spec().kind, "logistic")
        self.assertEqual(BoosterEstimator().loss_spec().kind, "mape")

    def test_log_space_regressor_predicts_minutes(self):
        values = np.arange(10.0).reshape(-1, 1)
        y = np.full(10, 20.0)
        estimator = BoosterEstimator(params={"n_rounds": 3}, log_space=True).fit(values, y)
        np.testing.assert_allclose(estimator.predict(values), y)


class TestLogSpaceTrend(unittest.TestCase):
    def test_log_space_mape_is_lower_on_most_seeds(self):
        wins = 0
        for seed in range(10):
            dataset = small_dataset(seed)
            matrix = encode(dataset.incidents)
            y = matrix.target
            plan = kfold(len(y), 5, seed)
            scores = {}
            for log_space in (True, False):
                spec = LearnerSpec(
                    family="gbdt", loss="squared_error", log_space=log_space, params=FAST_BOOSTER
                )
                result = cross_validate(spec, matrix, y, plan, ["mape"], seed=seed)
                scores[log_space] = result.mean("mape")
            wins += scores[True] <= scores[False]
        self.assertGreaterEqual(wins, 8)
