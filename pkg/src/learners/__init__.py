# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Learner families behind one estimator interface.

Importing the package registers every family: booster, gbdt, forest, knn,
linear and mean.
"""

from learners.base import ESTIMATORS, Estimator, LearnerSpec, dumps, loads
from learners.booster import BoosterEstimator, GbdtEstimator, HyperParams, LossSpec
from learners.baselines import ForestEstimator, KnnEstimator, LinearEstimator, MeanEstimator

__all__ = [
    "ESTIMATORS",
    "BoosterEstimator",
    "Estimator",
    "ForestEstimator",
    "GbdtEstimator",
    "HyperParams",
    "KnnEstimator",
    "LearnerSpec",
    "LinearEstimator",
    "LossSpec",
    "MeanEstimator",
    "dumps",
    "loads",
]
