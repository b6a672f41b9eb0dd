"""From-scratch learners: scaler, PCA, softmax regression, random forest,
and classification metrics."""

from adexpert.mlcore.forest import (
    DecisionTree,
    ForestParams,
    RandomForestModel,
    fit_random_forest,
    predict_forest,
)
from adexpert.mlcore.logistic import LogisticHyper, LogisticModel, fit_logistic, predict_logistic
from adexpert.mlcore.metrics import Metrics, accuracy, evaluate
from adexpert.mlcore.pca import PCAModel, fit_pca, project, reconstruct
from adexpert.mlcore.scaler import ScalerParams, fit_scaler, transform

__all__ = [
    "DecisionTree",
    "ForestParams",
    "LogisticHyper",
    "LogisticModel",
    "Metrics",
    "PCAModel",
    "RandomForestModel",
    "ScalerParams",
    "accuracy",
    "evaluate",
    "fit_logistic",
    "fit_pca",
    "fit_random_forest",
    "fit_scaler",
    "predict_forest",
    "predict_logistic",
    "project",
    "reconstruct",
    "transform",
]
