"""Load-profile segmentation with Gaussian mixtures and cluster prediction
with KNN, random forests and boosted trees."""

from .data import (
    Granularity, LabeledDataset, MeterSeries, ProfileMatrix, aggregate_by_sector,
    disaggregated_matrix, lag_features, load_csv, mean_daily_profile,
)
from .errors import ProfilecastError
from .gmm import CovarianceStructure, GmmModel, assign, em_fit, select_model

__version__ = "0.1.0"

__all__ = [
    "CovarianceStructure", "GmmModel", "Granularity", "LabeledDataset", "MeterSeries",
    "ProfileMatrix", "ProfilecastError", "aggregate_by_sector", "assign", "disaggregated_matrix",
    "em_fit", "lag_features", "load_csv", "mean_daily_profile", "select_model",
]
