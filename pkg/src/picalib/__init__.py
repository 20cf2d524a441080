"""Prediction intervals by constrained width minimization with Gaussian-supremum calibration."""

from .calib import CalibrationReport, Mode, calibrate, split_conformal
from .dataio import Family, LabeledDataset, SplitSpec, SyntheticSpec, gen_synthetic, load_csv, split, standardize
from .models import CandidatePool, IntervalModel, TrainConfig, train_pool

__version__ = "0.1.0"

__all__ = [
    "CalibrationReport",
    "CandidatePool",
    "Family",
    "IntervalModel",
    "LabeledDataset",
    "Mode",
    "SplitSpec",
    "SyntheticSpec",
    "TrainConfig",
    "calibrate",
    "gen_synthetic",
    "load_csv",
    "split",
    "split_conformal",
    "standardize",
    "train_pool",
]
