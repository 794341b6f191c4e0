"""Median-aggregated MAE random forests for monthly inflation nowcasting."""
from .data import (DataError, DesignMatrix, PipelineConfig, SeriesFrame, TransformSpec,
                   build_design, load_csv)
from .rf_core import Forest, ForestParams, Tree, best_split, fit_forest, fit_tree
from .baselines import NumericalError

__version__ = "0.1.0"

__all__ = ["DataError", "DesignMatrix", "PipelineConfig", "SeriesFrame", "TransformSpec",
           "build_design", "load_csv", "Forest", "ForestParams", "Tree", "best_split",
           "fit_forest", "fit_tree", "NumericalError"]
