"""Incremental factor-graph construction for asynchronous multi-rate sensors.

Adjacent core measurements are clustered into shared pose variables, every
admissible topology of an epoch is built and solved, and the best one under a
chosen metric is appended to the running graph.
"""

from .core import Measurement, MeasurementSequence, SensorKind, SensorSpec
from .errors import ConfigError, DataError, FgsyncError, PipelineError
from .graph import FactorGraph
from .pipeline import PipelineConfig, Scenario, run_epoch, run_trajectory

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "FactorGraph",
    "FgsyncError",
    "Measurement",
    "MeasurementSequence",
    "PipelineConfig",
    "PipelineError",
    "Scenario",
    "SensorKind",
    "SensorSpec",
    "run_epoch",
    "run_trajectory",
]
