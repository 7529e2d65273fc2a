"""Viewport-graph quality assessment for omnidirectional (360-degree) images."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    InputError,
    MetricError,
    NumericError,
    OIQAError,
    ParameterError,
    StructuralError,
)
from .geometry import ViewportGraph, build_graph, distance_matrix, haversine, knn
from .kernels import BACKEND
from .model import ModelConfig, forward, forward_with_gradients, init_params, load_params, save_params
from .posenc import add_position, encode_position
from .projection import Viewport, extract_all, gnomonic_extract
from .sampler import SpherePoint, fibonacci_sample, to_geographic
from .training import TrainConfig, adamw_step, plcc, rmse, srcc, train

__all__ = [
    "BACKEND",
    "ConfigError",
    "DomainError",
    "FormatError",
    "InputError",
    "MetricError",
    "ModelConfig",
    "NumericError",
    "OIQAError",
    "ParameterError",
    "SpherePoint",
    "StructuralError",
    "TrainConfig",
    "Viewport",
    "ViewportGraph",
    "adamw_step",
    "add_position",
    "build_graph",
    "distance_matrix",
    "encode_position",
    "extract_all",
    "fibonacci_sample",
    "forward",
    "forward_with_gradients",
    "gnomonic_extract",
    "haversine",
    "init_params",
    "knn",
    "load_params",
    "plcc",
    "rmse",
    "save_params",
    "srcc",
    "to_geographic",
    "train",
]
