"""Co-optimisation of CPU scheduling and distributed ML training over a network."""

from ._accel import backend_name
from .quantize import QuantizerConfig, quantize
from .topology import (
    NetworkSchedule,
    WeightedGraph,
    algebraic_connectivity,
    build_erdos_renyi,
    build_exponential,
    graph_at,
    laplacian,
)

__version__ = "0.1.0"

__all__ = [
    "NetworkSchedule",
    "QuantizerConfig",
    "WeightedGraph",
    "algebraic_connectivity",
    "backend_name",
    "build_erdos_renyi",
    "build_exponential",
    "graph_at",
    "laplacian",
    "quantize",
]
