"""Walk-steered convolution networks for graph classification."""

from .estimator import DEFAULT_ARCH, MUTAG_ARCH, WSCClassifier, check_graphs
from .exceptions import (
    ArchitectureParseError,
    ConfigurationError,
    DomainError,
    FormatError,
    IngestionError,
    UsageError,
    WSCError,
)
from .experiment import (
    ExperimentConfig,
    FoldResult,
    emit_report,
    emit_sweep,
    run_cross_validation,
    run_sweep,
)
from .graph import Dataset, Graph, initialize_attributes, load_tu_dataset, make_graph, save_tu_dataset
from .model import WSCNetwork, parse_architecture

__version__ = "0.1.0"

__all__ = [
    "ArchitectureParseError",
    "ConfigurationError",
    "DEFAULT_ARCH",
    "Dataset",
    "DomainError",
    "ExperimentConfig",
    "FoldResult",
    "FormatError",
    "Graph",
    "IngestionError",
    "MUTAG_ARCH",
    "UsageError",
    "WSCClassifier",
    "WSCError",
    "WSCNetwork",
    "check_graphs",
    "emit_report",
    "emit_sweep",
    "initialize_attributes",
    "load_tu_dataset",
    "make_graph",
    "parse_architecture",
    "run_cross_validation",
    "run_sweep",
    "save_tu_dataset",
]
