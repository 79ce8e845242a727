"""Learning arithmetic circuits with an inference-cost penalty."""

__version__ = "0.1.0"

from .bn import BayesianNetwork, Split
from .circuit import ArithmeticCircuit, Evidence, build_initial_circuit, check_properties
from .data import Dataset, load_dataset, split_dataset
from .errors import ACError, DataError, ImpossibleEvidenceError, InternalError, InvalidSplitError
from .inference import Query, evaluate_queryset, generate_queries, query_conditional
from .learner import LearnerConfig, learn

__all__ = [
    "ACError", "ArithmeticCircuit", "BayesianNetwork", "DataError", "Dataset", "Evidence",
    "ImpossibleEvidenceError", "InternalError", "InvalidSplitError", "LearnerConfig", "Query",
    "Split", "build_initial_circuit", "check_properties", "evaluate_queryset", "generate_queries",
    "learn", "load_dataset", "query_conditional", "split_dataset",
]
