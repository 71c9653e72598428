from .linear import LinearBinaryModel
from .network import LayerSpec, Network, conv_reference, init_params
from .oracle import BudgetExhausted, ModelOracle, query_many
from .train import TrainingDiverged, TrainReport, accuracy, default_arch, logistic_arch, train_toy
from .weights import WeightFileError, load_weights, save_weights

__all__ = [
    "BudgetExhausted", "LayerSpec", "LinearBinaryModel", "ModelOracle", "Network",
    "TrainReport", "TrainingDiverged", "WeightFileError", "accuracy", "conv_reference",
    "default_arch", "init_params", "load_weights", "logistic_arch", "query_many",
    "save_weights", "train_toy",
]
