"""TSB: a Transformer with stacked Bi-LSTM sublayers for multi-channel spectrum forecasting."""

from .errors import ConfigError, ContractError, DimensionError, NumericError, TsbError
from .model import ModelConfig, TsbModel, load_checkpoint, save_checkpoint
from .specgen import InterferenceMode, ScenarioConfig, generate_frame
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "InterferenceMode",
    "ModelConfig",
    "NumericError",
    "ScenarioConfig",
    "TrainConfig",
    "TsbError",
    "TsbModel",
    "generate_frame",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
