"""Next-step stock return forecasting with a time2vec transformer encoder."""

from .estimator import TransformerRegressor
from .model import ModelConfig
from .pipeline import TransformPipeline, prepare
from .train import TrainConfig

__all__ = ["ModelConfig", "TrainConfig", "TransformPipeline", "TransformerRegressor", "prepare"]
__version__ = "0.1.0"
