"""Multi-scale transformer for remaining-useful-life regression, built on a numpy autodiff engine."""

from .config import DataConfig, ModelConfig, RunSpec, TrainConfig, load_spec
from .model import MsFormer, count_params

__all__ = ["DataConfig", "ModelConfig", "RunSpec", "TrainConfig", "load_spec", "MsFormer", "count_params"]
__version__ = "0.1.0"
