"""Toy trainable network: numpy autodiff, model, optimizer, training and checks."""
from .model import ModelConfig, build_model, forward, predict
from .optim import Adam, OptimizerConfig
from .train import Dataset, TrainingLog, evaluate, train

__all__ = ["ModelConfig", "build_model", "forward", "predict", "Adam", "OptimizerConfig",
           "Dataset", "TrainingLog", "evaluate", "train"]
