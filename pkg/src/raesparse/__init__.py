"""Regularized auto-encoders and tools for measuring the sparsity they learn."""
from .activations import Activation
from .data import Dataset, load_mnist_idx, standardize, synth_whitened_gaussian
from .model import Gradients, ModelParams, ae_grads, ae_loss, forward
from .numerics import ConstraintKind, project_rows
from .optimizer import TrainConfig, TrainHistory, train
from .regularizers import C2Function, Objective, ObjectiveSpec, objective
from .verify import CheckReport

__all__ = [
    "Activation", "C2Function", "CheckReport", "ConstraintKind", "Dataset", "Gradients",
    "ModelParams", "Objective", "ObjectiveSpec", "TrainConfig", "TrainHistory",
    "ae_grads", "ae_loss", "forward", "load_mnist_idx", "objective", "project_rows",
    "standardize", "synth_whitened_gaussian", "train",
]
__version__ = "0.1.0"
