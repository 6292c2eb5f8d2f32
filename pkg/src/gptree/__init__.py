"""Streaming regression with a dividing tree of local Gaussian processes."""

from gptree.gp import Dataset, ExactGPBackend, FactorizationError, TrainedGP, fit
from gptree.kernels import KernelKind, KernelParams
from gptree.tree import GPTree, JointPrediction, SplitRule, TreeConfig

__all__ = [
    "Dataset", "ExactGPBackend", "FactorizationError", "TrainedGP", "fit",
    "KernelKind", "KernelParams",
    "GPTree", "JointPrediction", "SplitRule", "TreeConfig",
]
__version__ = "0.1.0"
