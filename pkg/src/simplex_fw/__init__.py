"""Frank-Wolfe variants (FW, MFW, SWAP, PARTAN) for simplex-constrained
quadratic programs, specialised to L2-SVM training with RBF kernels."""

from .data import Dataset, SparseExample, dataset_stats, load_libsvm, parse_libsvm, split_train_validation
from .kernel import EffectiveKernel, KernelParams, MatrixKernel, gamma_heuristic, rbf
from .randomized import SamplerConfig
from .solver import SolverState, duality_gap, init_state
from .train import TrainConfig, TrainedModel, accuracy, predict, solve, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "SparseExample", "dataset_stats", "load_libsvm", "parse_libsvm",
    "split_train_validation", "EffectiveKernel", "KernelParams", "MatrixKernel",
    "gamma_heuristic", "rbf", "SamplerConfig", "SolverState", "duality_gap", "init_state",
    "TrainConfig", "TrainedModel", "accuracy", "predict", "solve", "train",
]
