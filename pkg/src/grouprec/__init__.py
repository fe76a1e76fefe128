"""Group-aware multi-interest recommender with a self-contained autodiff core."""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor
from .config import TrainConfig
from .datasets import Dataset, Interactions, load_dataset, load_prepared, split_holdout
from .evaluate import evaluate_popularity, evaluate_ranking
from .model import GroupRecommender
from .synthetic import generate_synthetic
from .trainer import Trainer, TrainResult, build_model_from_arrays

__all__ = [
    "Tape",
    "Tensor",
    "TrainConfig",
    "Dataset",
    "Interactions",
    "load_dataset",
    "load_prepared",
    "split_holdout",
    "evaluate_popularity",
    "evaluate_ranking",
    "GroupRecommender",
    "generate_synthetic",
    "Trainer",
    "TrainResult",
    "build_model_from_arrays",
    "__version__",
]
