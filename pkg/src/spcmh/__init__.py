"""Unsupervised cross-modal hashing with structure-preserving collective
matrix factorization."""

__version__ = "0.1.0"

from .dataio import PairedDataset, PreprocessStats, load_dataset, normalize_center, synth_clusters
from .estimator import CrossModalHasher
from .evaluation import average_precision, mean_average_precision, precision_recall
from .graph import GraphMatrices, build_graphs
from .hashing import HashCodeMatrix, encode, hamming, rank
from .model import Hyperparams, LatentModel, TrainReport, train

__all__ = [
    "CrossModalHasher",
    "GraphMatrices",
    "HashCodeMatrix",
    "Hyperparams",
    "LatentModel",
    "PairedDataset",
    "PreprocessStats",
    "TrainReport",
    "average_precision",
    "build_graphs",
    "encode",
    "hamming",
    "load_dataset",
    "mean_average_precision",
    "normalize_center",
    "precision_recall",
    "rank",
    "synth_clusters",
    "train",
]
