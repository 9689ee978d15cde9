"""Training-free architecture search for spiking neural networks.

Candidates from a cell search space with forward and backward (temporal
feedback) edges are ranked by the log-determinant of a sparsity-aware
Hamming-distance kernel built from their untrained spike patterns.
"""

__version__ = "0.1.0"

from .genotype import CellGenotype, Mode, Operation, sample_genotype  # noqa: E402
from .network import NetworkConfig, RunMode, SpikingNetwork, build_network  # noqa: E402
from .scoring import ArchitectureScore, score_candidate  # noqa: E402
from .search import random_search  # noqa: E402

__all__ = [
    "ArchitectureScore", "CellGenotype", "Mode", "NetworkConfig", "Operation", "RunMode",
    "SpikingNetwork", "build_network", "random_search", "sample_genotype", "score_candidate",
]
