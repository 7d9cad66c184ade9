"""
pyidql - implicit Q-learning with diffusion behavior policies.
"""
from .config import ExperimentConfig
from .critic import CriticNets, CriticConfig
from .diffusion import BehaviorModel
from .extraction import ExtractionSpec, ExtractionMode
from .losses import ConvexLoss
from .runner import run


__all__ = [
    "ExperimentConfig",
    "CriticNets",
    "CriticConfig",
    "BehaviorModel",
    "ExtractionSpec",
    "ExtractionMode",
    "ConvexLoss",
    "run",
]
