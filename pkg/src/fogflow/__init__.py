"""Semi-supervised optical flow for dense foggy scenes.

A physics-based fog synthesizer, a dual-encoder network doing joint flow
estimation and fog/clean domain transformation, the seven training
objectives, a three-stage alternating trainer with strict freeze schedules,
and evaluation tooling.
"""

from .config import TrainConfig, load_config
from .fogphys import FogParameters, alpha_from_depth, chromaticity, render_fog
from .losses import LossReport
from .networks import ParameterStore, init_network
from .training import TrainState, load_checkpoint, save_checkpoint, train

__all__ = [
    "TrainConfig",
    "load_config",
    "FogParameters",
    "alpha_from_depth",
    "chromaticity",
    "render_fog",
    "LossReport",
    "ParameterStore",
    "init_network",
    "TrainState",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
