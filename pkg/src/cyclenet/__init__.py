"""Budgeted cycling network design with sampled followers and embedded predictors."""

__version__ = "0.1.0"

from .network import GridParams, Network, generate_synthetic, load_instance, save_instance
from .routing import (
    Design,
    ImpedanceSpec,
    PRESETS,
    TravelTimeEvaluator,
    accessibility,
    exact_objective,
    follower_time,
    full_design,
    get_impedance,
    traversable,
)

__all__ = [
    "Design",
    "GridParams",
    "ImpedanceSpec",
    "Network",
    "PRESETS",
    "TravelTimeEvaluator",
    "accessibility",
    "exact_objective",
    "follower_time",
    "full_design",
    "generate_synthetic",
    "get_impedance",
    "load_instance",
    "save_instance",
    "traversable",
]
