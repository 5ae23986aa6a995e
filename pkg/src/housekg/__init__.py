"""Knowledge-graph embeddings built from Householder rotations and projections."""

from .householder import (
    DegenerateVectorError,
    DimensionError,
    NonInvertibleError,
    NotARotationError,
    ProjectionChain,
    apply_projection_chain,
    apply_rotation_chain,
    decompose_rotation,
    invert_projection_chain,
    materialize_projection,
    materialize_rotation,
    project,
    reflect,
)
from .model import HousEModel, ModelConfig, Side, Variant, init_parameters

__all__ = [
    "DegenerateVectorError", "DimensionError", "NonInvertibleError", "NotARotationError",
    "ProjectionChain", "apply_projection_chain", "apply_rotation_chain", "decompose_rotation",
    "invert_projection_chain", "materialize_projection", "materialize_rotation", "project",
    "reflect", "HousEModel", "ModelConfig", "Side", "Variant", "init_parameters",
]

__version__ = "0.1.0"
