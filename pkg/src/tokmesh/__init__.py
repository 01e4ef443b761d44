"""Token-based human mesh recovery at desk scale.

A transformer estimates body-model parameters from rendered synthetic
images via learnable joint-rotation, shape and camera tokens; a second
transformer models the temporal motion of each joint token separately.
Everything runs in float64 on CPU and is reproducible from (config, seed).
"""

from tokmesh.body_model import BodyModelSpec, build_mini_model
from tokmesh.base_model import BaseModel, ModelConfig
from tokmesh.config import RunConfig
from tokmesh.temporal import PerJointTemporal, TemporalConfig, WholePoseTemporal

__version__ = "0.1.0"

__all__ = [
    "BaseModel",
    "BodyModelSpec",
    "ModelConfig",
    "PerJointTemporal",
    "RunConfig",
    "TemporalConfig",
    "WholePoseTemporal",
    "build_mini_model",
    "__version__",
]
