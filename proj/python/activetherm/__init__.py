"""Active perception of the temperature field of a part built layer by layer.

Configurations are plain dicts (the JSON schema of the command-line tool);
missing keys take their defaults.
"""

import json

from . import _core
from ._core import (
    InvalidArgument,
    IoError,
    NumericalError,
    build_laplacian,
    diffusion_step,
    partition_visible,
    pose_towards,
    predict,
    rotation_from_orientation,
    select_control_points,
    update,
)

__all__ = [
    "InvalidArgument",
    "IoError",
    "NumericalError",
    "build_laplacian",
    "compare_policies",
    "default_config",
    "diffusion_step",
    "gen_schedule",
    "normalize_config",
    "partition_visible",
    "pose_towards",
    "predict",
    "rotation_from_orientation",
    "run",
    "select_control_points",
    "update",
]


def default_config():
    return json.loads(_core.default_config())


def normalize_config(config=None):
    return json.loads(_core.normalize_config(json.dumps(config or {})))


def gen_schedule(config=None):
    return json.loads(_core.gen_schedule(json.dumps(config or {})))


def run(config=None):
    """Run one experiment; per-cycle arrays plus a parsed ``summary``."""
    out = _core.run(json.dumps(config or {}))
    out["summary"] = json.loads(out["summary"])
    return out


def compare_policies(config=None):
    return json.loads(_core.compare_policies(json.dumps(config or {})))
