"""doughroll: roll simulated dough into target lengths with learned models and MPC."""

__version__ = "0.1.0"

from .geometry import DoughState, featurize  # noqa: F401
from .sim import DoughSim, Material, RollAction, material_presets  # noqa: F401
