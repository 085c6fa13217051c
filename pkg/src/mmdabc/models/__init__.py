"""Stochastic channel simulators with a shared calibration interface."""

from .base import ModelInterface, as_seed_sequence
from .geometry import SPEED_OF_LIGHT, RoomGeometry, default_room_geometry
from .noise import add_noise
from .propagation_graph import (
    PG_INTEGER_PARAMS,
    PG_PARAM_NAMES,
    PG_PRIOR_RANGES,
    PropagationGraphModel,
    PropagationGraphParams,
    simulate_pg,
)
from .saleh_valenzuela import (
    SV_PARAM_NAMES,
    SV_PRIOR_RANGES,
    SalehValenzuelaModel,
    SalehValenzuelaParams,
    simulate_sv,
)

__all__ = [
    "ModelInterface",
    "as_seed_sequence",
    "add_noise",
    "RoomGeometry",
    "default_room_geometry",
    "SPEED_OF_LIGHT",
    "SalehValenzuelaModel",
    "SalehValenzuelaParams",
    "simulate_sv",
    "SV_PARAM_NAMES",
    "SV_PRIOR_RANGES",
    "PropagationGraphModel",
    "PropagationGraphParams",
    "simulate_pg",
    "PG_PARAM_NAMES",
    "PG_PRIOR_RANGES",
    "PG_INTEGER_PARAMS",
]
