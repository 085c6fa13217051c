"""Room and antenna-array geometry for the graph-based simulator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidDataError

__all__ = ["RoomGeometry", "default_room_geometry", "SPEED_OF_LIGHT"]

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class RoomGeometry:
    """A rectangular room with fixed transmit and receive antenna positions.

    Positions are 3-D points in meters with the room spanning
    [0, dx] x [0, dy] x [0, dz].
    """

    dimensions_m: tuple
    tx_positions_m: np.ndarray
    rx_positions_m: np.ndarray

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions_m)
        if len(dims) != 3 or any(not np.isfinite(d) or d <= 0 for d in dims):
            raise InvalidDataError(f"room dimensions must be 3 positive numbers, got {dims!r}")
        object.__setattr__(self, "dimensions_m", dims)
        for name in ("tx_positions_m", "rx_positions_m"):
            pos = np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64))
            if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
                raise InvalidDataError(f"{name} must be an (n, 3) array with n >= 1")
            if not np.isfinite(pos).all():
                raise InvalidDataError(f"{name} contains non-finite coordinates")
            if (pos < 0).any() or (pos > np.asarray(dims)).any():
                raise InvalidDataError(f"{name} has positions outside the room box")
            object.__setattr__(self, name, pos)

    @property
    def n_tx(self) -> int:
        return self.tx_positions_m.shape[0]

    @property
    def n_rx(self) -> int:
        return self.rx_positions_m.shape[0]


def _planar_array(center, n_side: int, spacing_m: float) -> np.ndarray:
    """Square n_side x n_side grid in the x-z plane around a center point."""
    offsets = (np.arange(n_side) - (n_side - 1) / 2.0) * spacing_m
    xx, zz = np.meshgrid(offsets, offsets, indexing="ij")
    pts = np.column_stack(
        [
            center[0] + xx.ravel(),
            np.full(n_side * n_side, center[1]),
            center[2] + zz.ravel(),
        ]
    )
    return pts


def default_room_geometry(n_side: int = 5, spacing_m: float | None = None) -> RoomGeometry:
    """A 3 x 4 x 3 m room with two facing square antenna arrays.

    The arrays are n_side x n_side planar grids; the default element spacing
    is half a wavelength at 60 GHz.
    """
    if n_side < 1:
        raise InvalidDataError("n_side must be at least 1")
    if spacing_m is None:
        spacing_m = SPEED_OF_LIGHT / 60e9 / 2.0
    dims = (3.0, 4.0, 3.0)
    tx = _planar_array((0.75, 0.5, 1.5), n_side, spacing_m)
    rx = _planar_array((2.25, 3.5, 1.5), n_side, spacing_m)
    return RoomGeometry(dimensions_m=dims, tx_positions_m=tx, rx_positions_m=rx)
