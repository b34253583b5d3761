"""Figures from opinion-steer trajectory files.

Talks to the simulator only through its output files: the trajectory CSV
and the sidecar summary JSON. Nothing here imports opinion_steer.
"""

from .trajfile import Trajectory, TrajectoryFormatError, read_trajectory
from .figures import (
    DENSITY_BINS,
    KINDS,
    OPINION_RANGE,
    FigureRequest,
    band_separation,
    density_matrix,
    mode_count,
    render_figures,
)

__all__ = [
    "DENSITY_BINS",
    "KINDS",
    "OPINION_RANGE",
    "FigureRequest",
    "Trajectory",
    "TrajectoryFormatError",
    "band_separation",
    "density_matrix",
    "mode_count",
    "read_trajectory",
    "render_figures",
]
