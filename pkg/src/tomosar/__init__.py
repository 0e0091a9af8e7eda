"""Multi-baseline SAR tomography toolkit.

Simulation of urban-like interferometric stacks, non-local stack filtering,
compressive-sensing elevation inversion, estimation-accuracy bounds, and
evaluation utilities, plus a command-line front end.
"""

from .model import (
    AcquisitionGeometry,
    ElevationGrid,
    SteeringMatrix,
    build_steering_matrix,
    elevation_from_height,
    forward_model,
    height_from_elevation,
    height_to_phase,
    rayleigh_resolution,
    spatial_frequencies,
)
from .simulate import (
    InsarStack,
    Rectangle,
    SceneSpec,
    add_noise,
    baseline_distribution,
    default_scene,
    generate_scene,
    simulate_stack,
)
from .solver import (
    L1LsProblem,
    NumericalError,
    SolverOptions,
    SolverReport,
    rbpg_solve,
    reference_solve,
)

__version__ = "0.1.0"
