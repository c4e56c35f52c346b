"""Variational N-body laboratory.

Free-time action minimizers and Jacobi-Maupertuis geodesics at prescribed
positive energy, high-accuracy flow integration, long-time asymptotic
classification, and the partially-hyperbolic limit experiment.
"""

from .action import (
    DiscretePath,
    action_fixed_time,
    action_gradient,
    action_supercritical,
    jm_length,
    path_energy_profile,
    path_from_endpoints,
)
from .asymptotics import (
    HYPERBOLIC,
    PARTIALLY_HYPERBOLIC,
    UNRESOLVED,
    classify_motion,
    detect_clusters,
    fit_final_configuration,
    growth_exponent,
)
from .core import (
    barycenter,
    center_of_mass,
    lagrangian,
    mass_distance,
    mass_inner,
    mass_norm,
    min_mutual_distance,
    potential,
    potential_gradient,
)
from .errors import (
    BracketError,
    CollisionError,
    ConstructionError,
    EnergyDriftError,
    ExperimentError,
)
from .experiments import (
    build_direction_sequence,
    build_hyperbolic_ray,
    calibration_residual,
    continuity_probe,
    estimate_horofunction,
    flagship_preset,
    partially_hyperbolic_experiment,
)
from .flow import State, Termination, Trajectory, energy, integrate, shoot_and_compare
from .kernels import BACKEND as KERNEL_BACKEND
from .minimizer import (
    FixedTimeResult,
    FreeTimeResult,
    MinimizeOptions,
    check_interior_collisionfree,
    minimize_fixed,
    minimize_free_time,
    refine,
)

__version__ = "0.1.0"
