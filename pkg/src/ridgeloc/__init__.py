"""Target localization from UAV pixel observations and laser ranges.

The fused estimators combine both sensors through min-max normalized least
squares, optionally stabilized by ridge regression.
"""

from .camera import (CameraIntrinsics, CheiralityWarning, PlatformPose, ProjectionMatrix, build_projection,
                     forward_intersection, pixel_ray, project)
from .errors import *  # noqa: F401,F403
from .fusion import (ObservationSet, los_observation, normalize_stacked, seed_point, solve_fused,
                     solve_fused_unnormalized, stack_observations)
from .numeric import condition_number, rank_with_tolerance, singular_values, solve_least_squares
from .ranging import LosObservation, RangeObservation, los_single_shot, range_jacobian, range_residuals, solve_range
from .ridge import RidgeConfig, hkb_ridge_parameter, ridge_solve_step, solve_fused_ridge
from .simulation import (ALGORITHMS, NoiseSpec, ScenarioSpec, aggregate_stats, generate_arc_scenario, inject_noise,
                         intersection_error_bound, run_monte_carlo, synthesize_observations)
from .solver import SolveReport, SolverConfig
from .vision import VisionObservation, solve_vision, vision_jacobian, vision_residuals

__version__ = "0.1.0"
