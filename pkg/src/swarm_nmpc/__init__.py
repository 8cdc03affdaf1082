"""Receding-horizon NMPC swarm control for agile fixed-wing aircraft.

Simulates teams of aerobatic fixed-wing vehicles flying in close
proximity: direct-transcription trajectory optimization with shared
trajectory obstacle constraints, discrete time-varying LQR tracking,
a lock-step multi-agent harness with stochastic disturbances, a
Hoeffding bound on tube-violation probability, and swarm metrics
(energy density, pairwise distances).
"""

from .aircraft import AircraftParams, SurfaceSpec, default_params, load_aircraft_params
from .coordination import (
    TrajectoryBus,
    TrajectoryMessage,
    TrajectoryObstacleMap,
    decode_message,
    encode_message,
    pairwise_separation,
)
from .dynamics import (
    GimbalLockError,
    backwash_velocity,
    discretize,
    dynamics,
    euler_rate_transform,
    flat_plate_coefficient,
    integrate_rk4,
    linearize,
    surface_velocity,
    total_forces_moments,
)
from .harness import batch, run_trial
from .hull import convex_hull_volume
from .metrics import DistanceStats, SedInput, distance_stats, sed, time_averaged_sed
from .records import TrialRecord, load_records, read_record
from .scenario import ScenarioConfig, generate_reference, load_scenario, save_scenario
from .solver import SolveReport, SolverConfig, SolverError, solve
from .states import ControlInput, RigidState
from .trajectory import Bounds, CostWeights, KnotTrajectory
from .transcription import NlpProblem, ObstacleConstraintSet, build_nlp, obstacle_residuals, simpson_defect
from .trim import find_trim
from .tvlqr import GainSchedule, TrackingWeights, feedback, riccati_backward
from .verification import (
    BoundReport,
    TubeSpec,
    ViolationSample,
    cross_validate,
    derive_separation,
    ecdf,
    hoeffding_bound,
    tube_violation,
    verify_records,
)

__version__ = "0.1.0"
