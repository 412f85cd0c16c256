"""gridmob: a seedable grid-city mobility simulator and stop-detection sandbox.

Build a block city, plan agent days with a circadian-constrained
exploration/preferential-return process, realize them as minute-level
trajectories with constrained Brownian motion, sparsify into bursty noisy
GPS-like pings, and score stop-detection algorithms against the known
ground truth.
"""

from .agents import Agent, make_agents
from .city import (
    BLOCK_METERS,
    BUILDING_TYPES,
    STREET,
    Building,
    City,
    GardenSpec,
    StreetGraph,
    create_city,
    generate_garden_layout,
)
from .diary import (
    AgentVisitState,
    CircadianSchedule,
    EPRParams,
    allowed_types,
    condense_destinations,
    constrain_row,
    generate_destination_diary,
    initial_visit_counts,
    unconstrained_row,
)
from .errors import (
    BuildingConflictError,
    GridMobError,
    InvalidArgumentError,
    MissingTrajectoryError,
    NoPathError,
)
from .experiments import (
    ExperimentConfig,
    RunReport,
    derive_seed,
    generate_population_dataset,
    load_run_report,
    regenerate_from_manifest,
    run_example1,
    run_example2,
)
from .pings import (
    BurstSchedule,
    NHPPParams,
    NoiseParams,
    sample_bursts,
    sample_ping_times,
    sample_traj_hier_nhpp,
    sparsify,
)
from .stops import (
    NOISE,
    Stop,
    StopMetrics,
    evaluate_against_diary,
    lachesis,
    stops_from_labels,
    temporal_dbscan,
)
from .trajectory import (
    MotionConfig,
    MotionParams,
    TrajectoryResult,
    generate_trajectory,
    sample_step_indoor,
    sample_step_travel,
    start_travel,
)

__version__ = "0.1.0"
