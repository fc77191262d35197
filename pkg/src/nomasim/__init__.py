"""Downlink NOMA network simulator.

Quantifies how channel disparity between clustered users affects rates,
power allocation and transmission success in a large network with
Poisson-distributed interfering base stations.
"""

from .allocation import (
    AllocationMode,
    PowerAllocation,
    fixed_fractions,
    min_power_qos,
    sumrate_max_weak_qos,
)
from .channel import ChannelParams, UserState, aggregate_interference, link_gain, make_user_state
from .clustering import (
    Cluster,
    ClusterStrategy,
    ControlledDisparity,
    DiskAnnulus,
    FixedDisk,
    InDiskHalfRho,
    OrderingMethod,
    RandomInCell,
    SinrThreshold,
    cluster_from_pool,
    order_users,
    select_cluster,
)
from .experiment import (
    ComparisonResult,
    ComparisonRow,
    SimConfig,
    StrategySpec,
    SweepResult,
    SweepRow,
    TrialRecord,
    TrialStreams,
    aggregate,
    disparity_values,
    evaluate_cluster,
    run_disparity_sweep,
    run_strategy_comparison,
    run_trial,
    trial_rng,
)
from .geometry import (
    MaxAttemptsExceeded,
    NetworkRealization,
    PlacementResult,
    in_cell,
    place_disparity_pair,
    sample_realization,
    sample_user_in_cell,
)
from .sic import DecodingOutcome, QoSTargets, decode_cluster, necessary_condition, sinr_of

__version__ = "0.1.0"
