"""Two-level closed-loop RAN slice resource management sandbox.

An RB auction hands spectrum to tenants, slices get placed round-robin on
virtualized DUs, and two interconnected learning loops schedule RBs to
flying/ground cars (loop 1) and rebalance slice budgets (loop 2).
"""

from .auction import (
    AuctionConfig,
    AuctionOutcome,
    TenantBid,
    brute_force_optimal,
    determine_winners,
    tenant_utility,
    vcg_payments,
)
from .config import ScenarioConfig, desk_config, full_scale_config
from .delay import (
    DelayBreakdown,
    FlowStats,
    QueueStatus,
    budget_fulfillment,
    orchestration,
    queue_status,
    queueing_delay,
    simulate_mm1,
    slice_satisfaction,
    tx_delays,
)
from .loops import (
    CouplingFeedback,
    Loop1State,
    Loop2State,
    LoopAction,
    PenaltyWeights,
    loop1_reward,
    loop1_schedule,
    loop2_delta,
    loop2_reward,
    main_reward,
)
from .mobility import (
    Car,
    GeometryReport,
    MobilityModel,
    ORU,
    coverage_probability,
    distance,
    dwell_time,
    remaining_distance,
)
from .radio import (
    ChannelSampler,
    ChannelState,
    Numerology,
    RBAssignment,
    car_rate,
    check_orthogonality,
    default_numerology,
    rb_rate,
    snr,
)
from .rl import (
    EpsilonSchedule,
    Experience,
    Learner,
    ParameterBroadcast,
    QNetwork,
    ReplayMemory,
    n_step_return,
    select_action,
    train_step,
)
from .runner import RunReport, baseline_random, compare_auction, run
from .slicing import Service, Slice, VODU, initial_split, rb_usage, round_robin_place

__version__ = "0.1.0"
