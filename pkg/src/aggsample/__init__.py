"""Self-organising adaptive spatial sampling over simulated device networks."""
from .analysis import (
    METRICS_HEADER,
    MessageCost,
    MetricsRow,
    PathErrorOracle,
    RegionPartition,
    Verdict,
    check_contiguity,
    contiguous_pairs,
    extract_partition,
    message_cost,
    partition_metrics,
    path_error,
    region_error,
    verify_follower_bounds,
    verify_local_optimality,
    verify_within_error,
)
from .exceptions import (
    AggSampleError,
    ConfigurationError,
    DuplicateDevice,
    IncompleteSnapshot,
    InvalidArgument,
    MalformedPartition,
    ParseError,
    SimulationError,
)
from .experiment import (
    ExperimentConfig,
    RunResult,
    aggregate,
    default_eta,
    parse_config,
    parse_config_text,
    run_experiment,
    sweep,
)
from .runtime import (
    Context,
    MinimisingShare,
    Scheduler,
    Snapshot,
    Stabilisation,
    World,
    minimising_share,
    outputs_equal,
    run_until_stable,
    snapshots_equal,
    step,
    take_snapshot,
    write_trace_csv,
)
from .sampler import (
    DISCARD,
    Candidacy,
    EdgeMetric,
    GradientProgram,
    SamplerConfig,
    SamplerProgram,
    StrengthPolicy,
    discard_candidacy,
    edge_error,
    expansion_logic,
    gradient_as_share,
    gradient_program,
    leader_strength,
    sampler_as_share,
    sampler_program,
    winning_candidacies,
)
from .signals import (
    SignalField,
    SignalSpec,
    constant,
    dynamic,
    gauss,
    load_signal_csv,
    make_signal,
    multigauss,
    read_sensor,
    recorded_signal,
    uniform,
)
from .topology import (
    Deployment,
    NetworkGraph,
    build_deployment,
    build_network,
    load_stations,
    read_station_ids,
)

__version__ = "0.1.0"
