"""aerotwin: a desk-scale emulator of a UAV-mounted cellular base station.

A portable base station flies a waypoint mission over fixed ground
users; every simulation step the pairwise channel matrix is
recomputed from the geometry, link adaptation picks a modulation per
user, a round-robin scheduler shares the downlink resource blocks,
and ping latency is sampled. Runs write timestamped logs that the
post-processing pipeline turns into CSV tables, KML tracks and
dual-axis plots.
"""

from .channel import (
    ChannelMatrix,
    LinkState,
    PathLossModel,
    RadioConfig,
    channel_matrix,
    link_snr,
    noise_floor_dBm,
    path_loss,
)
from .config import ExperimentConfig, NodeSpec, load_experiment_config, parse_experiment_config
from .flightsim import (
    FlightPlan,
    Phase,
    VehicleSim,
    VehicleState,
    Waypoint,
    load_qgc_plan,
    mission_duration,
    parse_flight_plan,
    position_at,
)
from .geodesy import EARTH_RADIUS_M, GeoPosition, haversine_distance, slant_distance
from .mac import (
    CellConfig,
    Mcs,
    SchedulerState,
    SubframeAllocation,
    bits_per_rb,
    per_user_throughput,
    schedule_subframe,
    select_mcs,
)
from .orchestrator import (
    RunHandle,
    RunResult,
    apply_command,
    reset_experiment,
    run_experiment,
    start_experiment,
    stop_experiment,
)
from .postproc import CsvTable, generate_kml, logs_to_csv, merge_csv, plot_series
from .traffic import PingConfig, PingSample, ThroughputSample, iperf_report, ping_rtt

__version__ = "0.1.0"
