"""Multiplexed soliton link simulator.

A four-channel optical transmitter built from a photonic chip power ledger,
split-step fiber propagation with lumped amplification, and a receiver that
decodes each pulse through direct scattering of the nonlinear Schrodinger
equation.  The harness sweeps distance and seed grids and reports bit error
rates against hard- and soft-decision FEC thresholds.
"""

from .budget import (
    ComponentSpec,
    LinkBudgetReport,
    SafetyCheck,
    cascade,
    check_input_power_limit,
    dbm_to_watts,
    equalize_peaks,
    required_launch_gain,
    transmitter_chain,
    watts_to_dbm,
)
from .config import (
    ConfigError,
    FecThresholds,
    ScenarioConfig,
    config_from_dict,
    config_to_dict,
    default_config,
    load_config,
    with_full_scale,
)
from .fiber import (
    EdfaParams,
    FiberError,
    FiberParams,
    LinkResult,
    StepControl,
    dispersion_length_km,
    edfa_amplify,
    fundamental_soliton,
    group_delay_shift,
    osnr_estimate,
    propagate_link,
    soliton_power,
    ssfm_span,
)
from .harness import (
    ResultRow,
    ScenarioSummary,
    budget_report,
    eye_export,
    plan_segments,
    rows_to_csv,
    run_point,
    run_scenario,
    summarize,
)
from .receiver import (
    EigenvalueError,
    NlftPoint,
    NormalizationScales,
    NormalizedField,
    RxParams,
    channel_compensate,
    decide_and_count,
    demux,
    find_eigenvalue,
    receive_channel,
    zs_scatter,
)
from .selftest import run_selftest
from .signal import (
    AliasingError,
    ComplexEnvelope,
    GridError,
    SignalGrid,
    average_power,
    butterworth_filter,
    delay,
    frequency_shift,
    make_grid,
    peak_power,
    power_bandwidth,
)
from .transmitter import (
    ChannelPlan,
    MzmParams,
    PulseParams,
    TimingError,
    TimingSolution,
    TxError,
    assemble_tx,
    calibrate_drive,
    qpsk_demap,
    qpsk_map,
    timing_solve,
)

__version__ = "0.1.0"

__all__ = [
    "AliasingError",
    "ChannelPlan",
    "ComplexEnvelope",
    "ComponentSpec",
    "ConfigError",
    "EdfaParams",
    "EigenvalueError",
    "FecThresholds",
    "FiberError",
    "FiberParams",
    "GridError",
    "LinkBudgetReport",
    "LinkResult",
    "MzmParams",
    "NlftPoint",
    "NormalizationScales",
    "NormalizedField",
    "PulseParams",
    "ResultRow",
    "RxParams",
    "SafetyCheck",
    "ScenarioConfig",
    "ScenarioSummary",
    "SignalGrid",
    "StepControl",
    "TimingError",
    "TimingSolution",
    "TxError",
    "assemble_tx",
    "average_power",
    "budget_report",
    "butterworth_filter",
    "calibrate_drive",
    "cascade",
    "channel_compensate",
    "check_input_power_limit",
    "config_from_dict",
    "config_to_dict",
    "dbm_to_watts",
    "decide_and_count",
    "default_config",
    "delay",
    "demux",
    "dispersion_length_km",
    "edfa_amplify",
    "equalize_peaks",
    "eye_export",
    "find_eigenvalue",
    "frequency_shift",
    "fundamental_soliton",
    "group_delay_shift",
    "load_config",
    "make_grid",
    "osnr_estimate",
    "peak_power",
    "plan_segments",
    "power_bandwidth",
    "propagate_link",
    "qpsk_demap",
    "qpsk_map",
    "receive_channel",
    "required_launch_gain",
    "rows_to_csv",
    "run_point",
    "run_scenario",
    "run_selftest",
    "soliton_power",
    "ssfm_span",
    "summarize",
    "timing_solve",
    "transmitter_chain",
    "watts_to_dbm",
    "with_full_scale",
    "zs_scatter",
]
